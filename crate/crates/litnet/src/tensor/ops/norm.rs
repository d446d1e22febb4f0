//! Batch normalization and PReLU.

use super::{finish, unify_tape};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel batch normalization over `[N,C,H,W]`.
///
/// Train mode normalizes by the biased batch variance and returns updated
/// running statistics `(mean, var)` — the running variance uses the unbiased
/// estimate, updated as `new = (1-momentum)*old + momentum*batch`. Eval mode
/// normalizes by the provided running statistics and returns `None`.
///
/// Train mode requires at least two samples per channel (`N*H*W >= 2`).
#[allow(clippy::too_many_arguments)]
pub fn batch_norm2d<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: BnMode,
    eps: f64,
    momentum: f64,
) -> Result<(Tensor<T>, Option<(Vec<T>, Vec<T>)>)> {
    let (n, c, h, w) = x.shape().nchw()?;
    for (name, t) in [
        ("gamma", gamma),
        ("beta", beta),
        ("running_mean", running_mean),
        ("running_var", running_var),
    ] {
        if t.dims() != [c] {
            return Err(Error::shape("batch_norm2d", format!("{name} [{c}]"), format!("{}", t.shape())));
        }
    }
    let hw = h * w;
    let m = n * hw;
    if mode == BnMode::Train && m < 2 {
        return Err(Error::invalid(
            "batch_norm2d",
            format!("train mode needs at least 2 samples per channel, got N*H*W = {m}"),
        ));
    }
    let tape = unify_tape(&[x, gamma, beta])?;
    let eps_t = T::cast(eps);
    let data = x.data();
    let gam = gamma.data();
    let bet = beta.data();

    // Per-channel element visitor: channel planes are contiguous per (n, c).
    let chan_indices = move |ci: usize| (0..n).flat_map(move |ni| {
        let base = (ni * c + ci) * hw;
        base..base + hw
    });

    match mode {
        BnMode::Eval => {
            let rm = running_mean.data();
            let rv = running_var.data();
            let mut out = vec![T::zero(); x.numel()];
            let mut scale = Vec::with_capacity(c);
            for ci in 0..c {
                let s = gam[ci] / (rv[ci] + eps_t).sqrt();
                scale.push(s);
                let shift = bet[ci] - rm[ci] * s;
                for idx in chan_indices(ci) {
                    out[idx] = data[idx] * s + shift;
                }
            }
            let out = Tensor::from_vec([n, c, h, w], out)?;
            let x_node = x.node();
            let g_node = gamma.node();
            let b_node = beta.node();
            let x_data = x.data_arc();
            let rm = running_mean.data_arc();
            let rv = running_var.data_arc();
            let gam = gamma.data_arc();
            let numel = x.numel();
            let out = finish(out, tape, move |go, store| {
                if let Some(node) = x_node {
                    let mut g = vec![T::zero(); numel];
                    for ci in 0..c {
                        let s = gam[ci] / (rv[ci] + eps_t).sqrt();
                        for idx in chan_indices(ci) {
                            g[idx] = go[idx] * s;
                        }
                    }
                    store.accumulate_owned(node, g);
                }
                if let Some(node) = g_node {
                    let mut g = vec![T::zero(); c];
                    for ci in 0..c {
                        let inv = T::one() / (rv[ci] + eps_t).sqrt();
                        let mut acc = T::zero();
                        for idx in chan_indices(ci) {
                            acc = acc + go[idx] * (x_data[idx] - rm[ci]) * inv;
                        }
                        g[ci] = acc;
                    }
                    store.accumulate_owned(node, g);
                }
                if let Some(node) = b_node {
                    let mut g = vec![T::zero(); c];
                    for ci in 0..c {
                        let mut acc = T::zero();
                        for idx in chan_indices(ci) {
                            acc = acc + go[idx];
                        }
                        g[ci] = acc;
                    }
                    store.accumulate_owned(node, g);
                }
            });
            Ok((out, None))
        }
        BnMode::Train => {
            let inv_m = T::one() / T::cast(m as f64);
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ci in 0..c {
                let mut acc = T::zero();
                for idx in chan_indices(ci) {
                    acc = acc + data[idx];
                }
                let mu = acc * inv_m;
                mean[ci] = mu;
                let mut vacc = T::zero();
                for idx in chan_indices(ci) {
                    let d = data[idx] - mu;
                    vacc = vacc + d * d;
                }
                var[ci] = vacc * inv_m;
            }

            let mut xhat = vec![T::zero(); x.numel()];
            let mut out = vec![T::zero(); x.numel()];
            let mut inv_std = Vec::with_capacity(c);
            for ci in 0..c {
                let istd = T::one() / (var[ci] + eps_t).sqrt();
                inv_std.push(istd);
                for idx in chan_indices(ci) {
                    let xh = (data[idx] - mean[ci]) * istd;
                    xhat[idx] = xh;
                    out[idx] = xh * gam[ci] + bet[ci];
                }
            }

            // Unbiased variance for the running estimate.
            let mom = T::cast(momentum);
            let keep = T::one() - mom;
            let bessel = T::cast(m as f64 / (m as f64 - 1.0));
            let new_mean: Vec<T> = running_mean
                .data()
                .iter()
                .zip(&mean)
                .map(|(&old, &new)| old * keep + new * mom)
                .collect();
            let new_var: Vec<T> = running_var
                .data()
                .iter()
                .zip(&var)
                .map(|(&old, &new)| old * keep + new * bessel * mom)
                .collect();

            let out = Tensor::from_vec([n, c, h, w], out)?;
            let x_node = x.node();
            let g_node = gamma.node();
            let b_node = beta.node();
            let gam = gamma.data_arc();
            let xhat = std::sync::Arc::new(xhat);
            let numel = x.numel();
            let out = finish(out, tape, move |go, store| {
                // Channel sums of dy and dy*xhat drive all three gradients.
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dy_xhat = vec![T::zero(); c];
                for ci in 0..c {
                    let mut s = T::zero();
                    let mut sx = T::zero();
                    for idx in chan_indices(ci) {
                        s = s + go[idx];
                        sx = sx + go[idx] * xhat[idx];
                    }
                    sum_dy[ci] = s;
                    sum_dy_xhat[ci] = sx;
                }
                if let Some(node) = x_node {
                    let mut g = vec![T::zero(); numel];
                    for ci in 0..c {
                        let coeff = gam[ci] * inv_std[ci] * inv_m;
                        let mf = T::cast(m as f64);
                        for idx in chan_indices(ci) {
                            g[idx] = coeff
                                * (go[idx] * mf - sum_dy[ci] - xhat[idx] * sum_dy_xhat[ci]);
                        }
                    }
                    store.accumulate_owned(node, g);
                }
                if let Some(node) = g_node {
                    store.accumulate(node, &sum_dy_xhat);
                }
                if let Some(node) = b_node {
                    store.accumulate(node, &sum_dy);
                }
            });
            Ok((out, Some((new_mean, new_var))))
        }
    }
}

/// PReLU with per-channel slopes `alpha [C]` (or a single shared slope
/// `alpha [1]`) applied to `[N,C,H,W]`.
pub fn prelu<T: Element>(x: &Tensor<T>, alpha: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let shared = match alpha.dims() {
        [1] => true,
        [ac] if *ac == c => false,
        _ => {
            return Err(Error::shape(
                "prelu",
                format!("alpha [{c}] or [1]"),
                format!("{}", alpha.shape()),
            ))
        }
    };
    let tape = unify_tape(&[x, alpha])?;
    let hw = h * w;
    let data = x.data();
    let al = alpha.data();
    let mut out = vec![T::zero(); x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            let a = if shared { al[0] } else { al[ci] };
            let base = (ni * c + ci) * hw;
            for idx in base..base + hw {
                let v = data[idx];
                out[idx] = if v >= T::zero() { v } else { v * a };
            }
        }
    }
    let out = Tensor::from_vec([n, c, h, w], out)?;
    let x_node = x.node();
    let a_node = alpha.node();
    let x_data = x.data_arc();
    let al = alpha.data_arc();
    let numel = x.numel();
    let alen = alpha.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = x_node {
            let mut g = vec![T::zero(); numel];
            for ni in 0..n {
                for ci in 0..c {
                    let a = if shared { al[0] } else { al[ci] };
                    let base = (ni * c + ci) * hw;
                    for idx in base..base + hw {
                        g[idx] = if x_data[idx] >= T::zero() { go[idx] } else { go[idx] * a };
                    }
                }
            }
            store.accumulate_owned(node, g);
        }
        if let Some(node) = a_node {
            let mut g = vec![T::zero(); alen];
            for ni in 0..n {
                for ci in 0..c {
                    let slot = if shared { 0 } else { ci };
                    let base = (ni * c + ci) * hw;
                    for idx in base..base + hw {
                        if x_data[idx] < T::zero() {
                            g[slot] = g[slot] + go[idx] * x_data[idx];
                        }
                    }
                }
            }
            store.accumulate_owned(node, g);
        }
    }))
}

//! Reductions: full means/sums and the keep-dim pools used by attention.

use super::{finish, unify_tape};
use crate::error::Result;
use crate::tensor::{Element, Tensor};

/// Mean over every element, returned as a `[1]` scalar.
pub fn mean_all<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let n = x.numel();
    let inv = T::one() / T::cast(n as f64);
    let sum = x.data().iter().fold(T::zero(), |acc, &v| acc + v);
    let out = Tensor::scalar(sum * inv);
    let node = x.node();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let g = go[0] * inv;
            store.accumulate_owned(node, vec![g; n]);
        }
    }))
}

/// Sum over every element, returned as a `[1]` scalar.
pub fn sum_all<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let n = x.numel();
    let sum = x.data().iter().fold(T::zero(), |acc, &v| acc + v);
    let out = Tensor::scalar(sum);
    let node = x.node();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            store.accumulate_owned(node, vec![go[0]; n]);
        }
    }))
}

/// Global average pool: `[N,C,H,W] -> [N,C,1,1]`.
pub fn spatial_mean<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let tape = unify_tape(&[x])?;
    let hw = h * w;
    let inv = T::one() / T::cast(hw as f64);
    let data = x.data();
    let mut out = Vec::with_capacity(n * c);
    for nc in 0..n * c {
        let block = &data[nc * hw..(nc + 1) * hw];
        out.push(block.iter().fold(T::zero(), |acc, &v| acc + v) * inv);
    }
    let out = Tensor::from_vec([n, c, 1, 1], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for nc in 0..n * c {
                let gv = go[nc] * inv;
                for slot in &mut g[nc * hw..(nc + 1) * hw] {
                    *slot = gv;
                }
            }
            store.accumulate_owned(node, g);
        }
    }))
}

/// Global max pool: `[N,C,H,W] -> [N,C,1,1]`. The gradient routes to the
/// first maximal element of each plane.
pub fn spatial_max<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let tape = unify_tape(&[x])?;
    let hw = h * w;
    let data = x.data();
    let mut out = Vec::with_capacity(n * c);
    let mut arg = Vec::with_capacity(n * c);
    for nc in 0..n * c {
        let block = &data[nc * hw..(nc + 1) * hw];
        let mut best = block[0];
        let mut best_i = 0usize;
        for (i, &v) in block.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                best_i = i;
            }
        }
        out.push(best);
        arg.push(nc * hw + best_i);
    }
    let out = Tensor::from_vec([n, c, 1, 1], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for (nc, &idx) in arg.iter().enumerate() {
                g[idx] = g[idx] + go[nc];
            }
            store.accumulate_owned(node, g);
        }
    }))
}

/// Mean across channels: `[N,C,H,W] -> [N,1,H,W]`.
pub fn channel_mean<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let tape = unify_tape(&[x])?;
    let hw = h * w;
    let inv = T::one() / T::cast(c as f64);
    let data = x.data();
    let mut out = vec![T::zero(); n * hw];
    for ni in 0..n {
        for ci in 0..c {
            let src = &data[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
            let dst = &mut out[ni * hw..(ni + 1) * hw];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
        for d in &mut out[ni * hw..(ni + 1) * hw] {
            *d = *d * inv;
        }
    }
    let out = Tensor::from_vec([n, 1, h, w], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for ni in 0..n {
                let gsrc = &go[ni * hw..(ni + 1) * hw];
                for ci in 0..c {
                    let dst = &mut g[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    for (d, &s) in dst.iter_mut().zip(gsrc) {
                        *d = s * inv;
                    }
                }
            }
            store.accumulate_owned(node, g);
        }
    }))
}

/// Max across channels: `[N,C,H,W] -> [N,1,H,W]`. Ties route to the lowest
/// channel index.
pub fn channel_max<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let tape = unify_tape(&[x])?;
    let hw = h * w;
    let data = x.data();
    let mut out = Vec::with_capacity(n * hw);
    let mut arg = Vec::with_capacity(n * hw);
    for ni in 0..n {
        for p in 0..hw {
            let mut best = data[ni * c * hw + p];
            let mut best_c = 0usize;
            for ci in 1..c {
                let v = data[(ni * c + ci) * hw + p];
                if v > best {
                    best = v;
                    best_c = ci;
                }
            }
            out.push(best);
            arg.push((ni * c + best_c) * hw + p);
        }
    }
    let out = Tensor::from_vec([n, 1, h, w], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for (oi, &idx) in arg.iter().enumerate() {
                g[idx] = g[idx] + go[oi];
            }
            store.accumulate_owned(node, g);
        }
    }))
}

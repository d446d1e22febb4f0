//! Sub-pixel rearrangement and bicubic upsampling.

use super::{finish, unify_tape};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `[N, C*r^2, H, W] -> [N, C, H*r, W*r]`.
///
/// Sub-pixel layout is row-major: source channel `c*r^2 + dy*r + dx` supplies
/// output pixel `(y*r+dy, x*r+dx)`. Exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Element>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c_in, h, w) = x.shape().nchw()?;
    if r == 0 || c_in % (r * r) != 0 {
        return Err(Error::invalid(
            "pixel_shuffle",
            format!("{c_in} channels not divisible by r^2 = {}", r * r),
        ));
    }
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let tape = unify_tape(&[x])?;
    let data = x.data();
    let mut out = vec![T::zero(); x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let src_c = ci * r * r + dy * r + dx;
                    for y in 0..h {
                        let src = ((ni * c_in + src_c) * h + y) * w;
                        let dst = ((ni * c + ci) * oh + y * r + dy) * ow + dx;
                        for xx in 0..w {
                            out[dst + xx * r] = data[src + xx];
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec([n, c, oh, ow], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for ni in 0..n {
                for ci in 0..c {
                    for dy in 0..r {
                        for dx in 0..r {
                            let src_c = ci * r * r + dy * r + dx;
                            for y in 0..h {
                                let src = ((ni * c_in + src_c) * h + y) * w;
                                let dst = ((ni * c + ci) * oh + y * r + dy) * ow + dx;
                                for xx in 0..w {
                                    g[src + xx] = go[dst + xx * r];
                                }
                            }
                        }
                    }
                }
            }
            store.accumulate_owned(node, g);
        }
    }))
}

/// `[N, C, H*r, W*r] -> [N, C*r^2, H, W]`, the exact inverse of
/// [`pixel_shuffle`]: a 2x2 block `[[a,b],[c,d]]` of a single channel becomes
/// the channel quadruple `(a, b, c, d)`.
pub fn pixel_unshuffle<T: Element>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c, ih, iw) = x.shape().nchw()?;
    if r == 0 || ih % r != 0 || iw % r != 0 {
        return Err(Error::invalid(
            "pixel_unshuffle",
            format!("spatial dims {ih}x{iw} not divisible by r = {r}"),
        ));
    }
    let (h, w) = (ih / r, iw / r);
    let c_out = c * r * r;
    let tape = unify_tape(&[x])?;
    let data = x.data();
    let mut out = vec![T::zero(); x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let dst_c = ci * r * r + dy * r + dx;
                    for y in 0..h {
                        let dst = ((ni * c_out + dst_c) * h + y) * w;
                        let src = ((ni * c + ci) * ih + y * r + dy) * iw + dx;
                        for xx in 0..w {
                            out[dst + xx] = data[src + xx * r];
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec([n, c_out, h, w], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for ni in 0..n {
                for ci in 0..c {
                    for dy in 0..r {
                        for dx in 0..r {
                            let dst_c = ci * r * r + dy * r + dx;
                            for y in 0..h {
                                let dst = ((ni * c_out + dst_c) * h + y) * w;
                                let src = ((ni * c + ci) * ih + y * r + dy) * iw + dx;
                                for xx in 0..w {
                                    g[src + xx * r] = go[dst + xx];
                                }
                            }
                        }
                    }
                }
            }
            store.accumulate_owned(node, g);
        }
    }))
}

/// Catmull-Rom kernel (a = -0.5) evaluated at distance `t >= 0`.
fn cubic_kernel(t: f64) -> f64 {
    const A: f64 = -0.5;
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

/// Per-axis tap positions and weights for half-pixel-center sampling.
fn cubic_taps(out_len: usize, s: usize, in_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = s as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) / scale - 0.5;
            let base = src.floor() as isize;
            let mut idx = [0usize; 4];
            let mut wts = [0f64; 4];
            for (j, tap) in (-1..=2).enumerate() {
                let p = base + tap;
                idx[j] = p.clamp(0, in_len as isize - 1) as usize;
                wts[j] = cubic_kernel((src - p as f64).abs());
            }
            (idx, wts)
        })
        .collect()
}

/// Bicubic upsampling by an integer factor with half-pixel centers
/// (align-corners = false) and edge clamping. Not differentiable: the input
/// must be untracked.
pub fn bicubic_upsample<T: Element>(x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    if s == 0 {
        return Err(Error::invalid("bicubic_upsample", "scale 0".to_string()));
    }
    if x.requires_grad() {
        return Err(Error::Tape(
            "bicubic_upsample is not differentiable; detach the input".into(),
        ));
    }
    let (oh, ow) = (h * s, w * s);
    let x_taps = cubic_taps(ow, s, w);
    let y_taps = cubic_taps(oh, s, h);
    let data = x.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    // Separable: horizontal pass into a row buffer, then vertical.
    let mut rows = vec![0f64; h * ow];
    for nc in 0..n * c {
        let plane = &data[nc * h * w..(nc + 1) * h * w];
        for y in 0..h {
            let src = &plane[y * w..(y + 1) * w];
            let dst = &mut rows[y * ow..(y + 1) * ow];
            for (o, (idx, wts)) in x_taps.iter().enumerate() {
                dst[o] = wts[0] * src[idx[0]].as_f64()
                    + wts[1] * src[idx[1]].as_f64()
                    + wts[2] * src[idx[2]].as_f64()
                    + wts[3] * src[idx[3]].as_f64();
            }
        }
        let out_plane = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
        for (oy, (idx, wts)) in y_taps.iter().enumerate() {
            let r0 = &rows[idx[0] * ow..(idx[0] + 1) * ow];
            let r1 = &rows[idx[1] * ow..(idx[1] + 1) * ow];
            let r2 = &rows[idx[2] * ow..(idx[2] + 1) * ow];
            let r3 = &rows[idx[3] * ow..(idx[3] + 1) * ow];
            let dst = &mut out_plane[oy * ow..(oy + 1) * ow];
            for ox in 0..ow {
                dst[ox] = T::cast(
                    wts[0] * r0[ox] + wts[1] * r1[ox] + wts[2] * r2[ox] + wts[3] * r3[ox],
                );
            }
        }
    }
    Tensor::from_vec([n, c, oh, ow], out)
}

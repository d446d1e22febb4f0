//! Channel concatenation, channel slicing, and spatial cropping.

use super::{finish, unify_tape};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Concatenate along the channel axis. A single input is returned as-is.
pub fn concat_channels<T: Element>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if inputs.is_empty() {
        return Err(Error::invalid("concat_channels", "empty input list".to_string()));
    }
    if inputs.len() == 1 {
        return Ok(inputs[0].clone());
    }
    let (n, _, h, w) = inputs[0].shape().nchw()?;
    let mut channels = Vec::with_capacity(inputs.len());
    for t in inputs {
        let (tn, tc, th, tw) = t.shape().nchw()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::shape(
                "concat_channels",
                format!("{}", inputs[0].shape()),
                format!("{}", t.shape()),
            ));
        }
        channels.push(tc);
    }
    let c_out: usize = channels.iter().sum();
    let hw = h * w;
    let tape = unify_tape(inputs)?;

    let mut out = vec![T::zero(); n * c_out * hw];
    for ni in 0..n {
        let mut offset = ni * c_out * hw;
        for t in inputs {
            let tc = t.dims()[1];
            let block = &t.data()[ni * tc * hw..(ni + 1) * tc * hw];
            out[offset..offset + tc * hw].copy_from_slice(block);
            offset += tc * hw;
        }
    }
    let out = Tensor::from_vec([n, c_out, h, w], out)?;

    let nodes: Vec<_> = inputs.iter().map(|t| t.node()).collect();
    Ok(finish(out, tape, move |go, store| {
        for (i, node) in nodes.iter().enumerate() {
            let Some(node) = node else { continue };
            let tc = channels[i];
            let before: usize = channels[..i].iter().sum();
            let mut g = vec![T::zero(); n * tc * hw];
            for ni in 0..n {
                let src = ni * c_out * hw + before * hw;
                g[ni * tc * hw..(ni + 1) * tc * hw].copy_from_slice(&go[src..src + tc * hw]);
            }
            store.accumulate_owned(*node, g);
        }
    }))
}

/// Channels `[start, start+count)` of `x`. The inverse of `concat_channels`:
/// slicing a concat at the matching offsets reproduces each input exactly.
pub fn slice_channels<T: Element>(x: &Tensor<T>, start: usize, count: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    if count == 0 || start + count > c {
        return Err(Error::invalid(
            "slice_channels",
            format!("range {start}..{} out of {c} channels", start + count),
        ));
    }
    let hw = h * w;
    let tape = unify_tape(&[x])?;
    let mut out = vec![T::zero(); n * count * hw];
    for ni in 0..n {
        let src = (ni * c + start) * hw;
        out[ni * count * hw..(ni + 1) * count * hw]
            .copy_from_slice(&x.data()[src..src + count * hw]);
    }
    let out = Tensor::from_vec([n, count, h, w], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for ni in 0..n {
                let dst = (ni * c + start) * hw;
                g[dst..dst + count * hw]
                    .copy_from_slice(&go[ni * count * hw..(ni + 1) * count * hw]);
            }
            store.accumulate_owned(node, g);
        }
    }))
}

/// Spatial window `[top, top+oh) x [left, left+ow)` of every plane.
pub fn crop_spatial<T: Element>(
    x: &Tensor<T>,
    top: usize,
    left: usize,
    oh: usize,
    ow: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    if oh == 0 || ow == 0 || top + oh > h || left + ow > w {
        return Err(Error::invalid(
            "crop_spatial",
            format!("window {top},{left} {oh}x{ow} out of {h}x{w}"),
        ));
    }
    let tape = unify_tape(&[x])?;
    let mut out = vec![T::zero(); n * c * oh * ow];
    let data = x.data();
    for nc in 0..n * c {
        for y in 0..oh {
            let src = nc * h * w + (top + y) * w + left;
            let dst = nc * oh * ow + y * ow;
            out[dst..dst + ow].copy_from_slice(&data[src..src + ow]);
        }
    }
    let out = Tensor::from_vec([n, c, oh, ow], out)?;
    let node = x.node();
    let numel = x.numel();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let mut g = vec![T::zero(); numel];
            for nc in 0..n * c {
                for y in 0..oh {
                    let dst = nc * h * w + (top + y) * w + left;
                    let src = nc * oh * ow + y * ow;
                    g[dst..dst + ow].copy_from_slice(&go[src..src + ow]);
                }
            }
            store.accumulate_owned(node, g);
        }
    }))
}

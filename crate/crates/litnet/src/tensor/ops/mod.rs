//! Tensor operators. Every differentiable op computes its output eagerly and,
//! when any operand is tracked, appends a backward rule to the shared tape.
//!
//! Conventions:
//! - activations and feature maps are NCHW;
//! - conv2d is cross-correlation with stride 1 and same-padding;
//! - elementwise binaries broadcast dims that are 1 against equal dims;
//! - reductions produce `[1]` scalars or keep-dim pooled maps.

mod conv;
mod elementwise;
mod norm;
mod reduce;
mod resample;
mod structure;

pub use conv::conv2d;
pub use elementwise::{abs, add, add_scalar, div, mul, relu, scale, sigmoid, sub};
pub use norm::{batch_norm2d, prelu, BnMode};
pub use reduce::{channel_max, channel_mean, mean_all, spatial_max, spatial_mean, sum_all};
pub use resample::{bicubic_upsample, pixel_shuffle, pixel_unshuffle};
pub use structure::{concat_channels, crop_spatial, slice_channels};

use super::tape::GradientStore;
use super::{Element, Tape, Tensor};
use crate::error::{Error, Result};

/// The single tape shared by tracked operands, if any. Mixing tapes is an
/// error: a tensor belongs to exactly one recording.
pub(crate) fn unify_tape<T: Element>(inputs: &[&Tensor<T>]) -> Result<Option<Tape<T>>> {
    let mut found: Option<&Tape<T>> = None;
    for t in inputs {
        if let Some(tp) = t.tape() {
            match found {
                None => found = Some(tp),
                Some(existing) if existing.same_tape(tp) => {}
                Some(_) => {
                    return Err(Error::Tape(
                        "operands are tracked on different tapes".into(),
                    ))
                }
            }
        }
    }
    Ok(found.cloned())
}

/// Attach `out` to the tape with `backward`, or return it untouched when no
/// operand was tracked.
pub(crate) fn finish<T, F>(out: Tensor<T>, tape: Option<Tape<T>>, backward: F) -> Tensor<T>
where
    T: Element,
    F: Fn(&[T], &mut GradientStore<T>) + Send + 'static,
{
    match tape {
        Some(tp) => tp.record(out, Box::new(backward)),
        None => out,
    }
}

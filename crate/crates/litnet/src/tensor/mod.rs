//! Dense NCHW tensors and reverse-mode automatic differentiation.
//!
//! Tensors are immutable: every operator allocates its output. A tensor may
//! carry a handle into a [`Tape`]; operators propagate that handle so that
//! [`Tensor::backward`] can replay the recorded graph in reverse. Untracked
//! tensors run the exact same kernels with zero tape overhead, which is the
//! inference path.

pub mod gradcheck;
pub mod ops;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Gradients, NodeId, Tape};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Element type identifier. Stored as a tag byte in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Dtype> {
        match tag {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// Floating-point element of a tensor. Implemented for `f32` (standard
/// precision, training) and `f64` (extended precision, gradient checking and
/// metrics).
pub trait Element:
    num_traits::Float
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn cast(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("read_le needs 4 bytes"))
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn cast(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("read_le needs 8 bytes"))
    }
}

/// Tensor dimensions, outermost first. Rank-4 tensors are NCHW.
#[derive(Clone, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Shape {
        Shape(dims.into())
    }

    pub fn scalar() -> Shape {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Destructure as (N, C, H, W); errors on any other rank.
    pub fn nchw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.0[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape("nchw", "rank-4 tensor", format!("{self}"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "scalar");
        }
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Dense tensor handle. Cloning is cheap (the buffer is shared).
#[derive(Clone)]
pub struct Tensor<T: Element> {
    shape: Shape,
    data: Arc<Vec<T>>,
    node: Option<NodeId>,
    tape: Option<Tape<T>>,
}

impl<T: Element> Tensor<T> {
    /// Build a tensor from a flat row-major buffer.
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Tensor<T>> {
        let shape = Shape::new(shape);
        if shape.numel() != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("{} elements for shape {shape}", shape.numel()),
                format!("{}", data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
            node: None,
            tape: None,
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Tensor<T> {
        let shape = Shape::new(shape);
        let n = shape.numel();
        Tensor {
            shape,
            data: Arc::new(vec![T::zero(); n]),
            node: None,
            tape: None,
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Tensor<T> {
        let shape = Shape::new(shape);
        let n = shape.numel();
        Tensor {
            shape,
            data: Arc::new(vec![value; n]),
            node: None,
            tape: None,
        }
    }

    pub fn scalar(value: T) -> Tensor<T> {
        Tensor::full([1usize], value)
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Tensor<T> {
        let shape = Shape::new(shape);
        let n = shape.numel();
        Tensor {
            shape,
            data: Arc::new((0..n).map(|i| f(i)).collect()),
            node: None,
            tape: None,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::shape("item", "1 element", format!("{}", self.shape)));
        }
        Ok(self.data[0])
    }

    /// True when the tensor participates in gradient computation.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Tape node backing this tensor, if it is tracked.
    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub(crate) fn tape(&self) -> Option<&Tape<T>> {
        self.tape.as_ref()
    }

    /// A view of the same buffer with no tape attachment.
    pub fn detach(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
            tape: None,
        }
    }

    /// Same buffer under a new shape with identical element count.
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor<T>> {
        let shape = Shape::new(shape);
        if shape.numel() != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{} elements", self.numel()),
                format!("{shape} ({} elements)", shape.numel()),
            ));
        }
        let mut out = self.clone();
        out.shape = shape;
        Ok(out)
    }

    pub(crate) fn with_tracking(mut self, tape: Tape<T>, node: NodeId) -> Tensor<T> {
        self.node = Some(node);
        self.tape = Some(tape);
        self
    }

    /// All elements finite?
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Run reverse-mode accumulation from this scalar back to every tracked
    /// leaf. Consumes the tape: a second call on the same tape errors.
    pub fn backward(&self) -> Result<Gradients<T>> {
        let tape = self
            .tape
            .as_ref()
            .ok_or_else(|| Error::Tape("backward on a tensor with no tape".into()))?;
        tape.backward(self)
    }

    /// Elementwise comparison, exact.
    pub fn bit_eq(&self, other: &Tensor<T>) -> bool {
        self.shape == other.shape && self.data.iter().zip(other.data.iter()).all(|(a, b)| a == b)
    }

    /// Largest |a - b| over all elements; errors on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "max_abs_diff",
                format!("{}", self.shape),
                format!("{}", other.shape),
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}>[{}]", T::DTYPE.name(), self.shape)?;
        if self.numel() <= 16 {
            write!(f, " {:?}", &self.data[..])?;
        }
        if let Some(node) = self.node {
            write!(f, " @node{}", node.index())?;
        }
        Ok(())
    }
}

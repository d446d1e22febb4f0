//! The gradient tape: a flat record of operations in execution order.
//!
//! Operators append `(output node, backward closure)` entries as they run, so
//! the list is already topologically sorted. `backward` walks it once in
//! reverse, accumulating output-gradients into input slots. The tape is
//! consumed by the walk; reusing it without building a new one is an error,
//! which rules out silent gradient accumulation across calls.

use std::sync::{Arc, Mutex};

use super::{Element, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-node gradient buffers, indexed by `NodeId`. Backward closures read the
/// incoming gradient slice and call [`GradientStore::accumulate`] for each
/// tracked input.
pub struct GradientStore<T> {
    slots: Vec<Option<Vec<T>>>,
    lens: Vec<usize>,
}

impl<T: Element> GradientStore<T> {
    fn new(lens: Vec<usize>) -> Self {
        GradientStore {
            slots: vec![None; lens.len()],
            lens,
        }
    }

    /// Add `values` into the node's gradient, allocating zeros on first touch.
    pub fn accumulate(&mut self, node: NodeId, values: &[T]) {
        debug_assert_eq!(values.len(), self.lens[node.0], "gradient length mismatch");
        let slot = self.slots[node.0].get_or_insert_with(|| vec![T::zero(); self.lens[node.0]]);
        for (s, v) in slot.iter_mut().zip(values) {
            *s = *s + *v;
        }
    }

    /// Like `accumulate` but takes ownership, skipping the add when the slot
    /// is still empty.
    pub fn accumulate_owned(&mut self, node: NodeId, values: Vec<T>) {
        debug_assert_eq!(values.len(), self.lens[node.0], "gradient length mismatch");
        match &mut self.slots[node.0] {
            Some(slot) => {
                for (s, v) in slot.iter_mut().zip(&values) {
                    *s = *s + *v;
                }
            }
            empty => *empty = Some(values),
        }
    }

    fn take(&mut self, node: NodeId) -> Option<Vec<T>> {
        self.slots[node.0].take()
    }
}

type BackwardFn<T> = Box<dyn Fn(&[T], &mut GradientStore<T>) + Send>;

struct RecordedOp<T> {
    output: NodeId,
    backward: BackwardFn<T>,
}

struct TapeInner<T: Element> {
    /// Shape (length) per node, leaf or intermediate.
    node_lens: Vec<usize>,
    node_shapes: Vec<Shape>,
    leaves: Vec<NodeId>,
    ops: Vec<RecordedOp<T>>,
    consumed: bool,
}

/// Reverse-mode gradient tape. Clones share the same record.
#[derive(Clone)]
pub struct Tape<T: Element> {
    inner: Arc<Mutex<TapeInner<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape {
            inner: Arc::new(Mutex::new(TapeInner {
                node_lens: Vec::new(),
                node_shapes: Vec::new(),
                leaves: Vec::new(),
                ops: Vec::new(),
                consumed: false,
            })),
        }
    }

    pub(crate) fn same_tape(&self, other: &Tape<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, TapeInner<T>> {
        self.inner.lock().expect("tape mutex poisoned")
    }

    /// Register `tensor` as a differentiable leaf and return the tracked
    /// handle. Tracking an already-tracked tensor of the same tape is a no-op;
    /// tensors tracked elsewhere are rejected.
    pub fn track(&self, tensor: &Tensor<T>) -> Result<Tensor<T>> {
        if let Some(other) = tensor.tape() {
            if self.same_tape(other) {
                return Ok(tensor.clone());
            }
            return Err(Error::Tape("tensor already tracked on a different tape".into()));
        }
        let node = {
            let mut inner = self.lock();
            let node = NodeId(inner.node_lens.len());
            inner.node_lens.push(tensor.numel());
            inner.node_shapes.push(tensor.shape().clone());
            inner.leaves.push(node);
            node
        };
        Ok(tensor.detach().with_tracking(self.clone(), node))
    }

    /// Allocate a node for an op output and append its backward rule.
    pub(crate) fn record(&self, output: Tensor<T>, backward: BackwardFn<T>) -> Tensor<T> {
        let node = {
            let mut inner = self.lock();
            let node = NodeId(inner.node_lens.len());
            inner.node_lens.push(output.numel());
            inner.node_shapes.push(output.shape().clone());
            inner.ops.push(RecordedOp { output: node, backward });
            node
        };
        output.with_tracking(self.clone(), node)
    }

    pub(crate) fn backward(&self, loss: &Tensor<T>) -> Result<Gradients<T>> {
        if loss.numel() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {}",
                loss.shape()
            )));
        }
        let loss_node = loss
            .node()
            .ok_or_else(|| Error::Tape("backward on an untracked tensor".into()))?;

        let mut inner = self.lock();
        if inner.consumed {
            return Err(Error::Tape(
                "tape already consumed by a previous backward; build a new tape".into(),
            ));
        }
        if inner.ops.is_empty() {
            return Err(Error::Tape("backward on an empty tape".into()));
        }
        inner.consumed = true;

        let mut store = GradientStore::new(inner.node_lens.clone());
        store.accumulate_owned(loss_node, vec![T::one()]);

        // Reverse execution order: every consumer of a node runs before the
        // op that produced it, so gradients are complete when taken.
        let ops = std::mem::take(&mut inner.ops);
        for op in ops.iter().rev() {
            if let Some(grad_out) = store.take(op.output) {
                (op.backward)(&grad_out, &mut store);
            }
        }

        let mut grads = Vec::new();
        for &leaf in &inner.leaves {
            if let Some(g) = store.take(leaf) {
                let shape = inner.node_shapes[leaf.0].clone();
                let tensor =
                    Tensor::from_vec(shape.dims().to_vec(), g).expect("leaf gradient shape");
                grads.push((leaf, tensor));
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of the loss with respect to tracked leaves, keyed by node.
pub struct Gradients<T: Element> {
    grads: Vec<(NodeId, Tensor<T>)>,
}

impl<T: Element> Gradients<T> {
    /// Gradient for a tracked tensor, if it was reachable from the loss.
    pub fn get(&self, tensor: &Tensor<T>) -> Option<&Tensor<T>> {
        tensor.node().and_then(|n| self.by_node(n))
    }

    pub fn by_node(&self, node: NodeId) -> Option<&Tensor<T>> {
        self.grads
            .iter()
            .find(|(n, _)| *n == node)
            .map(|(_, g)| g)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

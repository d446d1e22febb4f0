//! Elementwise unaries and broadcasting binaries.

use super::{finish, unify_tape};
use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// Broadcast layout for a binary op: per output axis, the input strides
/// (0 where the input is broadcast along that axis).
struct Broadcast {
    out_dims: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
    same_shape: bool,
}

impl Broadcast {
    fn plan(a: &Shape, b: &Shape, context: &'static str) -> Result<Broadcast> {
        if a == b {
            let dims = a.dims().to_vec();
            return Ok(Broadcast {
                out_dims: dims,
                a_strides: Vec::new(),
                b_strides: Vec::new(),
                same_shape: true,
            });
        }
        let rank = a.rank().max(b.rank());
        let pad = |s: &Shape| -> Vec<usize> {
            let mut dims = vec![1; rank - s.rank()];
            dims.extend_from_slice(s.dims());
            dims
        };
        let ad = pad(a);
        let bd = pad(b);
        let mut out_dims = Vec::with_capacity(rank);
        for i in 0..rank {
            if ad[i] == bd[i] || ad[i] == 1 || bd[i] == 1 {
                out_dims.push(ad[i].max(bd[i]));
            } else {
                return Err(Error::shape(context, format!("{a}"), format!("{b} (not broadcastable)")));
            }
        }
        let strides_for = |dims: &[usize]| -> Vec<usize> {
            let mut strides = vec![0usize; rank];
            let mut acc = 1usize;
            for i in (0..rank).rev() {
                strides[i] = if dims[i] == 1 { 0 } else { acc };
                acc *= dims[i];
            }
            strides
        };
        Ok(Broadcast {
            a_strides: strides_for(&ad),
            b_strides: strides_for(&bd),
            out_dims,
            same_shape: false,
        })
    }

    fn numel(&self) -> usize {
        self.out_dims.iter().product()
    }

    /// Visit `(out_index, a_index, b_index)` in row-major output order.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let total = self.numel();
        if self.same_shape {
            for i in 0..total {
                f(i, i, i);
            }
            return;
        }
        let rank = self.out_dims.len();
        let mut counters = vec![0usize; rank];
        let mut ai = 0usize;
        let mut bi = 0usize;
        for oi in 0..total {
            f(oi, ai, bi);
            for ax in (0..rank).rev() {
                counters[ax] += 1;
                ai += self.a_strides[ax];
                bi += self.b_strides[ax];
                if counters[ax] < self.out_dims[ax] {
                    break;
                }
                counters[ax] = 0;
                ai -= self.a_strides[ax] * self.out_dims[ax];
                bi -= self.b_strides[ax] * self.out_dims[ax];
            }
        }
    }
}

macro_rules! broadcast_binary {
    ($name:ident, $context:literal, $fwd:expr, $da:expr, $db:expr) => {
        pub fn $name<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
            let plan = Broadcast::plan(a.shape(), b.shape(), $context)?;
            let tape = unify_tape(&[a, b])?;
            let fwd = $fwd;
            let mut out = vec![T::zero(); plan.numel()];
            {
                let ad = a.data();
                let bd = b.data();
                plan.for_each(|oi, ai, bi| out[oi] = fwd(ad[ai], bd[bi]));
            }
            let out = Tensor::from_vec(plan.out_dims.clone(), out)?;

            let a_node = a.node();
            let b_node = b.node();
            let a_data = a.data_arc();
            let b_data = b.data_arc();
            let a_len = a.numel();
            let b_len = b.numel();
            Ok(finish(out, tape, move |go, store| {
                let da = $da;
                let db = $db;
                if let Some(node) = a_node {
                    let mut ga = vec![T::zero(); a_len];
                    plan.for_each(|oi, ai, bi| {
                        ga[ai] = ga[ai] + go[oi] * da(a_data[ai], b_data[bi]);
                    });
                    store.accumulate_owned(node, ga);
                }
                if let Some(node) = b_node {
                    let mut gb = vec![T::zero(); b_len];
                    plan.for_each(|oi, ai, bi| {
                        gb[bi] = gb[bi] + go[oi] * db(a_data[ai], b_data[bi]);
                    });
                    store.accumulate_owned(node, gb);
                }
            }))
        }
    };
}

broadcast_binary!(
    add,
    "add",
    |x: T, y: T| x + y,
    |_x: T, _y: T| T::one(),
    |_x: T, _y: T| T::one()
);

broadcast_binary!(
    sub,
    "sub",
    |x: T, y: T| x - y,
    |_x: T, _y: T| T::one(),
    |_x: T, _y: T| -T::one()
);

broadcast_binary!(
    mul,
    "mul",
    |x: T, y: T| x * y,
    |_x: T, y: T| y,
    |x: T, _y: T| x
);

broadcast_binary!(
    div,
    "div",
    |x: T, y: T| x / y,
    |_x: T, y: T| T::one() / y,
    |x: T, y: T| -x / (y * y)
);

/// `c * x`.
pub fn scale<T: Element>(x: &Tensor<T>, c: T) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let out = Tensor::from_vec(x.dims().to_vec(), x.data().iter().map(|&v| v * c).collect())?;
    let node = x.node();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            store.accumulate_owned(node, go.iter().map(|&g| g * c).collect());
        }
    }))
}

/// `x + c`.
pub fn add_scalar<T: Element>(x: &Tensor<T>, c: T) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let out = Tensor::from_vec(x.dims().to_vec(), x.data().iter().map(|&v| v + c).collect())?;
    let node = x.node();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            store.accumulate(node, go);
        }
    }))
}

/// `|x|`, with subgradient 0 at the kink.
pub fn abs<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let out = Tensor::from_vec(x.dims().to_vec(), x.data().iter().map(|v| v.abs()).collect())?;
    let node = x.node();
    let data = x.data_arc();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let g = go
                .iter()
                .zip(data.iter())
                .map(|(&g, &v)| {
                    if v > T::zero() {
                        g
                    } else if v < T::zero() {
                        -g
                    } else {
                        T::zero()
                    }
                })
                .collect();
            store.accumulate_owned(node, g);
        }
    }))
}

/// `max(x, 0)`.
pub fn relu<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let out = Tensor::from_vec(
        x.dims().to_vec(),
        x.data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect(),
    )?;
    let node = x.node();
    let data = x.data_arc();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let g = go
                .iter()
                .zip(data.iter())
                .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
                .collect();
            store.accumulate_owned(node, g);
        }
    }))
}

fn sigmoid_scalar<T: Element>(x: T) -> T {
    // Split on sign so exp never overflows: both branches evaluate exp of a
    // non-positive argument.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Logistic function, overflow-safe across the whole input range.
pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = unify_tape(&[x])?;
    let out = Tensor::from_vec(
        x.dims().to_vec(),
        x.data().iter().map(|&v| sigmoid_scalar(v)).collect(),
    )?;
    let node = x.node();
    let y = out.data_arc();
    Ok(finish(out, tape, move |go, store| {
        if let Some(node) = node {
            let g = go
                .iter()
                .zip(y.iter())
                .map(|(&g, &y)| g * y * (T::one() - y))
                .collect();
            store.accumulate_owned(node, g);
        }
    }))
}

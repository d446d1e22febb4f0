//! Central finite-difference verification of reverse-mode gradients.
//!
//! The harness runs the function once under a fresh tape to get analytic
//! gradients, then perturbs every checked element by ±eps on untracked
//! tensors and compares `(f(x+eps) - f(x-eps)) / (2*eps)` against the
//! analytic value. Everything runs in `f64`: with eps around 1e-6 the
//! truncation and roundoff error are both far below the tolerances used in
//! tests.

use super::{Element, Tape, Tensor};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct WorstCase {
    /// Which input tensor held the worst element.
    pub input: usize,
    /// Flat element index within that input.
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst: Option<WorstCase>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative error with an absolute floor: `|a−n| / max(|a|, |n|, 1e-6)`.
/// Central differences on a loss of order 1 carry ~1e-10 absolute roundoff,
/// so gradients much smaller than the floor cannot be resolved relatively;
/// the floor compares them on an absolute scale instead while still
/// flagging any disagreement above `tol · 1e-6`.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Check `f`'s gradients with respect to every element of `inputs`.
///
/// `f` must build its computation from the tensors it is handed — it is
/// called once with tracked tensors (analytic pass) and repeatedly with
/// perturbed untracked tensors (finite differences), and must return a scalar.
/// `stride` checks every `stride`-th element of each input; 1 checks all.
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>], eps: f64, stride: usize) -> Result<GradCheckReport>
where
    T: Element,
    F: Fn(&[Tensor<T>]) -> Result<Tensor<T>>,
{
    assert!(stride >= 1, "stride must be at least 1");
    let tape = Tape::new();
    let tracked: Vec<Tensor<T>> = inputs
        .iter()
        .map(|t| tape.track(t))
        .collect::<Result<_>>()?;
    let loss = f(&tracked)?;
    let grads = loss.backward()?;

    let mut detached: Vec<Tensor<T>> = inputs.iter().map(|t| t.detach()).collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    let eps_t = T::cast(eps);

    for (i, tracked_input) in tracked.iter().enumerate() {
        let analytic = grads.get(tracked_input);
        for j in (0..inputs[i].numel()).step_by(stride) {
            let base = inputs[i].data()[j];

            let mut plus = inputs[i].data().to_vec();
            plus[j] = base + eps_t;
            detached[i] = Tensor::from_vec(inputs[i].dims().to_vec(), plus)?;
            let f_plus = f(&detached)?.item()?.as_f64();

            let mut minus = inputs[i].data().to_vec();
            minus[j] = base - eps_t;
            detached[i] = Tensor::from_vec(inputs[i].dims().to_vec(), minus)?;
            let f_minus = f(&detached)?.item()?.as_f64();

            detached[i] = inputs[i].detach();

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic
                .map(|g| g.data()[j].as_f64())
                .unwrap_or(0.0);
            let err = rel_err(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some(WorstCase {
                    input: i,
                    element: j,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}

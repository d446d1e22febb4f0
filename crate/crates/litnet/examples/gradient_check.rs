//! Finite differences against the tape, two ways: the one-op harness on a
//! convolution, then the full built-in verification suite.
//!
//!     cargo run --example gradient_check          # ops and blocks
//!     cargo run --example gradient_check -- --full  # plus the whole model

use litnet::tensor::{grad_check, ops};
use litnet::verify::run_suite;
use litnet::{Result, Tensor};

fn main() -> Result<()> {
    // grad_check drives any closure over tracked inputs: it compares the
    // tape's gradient with a central difference for every input element.
    let x = Tensor::from_fn(vec![1, 2, 5, 5], |i| ((i * 37) % 11) as f64 / 11.0 - 0.4);
    let w = Tensor::from_fn(vec![3, 2, 3, 3], |i| ((i * 17) % 7) as f64 / 7.0 - 0.5);
    let report = grad_check(
        |inputs| ops::mean_all(&ops::conv2d(&inputs[0], &inputs[1], None, 1)?),
        &[x, w],
        1e-6,
        1,
    )?;
    println!(
        "conv2d: {} elements checked, max relative error {:.3e}",
        report.checked, report.max_rel_err
    );
    assert!(report.passes(1e-4));

    // The same machinery, packaged: every primitive op, every block, every
    // loss, and (with --full) the complete toy-width model.
    let full = std::env::args().any(|a| a == "--full");
    for item in run_suite(full)? {
        println!(
            "{}  {:<55} max_rel_err {:.3e} (tol {:.0e}, {} elements)",
            if item.passed() { "PASS" } else { "FAIL" },
            item.name,
            item.max_rel_err,
            item.tol,
            item.checked
        );
    }
    Ok(())
}

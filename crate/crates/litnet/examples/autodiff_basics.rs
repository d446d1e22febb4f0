//! The tensor core in five minutes: build tensors, record operations on a
//! gradient tape, run `backward`, and read the gradients back.
//!
//!     cargo run --example autodiff_basics

use litnet::tensor::{ops, Tape};
use litnet::{Result, Tensor};

fn main() -> Result<()> {
    // Plain tensors are just shape + data; nothing is recorded yet.
    let a = Tensor::from_vec(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25])?;
    let b = Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, -0.5, 3.0])?;

    // A tape turns tensors into tracked leaves. Every op whose inputs are
    // tracked lands on the tape, so the result remembers how it was made.
    let tape = Tape::<f64>::new();
    let at = tape.track(&a)?;
    let bt = tape.track(&b)?;

    // loss = mean(relu(a ⊙ b) + a)
    let product = ops::mul(&at, &bt)?;
    let activated = ops::relu(&product)?;
    let loss = ops::mean_all(&ops::add(&activated, &at)?)?;
    println!("loss = {:.4}", loss.item()?);

    // backward() consumes the recorded graph and returns one gradient per
    // leaf that the loss actually reached.
    let grads = loss.backward()?;
    let ga = grads.get(&at).expect("a contributes to the loss");
    let gb = grads.get(&bt).expect("b contributes to the loss");
    println!("∂loss/∂a = {:?}", ga.data());
    println!("∂loss/∂b = {:?}", gb.data());

    // By hand: loss = Σ (relu(aᵢbᵢ) + aᵢ) / 4, so wherever aᵢbᵢ > 0 the
    // product rule contributes bᵢ/4 and aᵢ/4; the +aᵢ term always adds 1/4.
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        let (da, db) = if x * y > 0.0 { (y / 4.0 + 0.25, x / 4.0) } else { (0.25, 0.0) };
        assert!((ga.data()[i] - da).abs() < 1e-12);
        assert!((gb.data()[i] - db).abs() < 1e-12);
    }
    println!("matches the hand-derived gradient");

    // Untracked tensors stay out of the graph: the same expression built
    // from the raw inputs has no tape and therefore nothing to differentiate.
    let detached = ops::mean_all(&ops::mul(&a, &b)?)?;
    assert!(detached.backward().is_err(), "no tape, no gradients");
    println!("untracked tensors refuse backward(), as they should");
    Ok(())
}

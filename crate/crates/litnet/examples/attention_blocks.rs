//! CBAM and spatial attention as standalone blocks: build them against a
//! parameter store, push a toy feature map through, and watch what the
//! gates do to it.
//!
//!     cargo run --example attention_blocks

use litnet::nn::{Cbam, ForwardCtx, ParamStore, SpatialAttention};
use litnet::rng::Stream;
use litnet::tensor::ops;
use litnet::{Result, Tensor};

fn main() -> Result<()> {
    let store = ParamStore::<f64>::new();
    let mut rng = Stream::seeded(11);

    // A [1, 8, 6, 6] feature map where channel c is constant at c+1: easy to
    // see per-channel scaling.
    let x = Tensor::from_fn(vec![1, 8, 6, 6], |i| (i / 36 + 1) as f64);

    // CBAM = channel gate (shared MLP over pooled descriptors) followed by a
    // spatial gate (7×7 conv over pooled channel maps); both multiply in.
    let cbam = Cbam::new(&store, "demo.cbam", 8, 4, &mut rng)?;
    let gated = cbam.forward(ForwardCtx::eval(&store), &x)?;

    println!("channel means before → after CBAM:");
    let per_channel = |t: &Tensor<f64>| -> Vec<f64> {
        (0..8)
            .map(|c| t.data()[c * 36..(c + 1) * 36].iter().sum::<f64>() / 36.0)
            .collect()
    };
    for (c, (before, after)) in per_channel(&x).iter().zip(per_channel(&gated)).enumerate() {
        println!("  ch{c}: {before:.3} → {after:.3}  (gate ≈ {:.3})", after / before);
    }

    // The gates are sigmoids, so attention only attenuates: |out| ≤ |in|.
    assert!(gated.data().iter().zip(x.data()).all(|(g, x)| g.abs() <= x.abs() + 1e-12));
    println!("multiplicative gates never amplify: |out| ≤ |in| holds everywhere");

    // Spatial attention alone, on a map with one bright quadrant.
    let bump = Tensor::from_fn(vec![1, 2, 8, 8], |i| {
        let (y, xx) = ((i / 8) % 8, i % 8);
        if y < 4 && xx < 4 { 2.0 } else { 0.1 }
    });
    let sa = SpatialAttention::new(&store, "demo.sa", &mut rng)?;
    let gated = sa.forward(ForwardCtx::eval(&store), &bump)?;
    let ratio: Vec<f64> =
        gated.data().iter().zip(bump.data()).map(|(g, b)| g / b).take(16).collect();
    println!("spatial gate over the bright quadrant (first rows): {ratio:.3?}");

    // Everything the blocks created lives in the store, ready for training.
    println!("registered parameters:");
    for name in store.names() {
        println!("  {name}");
    }

    // The gates are differentiable end to end — a quick probe via the tape.
    let tape = litnet::tensor::Tape::new();
    let tx = tape.track(&x)?;
    let binding = store.bind(&tape)?;
    let y = cbam.forward(ForwardCtx::train(&store, Some(&binding)), &tx)?;
    let grads = ops::mean_all(&y)?.backward()?;
    println!(
        "gradient reached the input ({} elements) and {} of the block's parameters",
        grads.get(&tx).map_or(0, |g| g.data().len()),
        store.ids().iter().filter(|id| binding.node_of(**id).is_some()).count()
    );
    Ok(())
}

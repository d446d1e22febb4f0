//! Parameter counts and FLOP estimates across configurations: the shipping
//! defaults, the toy width used in tests, per-scale super-resolution heads,
//! and every ablation switch.
//!
//!     cargo run --example model_stats

use litnet::model::{LitNet, ModelConfig, TaskMode};
use litnet::Result;

fn row(label: &str, cfg: ModelConfig) -> Result<()> {
    let model: LitNet<f32> = LitNet::new(cfg, 0)?;
    let params = model.count_params();
    let flops = model.count_flops(256, 256)?;
    println!("{label:<28} {params:>9} params   {:>6.2} GFLOPs @ 256×256", flops as f64 / 1e9);
    Ok(())
}

fn main() -> Result<()> {
    let default = ModelConfig::default();
    row("default (enhance)", default)?;
    for s in 2..=4 {
        row(&format!("default (superres ×{s})"), ModelConfig {
            task: TaskMode::SuperRes(s),
            ..default
        })?;
    }

    println!();
    row("toy width (tests)", ModelConfig { base_width: 2, fc_width: 8, ..default })?;

    // Ablations, one switch at a time. Attention and the larger branch
    // kernels carry parameters; the channel split only changes the input
    // width of the three branch convolutions.
    println!();
    row("no attention", ModelConfig {
        mran_attention: false,
        skip_attention: false,
        ..default
    })?;
    row("fixed 3×3 kernels", ModelConfig { fixed_kernel: true, ..default })?;
    row("no channel split", ModelConfig { channel_split: false, ..default })?;

    // The registry itself, for the curious: name and element count of the
    // five largest tensors in the default model.
    println!();
    let model: LitNet<f32> = LitNet::new(default, 0)?;
    let mut sizes: Vec<(String, usize)> = model
        .store()
        .snapshot()
        .into_iter()
        .map(|(name, _, t)| (name, t.data().len()))
        .collect();
    sizes.sort_by_key(|(_, n)| std::cmp::Reverse(*n));
    println!("largest parameter tensors:");
    for (name, n) in sizes.into_iter().take(5) {
        println!("  {name:<32} {n:>7} elements");
    }
    Ok(())
}

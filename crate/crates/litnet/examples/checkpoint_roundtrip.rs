//! The `LITN` checkpoint format: save a model, load it back, and verify the
//! round trip is bit-exact — then resume training from it and confirm the
//! optimizer state came along too.
//!
//!     cargo run --example checkpoint_roundtrip

use litnet::checkpoint::{load_checkpoint, save_checkpoint, to_bytes, Checkpoint};
use litnet::loss::LossConfig;
use litnet::model::{LitNet, ModelConfig};
use litnet::synth::DegradationParams;
use litnet::train::{train, DataSource, TrainConfig};
use litnet::{Result, Tensor};

fn main() -> Result<()> {
    let cfg = ModelConfig { base_width: 2, fc_width: 8, ..ModelConfig::default() };
    let dir = tempfile::tempdir().map_err(litnet::Error::from)?;

    // Plain model snapshot: config + named parameter tensors.
    let model: LitNet<f32> = LitNet::new(cfg, 21)?;
    let path = dir.path().join("fresh.litn");
    save_checkpoint(&path, &Checkpoint::of_model(&model))?;
    println!(
        "wrote {} ({} bytes, {} tensors)",
        path.display(),
        std::fs::metadata(&path).map_err(litnet::Error::from)?.len(),
        model.store().len()
    );

    let restored: LitNet<f32> = load_checkpoint::<f32>(&path)?.build_model()?;
    let x = Tensor::from_fn(vec![1, 3, 16, 16], |i| ((i * 31) % 256) as f32 / 255.0);
    let before = model.infer(&x)?;
    let after = restored.infer(&x)?;
    assert_eq!(before.data(), after.data(), "round trip changed the forward pass");
    println!("reloaded model reproduces the forward pass bit for bit");

    // Checkpoints written during training carry Adam's moments and the data
    // RNG position, so a resumed run continues exactly where it stopped.
    let out_a = dir.path().join("straight");
    let train_cfg = TrainConfig {
        batch_size: 2,
        max_steps: 6,
        seed: 21,
        data: DataSource::Synthetic {
            count: 3,
            width: 16,
            height: 16,
            params: DegradationParams::default(),
        },
        ..TrainConfig::default()
    };
    train(&train_cfg, &cfg, &LossConfig::default(), Some(&out_a), &mut std::io::sink())?;

    let out_b = dir.path().join("resumed");
    let half = TrainConfig { max_steps: 3, ..train_cfg.clone() };
    train(&half, &cfg, &LossConfig::default(), Some(&out_b), &mut std::io::sink())?;
    let rest = TrainConfig {
        resume: Some(out_b.join("final.litn")),
        ..train_cfg.clone()
    };
    train(&rest, &cfg, &LossConfig::default(), Some(&out_b), &mut std::io::sink())?;

    let straight = load_checkpoint::<f32>(out_a.join("final.litn"))?;
    let resumed = load_checkpoint::<f32>(out_b.join("final.litn"))?;
    assert_eq!(to_bytes(&straight), to_bytes(&resumed), "3+3 steps must equal 6 straight");
    println!("6 straight steps == 3 steps + resume for 3 more, byte for byte");

    // Corruption is caught up front rather than producing a broken model.
    let mut bytes = std::fs::read(&path).map_err(litnet::Error::from)?;
    bytes[0] ^= 0xFF;
    let bad = dir.path().join("bad.litn");
    std::fs::write(&bad, &bytes).map_err(litnet::Error::from)?;
    match load_checkpoint::<f32>(&bad) {
        Err(e) => println!("corrupted file rejected: {e}"),
        Ok(_) => unreachable!("corrupted checkpoint must not load"),
    }
    Ok(())
}

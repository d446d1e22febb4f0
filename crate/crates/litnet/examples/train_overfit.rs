//! Overfit a handful of synthetic pairs end to end and watch the loss and
//! the training-set PSNR move. Slow in debug builds — use release.
//!
//!     cargo run --release --example train_overfit

use std::io::Write;

use litnet::image_io::Image;
use litnet::loss::LossConfig;
use litnet::metrics::psnr;
use litnet::model::{LitNet, ModelConfig};
use litnet::synth::{synth_pairs, DegradationParams};
use litnet::train::{train, DataSource, TrainConfig};
use litnet::Result;

/// Forwards every 25th log line, prefixed, to show the `step\tl_T\tcl1\tl_p\tl_s`
/// format without drowning the terminal.
struct Sampled(Vec<u8>);

impl Write for Sampled {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn main() -> Result<()> {
    let params = DegradationParams::default();
    let seed = 13;
    let pairs = synth_pairs(4, 32, 32, seed, &params)?;

    let mean_psnr = |model: &LitNet<f32>| -> Result<f64> {
        let mut acc = 0.0;
        for (degraded, clean) in &pairs {
            let restored = Image::from_tensor(&model.infer(&degraded.to_tensor())?)?;
            acc += psnr(&restored, clean, 1.0)?;
        }
        Ok(acc / pairs.len() as f64)
    };

    let model_cfg = ModelConfig { base_width: 8, fc_width: 16, ..ModelConfig::default() };
    let train_cfg = TrainConfig {
        batch_size: 4,
        max_steps: 150,
        seed,
        data: DataSource::Synthetic { count: 4, width: 32, height: 32, params },
        ..TrainConfig::default()
    };

    let baseline: f64 = pairs
        .iter()
        .map(|(d, c)| psnr(d, c, 1.0).unwrap())
        .sum::<f64>()
        / pairs.len() as f64;
    println!("degraded inputs: {baseline:.2} dB against the clean targets");
    println!("training {} steps at lr {} on {} pairs…", train_cfg.max_steps, train_cfg.lr, 4);

    let mut sink = Sampled(Vec::new());
    let outcome = train(&train_cfg, &model_cfg, &LossConfig::default(), None, &mut sink)?;

    println!("step\tl_T\tcl1\tl_p\tl_s");
    for line in String::from_utf8_lossy(&sink.0)
        .lines()
        .enumerate()
        .filter(|(i, _)| (i + 1) % 25 == 0)
        .map(|(_, l)| l)
    {
        println!("{line}");
    }

    let model: LitNet<f32> = outcome.checkpoint.build_model()?;
    println!("final loss {:.4}", outcome.final_loss);
    println!("training-set PSNR after overfitting: {:.2} dB", mean_psnr(&model)?);
    Ok(())
}

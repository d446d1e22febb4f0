//! The enhancement pipeline end to end: synthesize a clean/degraded pair,
//! overfit a toy-width network to it for a few steps, and measure what the
//! network recovered.
//!
//!     cargo run --example enhance_image

use litnet::image_io::Image;
use litnet::loss::LossConfig;
use litnet::metrics::psnr;
use litnet::model::{LitNet, ModelConfig};
use litnet::synth::{synth_pairs, DegradationParams};
use litnet::train::{train, DataSource, TrainConfig};
use litnet::Result;

fn main() -> Result<()> {
    let params = DegradationParams::default();
    let pairs = synth_pairs(2, 32, 32, 5, &params)?;
    let (degraded, clean) = &pairs[0];
    println!(
        "degraded input: {:.2} dB against the clean target",
        psnr(degraded, clean, 1.0)?
    );

    // A fresh model is exactly the identity: the reconstruction head starts
    // at zero and the output is input + head(features).
    let cfg = ModelConfig { base_width: 2, fc_width: 8, ..ModelConfig::default() };
    let fresh: LitNet<f32> = LitNet::new(cfg, 5)?;
    let out = Image::from_tensor(&fresh.infer(&degraded.to_tensor())?)?;
    println!("untrained model:  {:.2} dB (identity — same as the input)", psnr(&out, clean, 1.0)?);

    // Sixty steps of Adam on the two pairs.
    let train_cfg = TrainConfig {
        batch_size: 2,
        max_steps: 60,
        seed: 5,
        data: DataSource::Synthetic { count: 2, width: 32, height: 32, params },
        ..TrainConfig::default()
    };
    let outcome = train(&train_cfg, &cfg, &LossConfig::default(), None, &mut std::io::sink())?;
    println!("trained {} steps, final loss {:.4}", outcome.steps, outcome.final_loss);

    let model: LitNet<f32> = outcome.checkpoint.build_model()?;
    let restored = Image::from_tensor(&model.infer(&degraded.to_tensor())?)?;
    println!("after training:   {:.2} dB", psnr(&restored, clean, 1.0)?);

    // Channel means tell the color story: underwater attenuation crushes
    // red, and the network's first job is to push it back up.
    let channel_means = |img: &Image| -> [f64; 3] {
        let mut m = [0.0; 3];
        for (i, v) in img.data().iter().enumerate() {
            m[i % 3] += v;
        }
        let n = (img.data().len() / 3) as f64;
        [m[0] / n, m[1] / n, m[2] / n]
    };
    println!("mean RGB   clean: {:.3?}", channel_means(clean));
    println!("        degraded: {:.3?}", channel_means(degraded));
    println!("        restored: {:.3?}", channel_means(&restored));
    Ok(())
}

//! Super-resolution over a bicubic base: the head emits 3s² channels, pixel
//! shuffle rearranges them into an s×-larger residual, and the network adds
//! it to a bicubic upsampling of the input.
//!
//!     cargo run --example super_resolve

use litnet::image_io::{downsample_mean, Image};
use litnet::loss::LossConfig;
use litnet::metrics::psnr;
use litnet::model::{LitNet, ModelConfig, TaskMode};
use litnet::synth::procedural_clean;
use litnet::tensor::ops;
use litnet::train::{train, DataSource, TrainConfig};
use litnet::Result;

fn main() -> Result<()> {
    let scale = 2u32;
    let clean = procedural_clean(48, 48, 9);
    let low = downsample_mean(&clean, scale as usize)?;
    println!("{}×{} input, ×{scale} target {}×{}", low.width(), low.height(), clean.width(), clean.height());

    // Zero-initialized head: the network output IS the bicubic upsampling.
    let cfg = ModelConfig {
        base_width: 2,
        fc_width: 8,
        task: TaskMode::SuperRes(scale),
        ..ModelConfig::default()
    };
    let fresh: LitNet<f32> = LitNet::new(cfg, 9)?;
    let up = fresh.forward(&low.to_tensor(), litnet::nn::Mode::Eval, None)?;
    let bicubic = ops::bicubic_upsample(&low.to_tensor::<f32>(), scale as usize)?;
    assert_eq!(up.data(), bicubic.data(), "fresh model ≡ bicubic");
    let bicubic_img = Image::from_tensor(&up)?;
    println!("bicubic baseline: {:.2} dB", psnr(&bicubic_img, &clean, 1.0)?);

    // Train briefly on synthetic pairs rendered at the high resolution and
    // pooled down, then see what the learned residual adds on our image.
    let train_cfg = TrainConfig {
        batch_size: 2,
        max_steps: 60,
        seed: 9,
        data: DataSource::Synthetic {
            count: 2,
            width: 24,
            height: 24,
            params: Default::default(),
        },
        ..TrainConfig::default()
    };
    let outcome = train(&train_cfg, &cfg, &LossConfig::default(), None, &mut std::io::sink())?;
    let model: LitNet<f32> = outcome.checkpoint.build_model()?;

    let restored = Image::from_tensor(&model.infer(&low.to_tensor())?)?;
    println!("with residual:    {:.2} dB (after {} training steps)", psnr(&restored, &clean, 1.0)?, outcome.steps);

    // Dimensions always come out exactly s× the input, whatever s is.
    for s in 2..=4u32 {
        let cfg = ModelConfig { task: TaskMode::SuperRes(s), ..cfg };
        let model: LitNet<f32> = LitNet::new(cfg, 1)?;
        let y = model.infer(&low.to_tensor())?;
        println!("×{s}: {:?} → {:?}", low.to_tensor::<f32>().dims(), y.dims());
    }
    Ok(())
}

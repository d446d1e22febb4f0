//! Every image-quality metric on one pair, then the directory evaluator and
//! its CSV report — the same code path as `litnet evaluate`.
//!
//!     cargo run --example evaluate_metrics

use litnet::image_io::save_image;
use litnet::metrics::{evaluate_pair_dirs, ms_ssim, mse, psnr, ssim_index, uiqm, UiqmConfig};
use litnet::synth::{procedural_clean, synth_degrade, DegradationParams};
use litnet::Result;

fn main() -> Result<()> {
    let clean = procedural_clean(64, 64, 27);
    let degraded = synth_degrade(&clean, &DegradationParams::default())?;

    // Full-reference metrics compare against the clean target.
    println!("degraded vs clean on 64×64:");
    println!("  mse     {:.6}", mse(&degraded, &clean, 1.0)?);
    println!("  psnr    {:.3} dB", psnr(&degraded, &clean, 1.0)?);
    println!("  ssim    {:.4}", ssim_index(&degraded, &clean)?);
    println!("  ms-ssim {:.4}", ms_ssim(&degraded, &clean)?);

    // UIQM needs no reference: colorfulness + sharpness + contrast. The
    // degradation should drag every component down.
    let cfg = UiqmConfig::default();
    for (label, img) in [("clean", &clean), ("degraded", &degraded)] {
        let q = uiqm(img, &cfg)?;
        println!(
            "  uiqm({label:<8}) {:.4}  (uicm {:.3}, uism {:.3}, uiconm {:.3})",
            q.uiqm, q.uicm, q.uism, q.uiconm
        );
    }

    // The directory evaluator pairs files by stem and emits CSV with
    // aggregate rows — identical to `litnet evaluate --pred … --gt …`.
    let dir = tempfile::tempdir().map_err(litnet::Error::from)?;
    let pred = dir.path().join("pred");
    let gt = dir.path().join("gt");
    std::fs::create_dir_all(&pred).map_err(litnet::Error::from)?;
    std::fs::create_dir_all(&gt).map_err(litnet::Error::from)?;
    for i in 0..3 {
        let clean = procedural_clean(32, 32, 40 + i);
        let params = DegradationParams { seed: i, ..DegradationParams::default() };
        save_image(&synth_degrade(&clean, &params)?, pred.join(format!("img{i}.png")))?;
        save_image(&clean, gt.join(format!("img{i}.png")))?;
    }
    let report = evaluate_pair_dirs(&pred, Some(&gt), false)?;
    println!("\n{}", report.to_csv());
    Ok(())
}

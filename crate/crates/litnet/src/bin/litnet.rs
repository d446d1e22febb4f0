//! Command-line front end: training, inference, evaluation, diagnostics.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use litnet::checkpoint::load_checkpoint;
use litnet::config_file::{load_config, FileConfig};
use litnet::error::{Error, Result};
use litnet::image_io::{
    crop_back, load_image, png_stems, reflect_pad_to_multiple, save_image, Image,
};
use litnet::metrics::evaluate_pair_dirs;
use litnet::model::{LitNet, TaskMode};
use litnet::synth::{procedural_clean, synth_degrade};
use litnet::train::{train, DataSource};
use litnet::verify::run_suite;

#[derive(Parser)]
#[command(name = "litnet", version, about = "Underwater image enhancement and super-resolution")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; step log goes to stdout as `step  l_T  cl1  l_p  l_s`.
    Train {
        /// Config file (sections [model], [train], [loss], [degrade]).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for periodic and final checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the file's [train] seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Continue from an earlier checkpoint up to max_steps total steps.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Paired-directory data source (with --clean-dir).
        #[arg(long, requires = "clean_dir")]
        degraded_dir: Option<PathBuf>,
        #[arg(long, requires = "degraded_dir")]
        clean_dir: Option<PathBuf>,
    },
    /// Enhance one PNG with a trained checkpoint (output keeps the input size).
    Enhance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve one PNG; output is exactly scale times the input size.
    Superres {
        #[arg(long)]
        ckpt: PathBuf,
        /// Must match the scale the checkpoint was trained for.
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..=4))]
        scale: u32,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a directory of predictions, optionally against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
        /// Scale for MSE/PSNR: 8-bit (published convention) or [0,1] floats.
        #[arg(long, value_enum, default_value = "8")]
        bitdepth: Bitdepth,
    },
    /// Report parameter count and FLOPs for a model configuration.
    CountParams {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Verify gradients of every op and block against finite differences.
    Gradcheck {
        /// Also check the full toy-width model end to end.
        #[arg(long)]
        full: bool,
    },
    /// Degrade clean PNGs into synthetic underwater training inputs.
    MakeSynth {
        /// Directory of clean images (created and filled when --gen is set).
        #[arg(long)]
        clean: PathBuf,
        /// Output directory for degraded copies.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generate this many procedural clean images first.
        #[arg(long)]
        gen: Option<usize>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Config file supplying the [degrade] parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum Bitdepth {
    #[value(name = "8")]
    Eight,
    Float,
}

fn file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(FileConfig::default()),
    }
}

fn restore_model(path: &PathBuf) -> Result<LitNet<f32>> {
    load_checkpoint::<f32>(path)?.build_model()
}

/// Pad to a multiple of 8, run the network, crop to the exact target size.
fn infer_image(model: &LitNet<f32>, input: &PathBuf, out: &PathBuf) -> Result<()> {
    let scale = model.config().task.scale();
    let x = load_image(input)?.to_tensor::<f32>();
    let (padded, orig) = reflect_pad_to_multiple(&x, 8)?;
    let y = model.infer(&padded)?;
    let y = crop_back(&y, orig, scale)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_image(&Image::from_tensor(&y)?, out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train {
            config,
            out,
            seed,
            deterministic,
            lr,
            batch_size,
            max_steps,
            checkpoint_every,
            resume,
            degraded_dir,
            clean_dir,
        } => {
            let mut cfg = file_config(&config)?;
            if let Some(v) = seed {
                cfg.train.seed = v;
                if let DataSource::Synthetic { params, .. } = &mut cfg.train.data {
                    params.seed = v;
                }
            }
            if deterministic {
                cfg.train.deterministic = true;
            }
            if let Some(v) = lr {
                cfg.train.lr = v;
            }
            if let Some(v) = batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = max_steps {
                cfg.train.max_steps = v;
            }
            if let Some(v) = checkpoint_every {
                cfg.train.checkpoint_every = v;
            }
            if let Some(v) = resume {
                cfg.train.resume = Some(v);
            }
            if let (Some(degraded), Some(clean)) = (degraded_dir, clean_dir) {
                cfg.train.data = DataSource::Dirs { degraded, clean };
            }
            std::fs::create_dir_all(&out)?;
            let stdout = std::io::stdout();
            let mut sink = stdout.lock();
            let outcome = train(&cfg.train, &cfg.model, &cfg.loss, Some(&out), &mut sink)?;
            log::info!(
                "finished at step {} (loss {}); wrote {}",
                outcome.steps,
                outcome.final_loss,
                out.join("final.litn").display()
            );
            Ok(())
        }
        Cmd::Enhance { ckpt, input, out } => {
            let model = restore_model(&ckpt)?;
            if let TaskMode::SuperRes(s) = model.config().task {
                return Err(Error::Invalid {
                    what: "checkpoint",
                    details: format!("trained for {s}x super-resolution; use the superres subcommand"),
                });
            }
            infer_image(&model, &input, &out)
        }
        Cmd::Superres { ckpt, scale, input, out } => {
            let model = restore_model(&ckpt)?;
            match model.config().task {
                TaskMode::SuperRes(s) if s == scale => {}
                TaskMode::SuperRes(s) => {
                    return Err(Error::Invalid {
                        what: "checkpoint",
                        details: format!("trained for {s}x super-resolution, not {scale}x"),
                    })
                }
                TaskMode::Enhance => {
                    return Err(Error::Invalid {
                        what: "checkpoint",
                        details: "trained for enhancement; use the enhance subcommand".into(),
                    })
                }
            }
            infer_image(&model, &input, &out)
        }
        Cmd::Evaluate { pred, gt, out, bitdepth } => {
            let report = evaluate_pair_dirs(&pred, gt.as_deref(), bitdepth == Bitdepth::Eight)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, report.to_csv())?;
            log::info!("wrote {} ({} images)", out.display(), report.rows.len());
            Ok(())
        }
        Cmd::CountParams { config } => {
            let cfg = file_config(&config)?;
            let model: LitNet<f32> = LitNet::new(cfg.model, 0)?;
            println!("params\t{}", model.count_params());
            println!("flops_256x256\t{}", model.count_flops(256, 256)?);
            Ok(())
        }
        Cmd::Gradcheck { full } => {
            let items = run_suite(full)?;
            let mut failed = 0usize;
            for item in &items {
                let status = if item.passed() { "ok" } else { "FAIL" };
                println!(
                    "{status}\t{}\tmax_rel_err {:.3e}\ttol {:.0e}\t({} elements)",
                    item.name, item.max_rel_err, item.tol, item.checked
                );
                if !item.passed() {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Error::Invalid {
                    what: "gradcheck",
                    details: format!("{failed} of {} checks failed", items.len()),
                });
            }
            println!("all {} checks passed", items.len());
            Ok(())
        }
        Cmd::MakeSynth { clean, out, seed, gen, width, height, config } => {
            let mut params = file_config(&config)?.degrade;
            if let Some(n) = gen {
                std::fs::create_dir_all(&clean)?;
                for i in 0..n {
                    let img = procedural_clean(width, height, seed.wrapping_add(i as u64));
                    save_image(&img, clean.join(format!("synth_{i:03}.png")))?;
                }
            }
            std::fs::create_dir_all(&out)?;
            for (i, (stem, path)) in png_stems(&clean)?.iter().enumerate() {
                params.seed = seed.wrapping_add(i as u64);
                let degraded = synth_degrade(&load_image(path)?, &params)?;
                save_image(&degraded, out.join(format!("{stem}.png")))?;
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(threads) = std::env::var("LITNET_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring LITNET_THREADS={threads}: expected a positive integer"),
        }
    }
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

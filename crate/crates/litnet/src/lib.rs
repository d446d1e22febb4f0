//! litnet — underwater image enhancement and super-resolution at desk scale.
//!
//! The crate is a self-contained implementation of a lightweight
//! multi-resolution / multi-scale attention network ("Lit-Net") together with
//! everything needed to train and evaluate it: a tape-based reverse-mode
//! autodiff tensor core, the attention blocks, weighted channel-specific
//! losses, underwater image-quality metrics, an Adam trainer with synthetic
//! data generation, and a thin `litnet` command-line binary.
//!
//! The primary interface is the `examples/` directory — one runnable program
//! per capability:
//!
//! | example | run | shows |
//! |---|---|---|
//! | `autodiff_basics` | `cargo run --example autodiff_basics` | tensors, the gradient tape, `backward` |
//! | `gradient_check` | `cargo run --example gradient_check` | finite-difference verification of every operator |
//! | `attention_blocks` | `cargo run --example attention_blocks` | CBAM and spatial attention gates on toy tensors |
//! | `model_stats` | `cargo run --example model_stats` | parameter counts and FLOP estimates, including ablations |
//! | `enhance_image` | `cargo run --example enhance_image` | degrading an image and enhancing it with the network |
//! | `super_resolve` | `cargo run --example super_resolve` | pixel-shuffle super-resolution over a bicubic base |
//! | `train_overfit` | `cargo run --release --example train_overfit` | overfitting a few synthetic pairs end to end |
//! | `evaluate_metrics` | `cargo run --example evaluate_metrics` | PSNR / SSIM / MS-SSIM / UIQM and the CSV report |
//! | `checkpoint_roundtrip` | `cargo run --example checkpoint_roundtrip` | binary checkpoint save/load, bit-identical forward |
//! | `synthesize_dataset` | `cargo run --example synthesize_dataset` | procedural clean images and the degradation pipeline |
//!
//! Module map:
//!
//! - [`tensor`] — shapes, `Tensor<T>`, the gradient tape, operators, and the
//!   finite-difference harness. `T` is `f32` for training and `f64` where
//!   extended precision matters (gradient checking, metrics).
//! - [`nn`] — parameter registry and the reusable blocks: conv+BN+PReLU,
//!   CBAM, spatial attention, encoder/decoder layers.
//! - [`model`] — the full network, its configuration, parameter/FLOP counts.
//! - [`checkpoint`] — the `LITN` binary checkpoint format.
//! - [`loss`] — weighted channel-wise L1, SSIM loss, perceptual loss, and the
//!   combined training objective.
//! - [`metrics`] — MSE/PSNR/SSIM/MS-SSIM/UIQM and directory evaluation with
//!   CSV reports.
//! - [`image_io`] — 8-bit PNG loading/saving and the `Image` raster type.
//! - [`synth`] — procedural clean images and the synthetic underwater
//!   degradation used for training and tests.
//! - [`train`] — Adam and the training loop.
//! - [`config_file`] — the plain-text `key = value` config format used by the
//!   CLI.

#![forbid(unsafe_code)]

pub mod checkpoint;
pub mod config_file;
pub mod error;
pub mod rng;
pub mod image_io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{Tensor, Shape};

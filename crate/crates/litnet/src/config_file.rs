//! Plain-text `key = value` configuration files with `[section]` headers.
//!
//! Sections are `[model]`, `[train]`, `[loss]`, and `[degrade]`; every key
//! defaults to the corresponding struct default, unknown or duplicate keys
//! are errors, and `#`/`;` lines are comments. CLI flags override file
//! keys after parsing.
//!
//! ```text
//! [model]
//! base_width = 32
//! task = superres
//! scale = 2
//!
//! [train]
//! lr = 2e-4
//! degraded_dir = data/low
//! clean_dir = data/high
//!
//! [loss]
//! w_g = 1.5
//!
//! [degrade]
//! haze = 0.25
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::{ModelConfig, TaskMode};
use crate::synth::DegradationParams;
use crate::train::{DataSource, TrainConfig};

/// Everything a config file can describe. `degrade` feeds the synthetic
/// data source and the `make-synth` subcommand.
#[derive(Clone, Debug)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub degrade: DegradationParams,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            degrade: DegradationParams::default(),
        }
    }
}

fn parse_as<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!(
            "line {line}: cannot parse {key} = {value} as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: {key} must be true or false, not {value}"
        ))),
    }
}

/// Raw `(section, key, value)` entries in file order, with line numbers.
fn tokenize(text: &str) -> Result<Vec<(String, String, String, usize)>> {
    const SECTIONS: [&str; 4] = ["model", "train", "loss", "degrade"];
    let mut entries = Vec::new();
    let mut section: Option<String> = None;
    let mut seen = std::collections::HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if !SECTIONS.contains(&name) {
                return Err(Error::Config(format!(
                    "line {line}: unknown section [{name}] (expected one of [model], [train], [loss], [degrade])"
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(Error::Config(format!(
                "line {line}: expected key = value, got '{trimmed}'"
            )));
        };
        let Some(section) = section.clone() else {
            return Err(Error::Config(format!(
                "line {line}: key '{}' appears before any [section] header",
                key.trim()
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if value.is_empty() {
            return Err(Error::Config(format!("line {line}: {key} has no value")));
        }
        if !seen.insert((section.clone(), key.clone())) {
            return Err(Error::Config(format!(
                "line {line}: duplicate key {key} in [{section}]"
            )));
        }
        entries.push((section, key, value, line));
    }
    Ok(entries)
}

/// Parse a config file body into validated configs.
pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    // Data-source and task keys interact, so they are resolved after the
    // full file is read.
    let mut task: Option<String> = None;
    let mut scale: Option<u32> = None;
    let mut degraded_dir: Option<PathBuf> = None;
    let mut clean_dir: Option<PathBuf> = None;
    let mut synth: [Option<usize>; 3] = [None, None, None];

    for (section, key, value, line) in tokenize(text)? {
        let v = value.as_str();
        match (section.as_str(), key.as_str()) {
            ("model", "base_width") => cfg.model.base_width = parse_as(line, &key, v)?,
            ("model", "fc_width") => cfg.model.fc_width = parse_as(line, &key, v)?,
            ("model", "branch_divisor") => cfg.model.branch_divisor = parse_as(line, &key, v)?,
            ("model", "cbam_ratio") => cfg.model.cbam_ratio = parse_as(line, &key, v)?,
            ("model", "task") => task = Some(value.clone()),
            ("model", "scale") => scale = Some(parse_as(line, &key, v)?),
            ("model", "mran_attention") => cfg.model.mran_attention = parse_bool(line, &key, v)?,
            ("model", "skip_attention") => cfg.model.skip_attention = parse_bool(line, &key, v)?,
            ("model", "fixed_kernel") => cfg.model.fixed_kernel = parse_bool(line, &key, v)?,
            ("model", "channel_split") => cfg.model.channel_split = parse_bool(line, &key, v)?,

            ("train", "lr") => cfg.train.lr = parse_as(line, &key, v)?,
            ("train", "batch_size") => cfg.train.batch_size = parse_as(line, &key, v)?,
            ("train", "beta1") => cfg.train.beta1 = parse_as(line, &key, v)?,
            ("train", "beta2") => cfg.train.beta2 = parse_as(line, &key, v)?,
            ("train", "eps") => cfg.train.eps = parse_as(line, &key, v)?,
            ("train", "max_steps") => cfg.train.max_steps = parse_as(line, &key, v)?,
            ("train", "seed") => cfg.train.seed = parse_as(line, &key, v)?,
            ("train", "checkpoint_every") => cfg.train.checkpoint_every = parse_as(line, &key, v)?,
            ("train", "deterministic") => cfg.train.deterministic = parse_bool(line, &key, v)?,
            ("train", "resume") => cfg.train.resume = Some(PathBuf::from(v)),
            ("train", "degraded_dir") => degraded_dir = Some(PathBuf::from(v)),
            ("train", "clean_dir") => clean_dir = Some(PathBuf::from(v)),
            ("train", "synth_count") => synth[0] = Some(parse_as(line, &key, v)?),
            ("train", "synth_width") => synth[1] = Some(parse_as(line, &key, v)?),
            ("train", "synth_height") => synth[2] = Some(parse_as(line, &key, v)?),

            ("loss", "w_r") => cfg.loss.w_r = parse_as(line, &key, v)?,
            ("loss", "w_g") => cfg.loss.w_g = parse_as(line, &key, v)?,
            ("loss", "w_b") => cfg.loss.w_b = parse_as(line, &key, v)?,
            ("loss", "lambda_1") => cfg.loss.lambda_1 = parse_as(line, &key, v)?,
            ("loss", "lambda_p") => cfg.loss.lambda_p = parse_as(line, &key, v)?,
            ("loss", "lambda_s") => cfg.loss.lambda_s = parse_as(line, &key, v)?,
            ("loss", "k1") => cfg.loss.k1 = parse_as(line, &key, v)?,
            ("loss", "k2") => cfg.loss.k2 = parse_as(line, &key, v)?,
            ("loss", "ssim_window") => cfg.loss.ssim_window = parse_as(line, &key, v)?,
            ("loss", "ssim_sigma") => cfg.loss.ssim_sigma = parse_as(line, &key, v)?,

            ("degrade", "attenuation_r") => cfg.degrade.attenuation[0] = parse_as(line, &key, v)?,
            ("degrade", "attenuation_g") => cfg.degrade.attenuation[1] = parse_as(line, &key, v)?,
            ("degrade", "attenuation_b") => cfg.degrade.attenuation[2] = parse_as(line, &key, v)?,
            ("degrade", "blur_sigma") => cfg.degrade.blur_sigma = parse_as(line, &key, v)?,
            ("degrade", "noise_sigma") => cfg.degrade.noise_sigma = parse_as(line, &key, v)?,
            ("degrade", "haze") => cfg.degrade.haze = parse_as(line, &key, v)?,
            ("degrade", "seed") => cfg.degrade.seed = parse_as(line, &key, v)?,

            _ => {
                return Err(Error::Config(format!(
                    "line {line}: unknown key '{key}' in [{section}]"
                )))
            }
        }
    }

    cfg.model.task = match (task.as_deref(), scale) {
        (None, None) => cfg.model.task,
        (Some("enhance"), None) => TaskMode::Enhance,
        (Some("enhance"), Some(_)) => {
            return Err(Error::Config("scale requires task = superres".into()))
        }
        (Some("superres"), s) => TaskMode::SuperRes(s.unwrap_or(2)),
        (None, Some(_)) => {
            return Err(Error::Config("scale requires task = superres".into()))
        }
        (Some(other), _) => {
            return Err(Error::Config(format!(
                "task must be enhance or superres, not {other}"
            )))
        }
    };

    let dirs = (degraded_dir, clean_dir);
    let has_synth_keys = synth.iter().any(Option::is_some);
    cfg.train.data = match dirs {
        (Some(degraded), Some(clean)) => {
            if has_synth_keys {
                return Err(Error::Config(
                    "synth_* keys conflict with degraded_dir/clean_dir; pick one data source".into(),
                ));
            }
            DataSource::Dirs { degraded, clean }
        }
        (None, None) => {
            let (count, width, height) = match &cfg.train.data {
                DataSource::Synthetic { count, width, height, .. } => (*count, *width, *height),
                DataSource::Dirs { .. } => (8, 64, 64),
            };
            DataSource::Synthetic {
                count: synth[0].unwrap_or(count),
                width: synth[1].unwrap_or(width),
                height: synth[2].unwrap_or(height),
                params: cfg.degrade,
            }
        }
        _ => {
            return Err(Error::Config(
                "degraded_dir and clean_dir must be given together".into(),
            ))
        }
    };

    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.loss.validate()?;
    cfg.degrade.validate()?;
    Ok(cfg)
}

/// Read and parse a config file, prefixing errors with the path.
pub fn load_config(path: impl AsRef<Path>) -> Result<FileConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

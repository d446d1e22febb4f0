//! Evaluation-side quality metrics, computed in `f64`: MSE, PSNR, SSIM,
//! MS-SSIM, and the reference-free UIQM family (UICM / UISM / UIConM).
//!
//! These are pure measurement functions — no gradients, no tapes. SSIM and
//! MS-SSIM share the losses-module kernel so the training loss and the
//! reported metric cannot drift apart.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_io::{load_image, png_stems, Image};
use crate::loss::{ssim_components, ssim_map, LossConfig};
use crate::tensor::{ops, Tensor};

/// PSNR reported for an exact match (MSE = 0).
pub const PSNR_CAP_DB: f64 = 100.0;

/// Standard 5-scale MS-SSIM weights.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn require_same_size(a: &Image, b: &Image, what: &'static str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::shape(
            what,
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels, at the images' stored
/// `[0,1]` scale times `scale` (pass 255 for 8-bit-convention numbers).
pub fn mse(a: &Image, b: &Image, scale: f64) -> Result<f64> {
    require_same_size(a, b, "mse")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (x - y) * scale;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(max_val² / MSE)`, capped at [`PSNR_CAP_DB`] when the images
/// match exactly. `max_val` must use the same scale as `mse` was given.
pub fn psnr(a: &Image, b: &Image, max_val: f64) -> Result<f64> {
    let err = mse(a, b, max_val)?;
    if err == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (max_val * max_val / err).log10()).min(PSNR_CAP_DB))
}

/// Mean of the SSIM map (losses-module kernel at `f64`, default window).
pub fn ssim_index(a: &Image, b: &Image) -> Result<f64> {
    require_same_size(a, b, "ssim_index")?;
    let map = ssim_map::<f64>(&a.to_tensor(), &b.to_tensor(), &LossConfig::default())?;
    ops::mean_all(&map)?.item()
}

/// Halve both spatial dims by 2×2 mean pooling, dropping odd remainders.
fn downsample_half(x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    Ok(Tensor::from_fn([n, c, oh, ow], |i| {
        let ox = i % ow;
        let oy = (i / ow) % oh;
        let nc = i / (oh * ow);
        let at = |dy: usize, dx: usize| src[(nc * h + oy * 2 + dy) * w + ox * 2 + dx];
        (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) / 4.0
    }))
}

/// 5-scale MS-SSIM with the standard weights and 2×2 mean-pool
/// downsampling: `Π_{j<M} mean(cs_j)^{w_j} · mean(ssim_M)^{w_M}`. Images
/// too small for 5 scales fall back to however many scales fit (with a
/// warning and the weight prefix renormalized); smaller than one window is
/// an error. Negative factor means clamp to 0 before exponentiation.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    require_same_size(a, b, "ms_ssim")?;
    let cfg = LossConfig::default();
    let min_dim = a.width().min(a.height());
    let mut scales = 0;
    for s in 0..MS_SSIM_WEIGHTS.len() {
        if min_dim >> s >= cfg.ssim_window {
            scales = s + 1;
        }
    }
    if scales == 0 {
        return Err(Error::invalid(
            "ms_ssim",
            format!(
                "{}x{} image is smaller than the {}x{} SSIM window",
                a.width(),
                a.height(),
                cfg.ssim_window,
                cfg.ssim_window
            ),
        ));
    }
    if scales < MS_SSIM_WEIGHTS.len() {
        log::warn!(
            "ms_ssim: {}x{} image supports only {scales} of 5 scales; renormalizing weights",
            a.width(),
            a.height()
        );
    }
    let norm: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();

    let mut x = a.to_tensor::<f64>();
    let mut y = b.to_tensor::<f64>();
    let mut result = 1.0;
    for s in 0..scales {
        let weight = MS_SSIM_WEIGHTS[s] / norm;
        let (lum, cs) = ssim_components(&x, &y, &cfg)?;
        let factor = if s + 1 == scales {
            ops::mean_all(&ops::mul(&lum, &cs)?)?.item()?
        } else {
            ops::mean_all(&cs)?.item()?
        };
        result *= factor.max(0.0).powf(weight);
        if s + 1 < scales {
            x = downsample_half(&x)?;
            y = downsample_half(&y)?;
        }
    }
    Ok(result)
}

/// UIQM constants; all knobs of the Panetta et al. formulation are visible
/// here. Components are computed on the 8-bit (×255) scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UiqmConfig {
    /// Component weights: `UIQM = c1·UICM + c2·UISM + c3·UIConM`.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Asymmetric alpha-trim fractions for UICM statistics.
    pub alpha_low: f64,
    pub alpha_high: f64,
    /// Block edge for the UISM/UIConM block measures.
    pub block: usize,
}

impl Default for UiqmConfig {
    fn default() -> Self {
        UiqmConfig {
            c1: 0.0282,
            c2: 0.2953,
            c3: 3.5753,
            alpha_low: 0.1,
            alpha_high: 0.1,
            block: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UiqmBreakdown {
    pub uiqm: f64,
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
}

/// Asymmetric alpha-trimmed mean of `vals`, plus the variance of all
/// values about that trimmed mean.
fn trimmed_stats(vals: &mut [f64], alpha_low: f64, alpha_high: f64) -> (f64, f64) {
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite pixel values"));
    let n = vals.len();
    let lo = (alpha_low * n as f64).floor() as usize;
    let hi = n - (alpha_high * n as f64).floor() as usize;
    let kept = &vals[lo..hi];
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

/// Sobel gradient magnitude with replicate edge padding (a constant image
/// produces an identically zero response, borders included).
fn sobel_magnitude(ch: &[f64], h: usize, w: usize) -> Vec<f64> {
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        ch[y * w + x]
    };
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
                - at(y - 1, x - 1)
                - 2.0 * at(y, x - 1)
                - at(y + 1, x - 1);
            let gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
                - at(y - 1, x - 1)
                - 2.0 * at(y - 1, x)
                - at(y - 1, x + 1);
            out[(y * w as isize + x) as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// `EME = (2/Nb)·Σ_blocks ln(max/min)` over complete `block×block` tiles;
/// tiles whose min or max is 0 contribute 0.
fn eme(map: &[f64], h: usize, w: usize, block: usize) -> f64 {
    let (by, bx) = (h / block, w / block);
    if by == 0 || bx == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for ty in 0..by {
        for tx in 0..bx {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for y in ty * block..(ty + 1) * block {
                for x in tx * block..(tx + 1) * block {
                    let v = map[y * w + x];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if lo > 0.0 && hi > 0.0 {
                sum += (hi / lo).ln();
            }
        }
    }
    2.0 * sum / (by * bx) as f64
}

/// UIQM of an RGB image in `[0,1]` per the Panetta et al. formulation:
/// UICM from alpha-trimmed statistics of the RG/YB opponent channels, UISM
/// from Sobel-weighted per-channel EME, UIConM from a simplified logAMEE
/// (`−(1/Nb)·Σ w·ln w` with `w = (max−min)/(max+min)` over joint-channel
/// blocks).
pub fn uiqm(img: &Image, cfg: &UiqmConfig) -> Result<UiqmBreakdown> {
    let (h, w) = (img.height(), img.width());
    if h == 0 || w == 0 {
        return Err(Error::Image("empty image".into()));
    }
    let n = h * w;
    let mut r = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        r[i] = img.data()[i * 3] * 255.0;
        g[i] = img.data()[i * 3 + 1] * 255.0;
        b[i] = img.data()[i * 3 + 2] * 255.0;
    }

    // UICM: asymmetric alpha-trimmed mean/variance of the opponent channels.
    let mut rg: Vec<f64> = (0..n).map(|i| r[i] - g[i]).collect();
    let mut yb: Vec<f64> = (0..n).map(|i| (r[i] + g[i]) / 2.0 - b[i]).collect();
    let (mu_rg, var_rg) = trimmed_stats(&mut rg, cfg.alpha_low, cfg.alpha_high);
    let (mu_yb, var_yb) = trimmed_stats(&mut yb, cfg.alpha_low, cfg.alpha_high);
    let uicm = -0.0268 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt() + 0.1586 * (var_rg + var_yb).sqrt();

    // UISM: Sobel-edge-weighted EME per channel, combined with luma weights.
    let mut uism = 0.0;
    for (ch, lw) in [(&r, 0.299), (&g, 0.587), (&b, 0.114)] {
        let sob = sobel_magnitude(ch, h, w);
        let weighted: Vec<f64> = sob.iter().zip(ch).map(|(s, v)| s * v).collect();
        uism += lw * eme(&weighted, h, w, cfg.block);
    }

    // UIConM: simplified logAMEE over joint-channel blocks.
    let (by, bx) = (h / cfg.block, w / cfg.block);
    let mut uiconm = 0.0;
    if by > 0 && bx > 0 {
        let mut sum = 0.0;
        for ty in 0..by {
            for tx in 0..bx {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for y in ty * cfg.block..(ty + 1) * cfg.block {
                    for x in tx * cfg.block..(tx + 1) * cfg.block {
                        for ch in [&r, &g, &b] {
                            let v = ch[y * w + x];
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                }
                let (top, bot) = (hi - lo, hi + lo);
                if top > 0.0 && bot > 0.0 {
                    let ratio = top / bot;
                    sum += ratio * ratio.ln();
                }
            }
        }
        uiconm = -sum / (by * bx) as f64;
    }

    Ok(UiqmBreakdown {
        uiqm: cfg.c1 * uicm + cfg.c2 * uism + cfg.c3 * uiconm,
        uicm,
        uism,
        uiconm,
    })
}

/// One report line; `None` cells render empty in the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub image: String,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub ms_ssim: Option<f64>,
    pub uiqm: Option<f64>,
    pub uicm: Option<f64>,
    pub uism: Option<f64>,
    pub uiconm: Option<f64>,
}

impl MetricRow {
    fn empty(image: String) -> MetricRow {
        MetricRow {
            image,
            mse: None,
            psnr: None,
            ssim: None,
            ms_ssim: None,
            uiqm: None,
            uicm: None,
            uism: None,
            uiconm: None,
        }
    }

    fn columns(&self) -> [Option<f64>; 8] {
        [
            self.mse,
            self.psnr,
            self.ssim,
            self.ms_ssim,
            self.uiqm,
            self.uicm,
            self.uism,
            self.uiconm,
        ]
    }
}

/// Per-image rows (filename order) plus aggregate mean/std rows.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: MetricRow,
    pub std: MetricRow,
}

pub const CSV_HEADER: &str = "image,mse,psnr,ssim,ms_ssim,uiqm,uicm,uism,uiconm";

impl MetricReport {
    fn aggregate(rows: &[MetricRow]) -> (MetricRow, MetricRow) {
        let mut mean = MetricRow::empty("AGGREGATE_MEAN".into());
        let mut std = MetricRow::empty("AGGREGATE_STD".into());
        for col in 0..8 {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.columns()[col]).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
            let slots_mean = [
                &mut mean.mse,
                &mut mean.psnr,
                &mut mean.ssim,
                &mut mean.ms_ssim,
                &mut mean.uiqm,
                &mut mean.uicm,
                &mut mean.uism,
                &mut mean.uiconm,
            ];
            *slots_mean[col] = Some(m);
            let slots_std = [
                &mut std.mse,
                &mut std.psnr,
                &mut std.ssim,
                &mut std.ms_ssim,
                &mut std.uiqm,
                &mut std.uicm,
                &mut std.uism,
                &mut std.uiconm,
            ];
            *slots_std[col] = Some(var.sqrt());
        }
        (mean, std)
    }

    /// CSV per the fixed header, one row per image, then the aggregates.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.rows.iter().chain([&self.mean, &self.std]) {
            out.push_str(&row.image);
            for col in row.columns() {
                out.push(',');
                out.push_str(&fmt(col));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluate every PNG in `pred_dir` — against the same-stem file in
/// `gt_dir` when given (MSE/PSNR/SSIM/MS-SSIM plus the UIQM family), or
/// reference-free (UIQM family only) without it. `bit8` reports MSE/PSNR
/// at 8-bit scale (×255 / max_val 255) instead of `[0,1]`. Rows keep
/// filename order; images fan out across threads.
pub fn evaluate_pair_dirs(
    pred_dir: &Path,
    gt_dir: Option<&Path>,
    bit8: bool,
) -> Result<MetricReport> {
    let preds = png_stems(pred_dir)?;
    let pairs: Vec<(String, std::path::PathBuf, Option<std::path::PathBuf>)> = match gt_dir {
        None => preds.into_iter().map(|(s, p)| (s, p, None)).collect(),
        Some(gt) => {
            let gts = png_stems(gt)?;
            let mut unpaired: Vec<String> = preds
                .keys()
                .filter(|s| !gts.contains_key(*s))
                .map(|s| format!("{s} (prediction only)"))
                .collect();
            unpaired.extend(
                gts.keys()
                    .filter(|s| !preds.contains_key(*s))
                    .map(|s| format!("{s} (ground truth only)")),
            );
            if !unpaired.is_empty() {
                return Err(Error::UnpairedFiles(unpaired));
            }
            preds
                .into_iter()
                .map(|(s, p)| {
                    let g = gts[&s].clone();
                    (s, p, Some(g))
                })
                .collect()
        }
    };

    let scale = if bit8 { 255.0 } else { 1.0 };
    let uiqm_cfg = UiqmConfig::default();
    let rows: Vec<MetricRow> = pairs
        .par_iter()
        .map(|(stem, pred_path, gt_path)| -> Result<MetricRow> {
            let pred = load_image(pred_path)?;
            let mut row = MetricRow::empty(stem.clone());
            let quality = uiqm(&pred, &uiqm_cfg)?;
            row.uiqm = Some(quality.uiqm);
            row.uicm = Some(quality.uicm);
            row.uism = Some(quality.uism);
            row.uiconm = Some(quality.uiconm);
            if let Some(gt_path) = gt_path {
                let gt = load_image(gt_path)?;
                require_same_size(&pred, &gt, "evaluate_pair_dirs")
                    .map_err(|_| Error::Image(format!("{stem}: prediction/ground-truth sizes differ")))?;
                row.mse = Some(mse(&pred, &gt, scale)?);
                row.psnr = Some(psnr(&pred, &gt, scale)?);
                row.ssim = Some(ssim_index(&pred, &gt)?);
                row.ms_ssim = Some(ms_ssim(&pred, &gt)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let (mean, std) = MetricReport::aggregate(&rows);
    Ok(MetricReport { rows, mean, std })
}

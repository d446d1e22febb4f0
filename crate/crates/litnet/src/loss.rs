//! Training objective: weighted color-channel L1, SSIM, a pluggable
//! perceptual term, and their weighted total.
//!
//! All losses return scalar tensors and are differentiable end to end, so
//! callers can `backward()` the total directly. Inputs are expected in
//! `[N,C,H,W]` layout with channel order R, G, B.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor::ops;
use crate::tensor::{Element, Tensor};

/// Weights and stabilizers for the combined objective.
///
/// The SSIM kernel uses stabilizers `C_i = (K_i · L)²` with dynamic range
/// `L = 1` (images in `[0,1]`), an odd Gaussian window, and "valid"-style
/// evaluation: the map excludes the `(window−1)/2` border band where the
/// window would hang off the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Per-channel L1 weights, in channel order.
    pub w_r: f64,
    pub w_g: f64,
    pub w_b: f64,
    /// Term weights for the cl1 / perceptual / SSIM components.
    pub lambda_1: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
    /// SSIM stabilizer factors.
    pub k1: f64,
    pub k2: f64,
    /// SSIM Gaussian window size (odd) and standard deviation.
    pub ssim_window: usize,
    pub ssim_sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            w_r: 1.0,
            w_g: 1.5,
            w_b: 2.0,
            lambda_1: 1.0,
            lambda_p: 0.02,
            lambda_s: 0.5,
            k1: 0.01,
            k2: 0.03,
            ssim_window: 11,
            ssim_sigma: 1.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.w_r,
            self.w_g,
            self.w_b,
            self.lambda_1,
            self.lambda_p,
            self.lambda_s,
        ];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "loss config",
                "all loss weights must be finite and non-negative",
            ));
        }
        if self.ssim_window == 0 || self.ssim_window % 2 == 0 {
            return Err(Error::invalid("loss config", "ssim_window must be odd"));
        }
        if !(self.ssim_sigma > 0.0) || !self.k1.is_finite() || !self.k2.is_finite() {
            return Err(Error::invalid(
                "loss config",
                "ssim_sigma must be positive and K1/K2 finite",
            ));
        }
        Ok(())
    }
}

fn require_same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>, what: &'static str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(
            what,
            format!("shapes {:?} and {:?} differ", a.dims(), b.dims()),
        ));
    }
    Ok(())
}

/// Weighted color-channel L1: `cl1 = Σ_c w_c · mean|pred_c − target_c|`,
/// the per-channel mean running over batch and pixels jointly. The L1
/// subgradient at an exact zero difference is 0.
pub fn cl1_loss<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    require_same_shape(pred, target, "cl1_loss")?;
    let (_, c, _, _) = pred.shape().nchw()?;
    if c != 3 {
        return Err(Error::invalid("cl1_loss", format!("expected 3 channels, got {c}")));
    }
    let diff = ops::abs(&ops::sub(pred, target)?)?;
    let mut total: Option<Tensor<T>> = None;
    for (ch, w) in [cfg.w_r, cfg.w_g, cfg.w_b].into_iter().enumerate() {
        let term = ops::scale(&ops::mean_all(&ops::slice_channels(&diff, ch, 1)?)?, T::cast(w))?;
        total = Some(match total {
            None => term,
            Some(acc) => ops::add(&acc, &term)?,
        });
    }
    Ok(total.expect("three channel terms"))
}

/// The normalized Gaussian window as a `[1,1,k,k]` convolution weight.
fn gaussian_window<T: Element>(size: usize, sigma: f64) -> Tensor<T> {
    let half = (size as f64 - 1.0) / 2.0;
    let mut raw = vec![0.0f64; size * size];
    let mut sum = 0.0;
    for (i, v) in raw.iter_mut().enumerate() {
        let y = (i / size) as f64 - half;
        let x = (i % size) as f64 - half;
        *v = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    Tensor::from_fn([1, 1, size, size], |i| T::cast(raw[i] / sum))
}

/// Filter every channel of `x` with the shared single-channel window.
fn window_filter<T: Element>(x: &Tensor<T>, win: &Tensor<T>, pad: usize) -> Result<Tensor<T>> {
    let (_, c, _, _) = x.shape().nchw()?;
    let mut parts = Vec::with_capacity(c);
    for ch in 0..c {
        parts.push(ops::conv2d(&ops::slice_channels(x, ch, 1)?, win, None, pad)?);
    }
    let refs: Vec<&Tensor<T>> = parts.iter().collect();
    ops::concat_channels(&refs)
}

/// The two SSIM factors of Eq. 14 as separate maps — luminance
/// `(2μ_aμ_b+C1)/(μ_a²+μ_b²+C1)` and contrast-structure
/// `(2σ_ab+C2)/(σ_a²+σ_b²+C2)` — each `[N, C, H−2m, W−2m]` with
/// `m = (window−1)/2`. MS-SSIM consumes the factors individually;
/// [`ssim_map`] is their product.
pub fn ssim_components<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    cfg.validate()?;
    require_same_shape(a, b, "ssim_map")?;
    let (_, _, h, w) = a.shape().nchw()?;
    let k = cfg.ssim_window;
    if h < k || w < k {
        return Err(Error::invalid(
            "ssim_map",
            format!("image {h}x{w} is smaller than the {k}x{k} SSIM window"),
        ));
    }
    let pad = (k - 1) / 2;
    let win = gaussian_window::<T>(k, cfg.ssim_sigma);

    let mu_a = window_filter(a, &win, pad)?;
    let mu_b = window_filter(b, &win, pad)?;
    let e_aa = window_filter(&ops::mul(a, a)?, &win, pad)?;
    let e_bb = window_filter(&ops::mul(b, b)?, &win, pad)?;
    let e_ab = window_filter(&ops::mul(a, b)?, &win, pad)?;

    let mu_aa = ops::mul(&mu_a, &mu_a)?;
    let mu_bb = ops::mul(&mu_b, &mu_b)?;
    let mu_ab = ops::mul(&mu_a, &mu_b)?;
    let var_a = ops::sub(&e_aa, &mu_aa)?;
    let var_b = ops::sub(&e_bb, &mu_bb)?;
    let cov = ops::sub(&e_ab, &mu_ab)?;

    let c1 = T::cast(cfg.k1 * cfg.k1);
    let c2 = T::cast(cfg.k2 * cfg.k2);
    let two = T::cast(2.0);
    let lum = ops::div(
        &ops::add_scalar(&ops::scale(&mu_ab, two)?, c1)?,
        &ops::add_scalar(&ops::add(&mu_aa, &mu_bb)?, c1)?,
    )?;
    let cs = ops::div(
        &ops::add_scalar(&ops::scale(&cov, two)?, c2)?,
        &ops::add_scalar(&ops::add(&var_a, &var_b)?, c2)?,
    )?;

    // Drop the border band where zero padding contaminated the window.
    let crop = |t: &Tensor<T>| ops::crop_spatial(t, pad, pad, h - 2 * pad, w - 2 * pad);
    Ok((crop(&lum)?, crop(&cs)?))
}

/// Local SSIM values per Eq. 14, one map entry per interior pixel and
/// channel: output shape is `[N, C, H−2m, W−2m]` with `m = (window−1)/2`.
pub fn ssim_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, cfg: &LossConfig) -> Result<Tensor<T>> {
    let (lum, cs) = ssim_components(a, b, cfg)?;
    ops::mul(&lum, &cs)
}

/// `l_s = ½ · mean(1 − SSIM)` per Eq. 15; the mean over the batch absorbs
/// the paper's `1/n`.
pub fn ssim_loss<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<Tensor<T>> {
    let map = ssim_map(pred, target, cfg)?;
    let one_minus = ops::add_scalar(&ops::scale(&map, T::cast(-1.0))?, T::one())?;
    ops::scale(&ops::mean_all(&one_minus)?, T::cast(0.5))
}

/// A deterministic, frozen map from an RGB batch to a feature tensor — the
/// `V_f(φ)` of Eq. 13. Implementations hold their parameters as plain
/// (untracked) tensors so no gradient ever reaches them.
pub trait FeatureExtractor<T: Element> {
    fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

/// Passes the image through unchanged; with it, the perceptual loss reduces
/// to the mean squared pixel error.
pub struct IdentityExtractor;

impl<T: Element> FeatureExtractor<T> for IdentityExtractor {
    fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.clone())
    }
}

/// The shipped default extractor: a fixed, seeded stack of 3×3 convolutions
/// with ReLU activations (3 → 8 → 8 → 8 → 8 channels). It stands in for the
/// paper's pretrained VGG16 relu2_2 features while keeping the crate
/// self-contained; externally supplied weights can replace it via
/// [`ConvStackExtractor::from_checkpoint`].
pub struct ConvStackExtractor<T: Element> {
    layers: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Element> ConvStackExtractor<T> {
    pub const WIDTH: usize = 8;
    pub const DEPTH: usize = 4;

    /// He-initialized random weights drawn deterministically from `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = Stream::seeded(seed);
        let mut layers = Vec::with_capacity(Self::DEPTH);
        let mut in_ch = 3;
        for _ in 0..Self::DEPTH {
            let fan_in = (in_ch * 9) as f64;
            let std = (2.0 / fan_in).sqrt();
            let weight = Tensor::from_fn([Self::WIDTH, in_ch, 3, 3], |_| {
                T::cast(rng.normal() * std)
            });
            let bias = Tensor::zeros([Self::WIDTH]);
            layers.push((weight, bias));
            in_ch = Self::WIDTH;
        }
        ConvStackExtractor { layers }
    }

    /// The layer tensors under the names [`from_checkpoint`] expects
    /// (`extractor.convN.weight` / `.bias`), for writing a weights file.
    ///
    /// [`from_checkpoint`]: ConvStackExtractor::from_checkpoint
    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, (w, b))| {
                [
                    (format!("extractor.conv{}.weight", i + 1), w.clone()),
                    (format!("extractor.conv{}.bias", i + 1), b.clone()),
                ]
            })
            .collect()
    }

    /// Loads extractor weights from a checkpoint file (the same binary
    /// format models use). The file's parameter table must contain entries
    /// named `extractor.conv1.weight`, `extractor.conv1.bias`,
    /// `extractor.conv2.weight`, … for consecutive layers; its config block
    /// is ignored. This is the hook for substituting externally exported
    /// feature weights (e.g. a VGG16 slice) for the seeded default: each
    /// weight must be `[out, in, k, k]` with odd `k`, each bias `[out]`,
    /// and consecutive layers must chain channel counts.
    pub fn from_checkpoint(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let ckpt = crate::checkpoint::load_checkpoint::<T>(path)?;
        let mut layers = Vec::new();
        loop {
            let idx = layers.len() + 1;
            let wname = format!("extractor.conv{idx}.weight");
            let bname = format!("extractor.conv{idx}.bias");
            let weight = ckpt.params.iter().find(|(n, _, _)| *n == wname);
            let Some((_, _, weight)) = weight else { break };
            let Some((_, _, bias)) = ckpt.params.iter().find(|(n, _, _)| *n == bname) else {
                return Err(Error::invalid("extractor checkpoint", format!("{bname} missing")));
            };
            let dims = weight.dims();
            if dims.len() != 4 || dims[2] != dims[3] || dims[2] % 2 == 0 {
                return Err(Error::invalid(
                    "extractor checkpoint",
                    format!("{wname} must be [out,in,k,k] with odd k, got {dims:?}"),
                ));
            }
            if bias.dims() != [dims[0]] {
                return Err(Error::invalid(
                    "extractor checkpoint",
                    format!("{bname} must have shape [{}]", dims[0]),
                ));
            }
            if let Some((prev, _)) = layers.last() {
                let prev: &Tensor<T> = prev;
                if dims[1] != prev.dims()[0] {
                    return Err(Error::invalid(
                        "extractor checkpoint",
                        format!("{wname} expects {} input channels", dims[1]),
                    ));
                }
            }
            layers.push((weight.detach(), bias.detach()));
        }
        if layers.is_empty() {
            return Err(Error::invalid(
                "extractor checkpoint",
                "no extractor.conv1.weight entry found",
            ));
        }
        Ok(ConvStackExtractor { layers })
    }
}

impl<T: Element> FeatureExtractor<T> for ConvStackExtractor<T> {
    fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.clone();
        for (weight, bias) in &self.layers {
            let k = weight.dims()[2];
            y = ops::relu(&ops::conv2d(&y, weight, Some(bias), (k - 1) / 2)?)?;
        }
        Ok(y)
    }
}

/// Mean squared distance between extractor features per Eq. 13. The target
/// branch is detached, so gradient flows through `pred` only.
pub fn perceptual_loss<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    extractor: &dyn FeatureExtractor<T>,
) -> Result<Tensor<T>> {
    require_same_shape(pred, target, "perceptual_loss")?;
    let fp = extractor.features(pred)?;
    let ft = extractor.features(target)?.detach();
    let diff = ops::sub(&fp, &ft)?;
    ops::mean_all(&ops::mul(&diff, &diff)?)
}

/// The total objective plus its per-term breakdown, all as scalar tensors.
/// `total` is exactly `λ1·cl1 + λp·perceptual + λs·ssim`, summed left to
/// right.
pub struct LossTerms<T: Element> {
    pub total: Tensor<T>,
    pub cl1: Tensor<T>,
    pub perceptual: Tensor<T>,
    pub ssim: Tensor<T>,
}

/// `l_T = λ1·cl1 + λp·l_p + λs·l_s` per Eq. 16.
pub fn total_loss<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &LossConfig,
    extractor: &dyn FeatureExtractor<T>,
) -> Result<LossTerms<T>> {
    let cl1 = cl1_loss(pred, target, cfg)?;
    let perceptual = perceptual_loss(pred, target, extractor)?;
    let ssim = ssim_loss(pred, target, cfg)?;
    let total = ops::add(
        &ops::add(
            &ops::scale(&cl1, T::cast(cfg.lambda_1))?,
            &ops::scale(&perceptual, T::cast(cfg.lambda_p))?,
        )?,
        &ops::scale(&ssim, T::cast(cfg.lambda_s))?,
    )?;
    Ok(LossTerms {
        total,
        cl1,
        perceptual,
        ssim,
    })
}

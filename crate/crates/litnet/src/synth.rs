//! Synthetic underwater degradation and procedural clean images — the
//! desk-scale stand-in for paired enhancement datasets.
//!
//! The degradation pipeline mimics how water damages a scene: wavelength-
//! dependent attenuation removes red first, scattering adds a veiling-light
//! haze and blur, and the sensor contributes noise.

use crate::error::{Error, Result};
use crate::image_io::Image;
use crate::rng::Stream;

/// Veiling-light color used by the haze term (greenish-blue water column).
pub const VEIL_RGB: [f64; 3] = [0.35, 0.65, 0.75];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationParams {
    /// Per-channel survival factors in `[0,1]`, R/G/B. Underwater, red is
    /// absorbed strongest, so its factor is the smallest by default.
    pub attenuation: [f64; 3],
    /// Gaussian blur standard deviation in pixels (0 = no blur).
    pub blur_sigma: f64,
    /// Additive Gaussian noise standard deviation (0 = no noise).
    pub noise_sigma: f64,
    /// Veiling-light blend factor in `[0,1]` (0 = no haze).
    pub haze: f64,
    pub seed: u64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        DegradationParams {
            attenuation: [0.55, 0.8, 0.9],
            blur_sigma: 1.0,
            noise_sigma: 0.02,
            haze: 0.25,
            seed: 0,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self) -> Result<()> {
        if self.attenuation.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("degradation", "attenuation must lie in [0,1]"));
        }
        if self.blur_sigma < 0.0 || self.noise_sigma < 0.0 || !(0.0..=1.0).contains(&self.haze) {
            return Err(Error::invalid(
                "degradation",
                "blur/noise sigmas must be ≥ 0 and haze in [0,1]",
            ));
        }
        Ok(())
    }
}

/// Separable Gaussian blur with replicate edge padding.
fn gaussian_blur(data: &mut Vec<f64>, w: usize, h: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    if radius == 0 {
        return;
    }
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut norm = 0.0;
    for i in -radius..=radius {
        let v = (-(i * i) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        norm += v;
    }
    for v in &mut kernel {
        *v /= norm;
    }

    let mut tmp = vec![0.0; data.len()];
    // Horizontal pass.
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += wgt * data[(y * w + sx) * 3 + c];
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    // Vertical pass.
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += wgt * tmp[(sy * w + x) * 3 + c];
                }
                data[(y * w + x) * 3 + c] = acc;
            }
        }
    }
}

/// `clamp(attenuate(blur(haze(noise(clean)))))`, deterministic per seed.
/// Zero-strength parameters reproduce the input exactly.
pub fn synth_degrade(clean: &Image, p: &DegradationParams) -> Result<Image> {
    p.validate()?;
    let (w, h) = (clean.width(), clean.height());
    let mut data = clean.data().to_vec();
    let mut rng = Stream::seeded(p.seed);

    if p.noise_sigma > 0.0 {
        for v in &mut data {
            *v += p.noise_sigma * rng.normal();
        }
    }
    if p.haze > 0.0 {
        for (i, v) in data.iter_mut().enumerate() {
            *v = (1.0 - p.haze) * *v + p.haze * VEIL_RGB[i % 3];
        }
    }
    if p.blur_sigma > 0.0 {
        gaussian_blur(&mut data, w, h, p.blur_sigma);
    }
    for (i, v) in data.iter_mut().enumerate() {
        *v = (*v * p.attenuation[i % 3]).clamp(0.0, 1.0);
    }
    Image::new(w, h, data)
}

/// A procedural "clean" image: smooth per-channel gradients with a few
/// soft-edged random disks. Deterministic per seed, values in `[0,1]`.
pub fn procedural_clean(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = Stream::seeded(seed ^ 0x636C65616E);
    let (fw, fh) = (width.max(1) as f64, height.max(1) as f64);

    // Background: per-channel tilted sinusoid fields.
    let mut fields = Vec::with_capacity(3);
    for _ in 0..3 {
        let base = rng.range(0.25, 0.75);
        let amp = rng.range(0.1, 0.22);
        let (kx, ky) = (rng.range(1.0, 3.5), rng.range(1.0, 3.5));
        let phase = rng.range(0.0, std::f64::consts::TAU);
        fields.push(move |x: f64, y: f64| {
            base + amp * (kx * std::f64::consts::TAU * x + ky * std::f64::consts::TAU * y + phase).sin()
        });
    }

    struct Disk {
        cx: f64,
        cy: f64,
        r: f64,
        color: [f64; 3],
    }
    let disks: Vec<Disk> = (0..4)
        .map(|_| Disk {
            cx: rng.range(0.1, 0.9),
            cy: rng.range(0.1, 0.9),
            r: rng.range(0.08, 0.25),
            color: [rng.uniform(), rng.uniform(), rng.uniform()],
        })
        .collect();

    let mut data = vec![0.0; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 / fw, y as f64 / fh);
            let mut px = [fields[0](fx, fy), fields[1](fx, fy), fields[2](fx, fy)];
            for d in &disks {
                let dist = ((fx - d.cx).powi(2) + (fy - d.cy).powi(2)).sqrt();
                // Soft edge over 15% of the radius.
                let t = ((d.r - dist) / (0.15 * d.r)).clamp(0.0, 1.0);
                for c in 0..3 {
                    px[c] = (1.0 - t) * px[c] + t * d.color[c];
                }
            }
            for c in 0..3 {
                data[(y * width + x) * 3 + c] = px[c].clamp(0.0, 1.0);
            }
        }
    }
    Image::new(width, height, data).expect("sized buffer")
}

/// `count` (degraded, clean) pairs at the given size; pair `i` uses clean
/// seed `seed + i` and degradation seed `p.seed + i` so the set is fixed
/// for a given configuration.
pub fn synth_pairs(
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
    p: &DegradationParams,
) -> Result<Vec<(Image, Image)>> {
    (0..count)
        .map(|i| {
            let clean = procedural_clean(width, height, seed.wrapping_add(i as u64));
            let params = DegradationParams {
                seed: p.seed.wrapping_add(i as u64),
                ..*p
            };
            Ok((synth_degrade(&clean, &params)?, clean))
        })
        .collect()
}

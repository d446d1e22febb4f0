//! 8-bit RGB PNG loading/saving and Image ⇄ tensor conversion.
//!
//! Pixels live as `f64` in `[0,1]`, HWC row-major, channel order R, G, B.
//! Loading divides by 255; saving multiplies by 255 and rounds half up, so
//! `load(save(x)) == x` whenever `x` is already 8-bit-quantized.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Wrap HWC RGB data; `data.len()` must be `height * width * 3`.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Image> {
        if data.len() != width * height * 3 {
            return Err(Error::Image(format!(
                "{}x{} RGB image needs {} values, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// HWC row-major RGB values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let at = (y * self.width + x) * 3;
        [self.data[at], self.data[at + 1], self.data[at + 2]]
    }

    /// `[1, 3, H, W]` tensor in the model's layout.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let (h, w) = (self.height, self.width);
        Tensor::from_fn([1, 3, h, w], |i| {
            let c = i / (h * w);
            let y = (i / w) % h;
            let x = i % w;
            T::cast(self.data[(y * w + x) * 3 + c])
        })
    }

    /// Back from a `[1, 3, H, W]` (or `[3, H, W]`) tensor, clamping to `[0,1]`.
    pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Result<Image> {
        let dims = t.dims();
        let (c, h, w) = match dims {
            [1, c, h, w] | [c, h, w] => (*c, *h, *w),
            _ => {
                return Err(Error::Image(format!(
                    "expected a [1,3,H,W] or [3,H,W] tensor, got {dims:?}"
                )))
            }
        };
        if c != 3 {
            return Err(Error::Image(format!("expected 3 channels, got {c}")));
        }
        let src = t.data();
        let mut data = vec![0.0; h * w * 3];
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[(y * w + x) * 3 + ch] = src[(ch * h + y) * w + x].as_f64().clamp(0.0, 1.0);
                }
            }
        }
        Image::new(w, h, data)
    }
}

/// Load an 8-bit PNG as RGB in `[0,1]`. Grayscale is promoted to RGB; an
/// alpha channel is dropped with a warning; 16-bit depth is rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    use image::DynamicImage as D;
    let rgb = match img {
        D::ImageRgb8(buf) => buf,
        D::ImageRgba8(buf) => {
            log::warn!("{}: dropping alpha channel", path.display());
            D::ImageRgba8(buf).to_rgb8()
        }
        D::ImageLuma8(buf) => D::ImageLuma8(buf).to_rgb8(),
        D::ImageLumaA8(buf) => {
            log::warn!("{}: dropping alpha channel", path.display());
            D::ImageLumaA8(buf).to_rgb8()
        }
        D::ImageLuma16(_) | D::ImageLumaA16(_) | D::ImageRgb16(_) | D::ImageRgba16(_) => {
            return Err(Error::Image(format!(
                "{}: 16-bit depth is unsupported (8-bit PNG expected)",
                path.display()
            )))
        }
        other => {
            return Err(Error::Image(format!(
                "{}: unsupported pixel format {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.as_raw().iter().map(|v| *v as f64 / 255.0).collect();
    Image::new(w, h, data)
}

/// Save as 8-bit RGB PNG; values are clamped to `[0,1]` and scaled by 255
/// with round-half-up.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .expect("sized buffer");
    buf.save(path)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// The PNG files in a directory keyed by file stem (sorted order).
pub fn png_stems(dir: &Path) -> Result<std::collections::BTreeMap<String, std::path::PathBuf>> {
    let mut stems = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Image(format!("unusable file name {}", path.display())))?;
            stems.insert(stem.to_string(), path.clone());
        }
    }
    if stems.is_empty() {
        return Err(Error::Image(format!("no PNG files in {}", dir.display())));
    }
    Ok(stems)
}

/// Downsample by `factor` using mean pooling; dimensions must divide evenly.
pub fn downsample_mean(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 || img.width() % factor != 0 || img.height() % factor != 0 {
        return Err(Error::Image(format!(
            "{}x{} image does not divide by pooling factor {factor}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width() / factor, img.height() / factor);
    let mut data = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut sum = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        sum += img.data()[((y * factor + dy) * img.width() + x * factor + dx) * 3 + c];
                    }
                }
                data[(y * w + x) * 3 + c] = sum / (factor * factor) as f64;
            }
        }
    }
    Image::new(w, h, data)
}

/// Reflection-pad the bottom/right of `x` so both spatial dims become
/// multiples of `multiple`, returning the padded tensor and the original
/// size for [`crop_back`]. Mirror-without-repeat padding needs the pad to
/// be smaller than the image, so inputs must have `H, W ≥ 2` (and in
/// practice ≥ the residue being padded).
pub fn reflect_pad_to_multiple<T: Element>(
    x: &Tensor<T>,
    multiple: usize,
) -> Result<(Tensor<T>, (usize, usize))> {
    let (n, c, h, w) = x.shape().nchw()?;
    let ph = h.next_multiple_of(multiple) - h;
    let pw = w.next_multiple_of(multiple) - w;
    if ph == 0 && pw == 0 {
        return Ok((x.clone(), (h, w)));
    }
    if ph >= h || pw >= w {
        return Err(Error::Image(format!(
            "{h}x{w} image is too small to reflection-pad to a multiple of {multiple}"
        )));
    }
    let (oh, ow) = (h + ph, w + pw);
    let src = x.data();
    let mirror = |i: usize, size: usize| if i < size { i } else { 2 * size - 2 - i };
    let out = Tensor::from_fn([n, c, oh, ow], |i| {
        let x_ = mirror(i % ow, w);
        let y_ = mirror((i / ow) % oh, h);
        let nc = i / (oh * ow);
        src[(nc * h + y_) * w + x_]
    });
    Ok((out, (h, w)))
}

/// Undo [`reflect_pad_to_multiple`] after scaling the size by `scale`
/// (1 for enhancement, the SR factor for super-resolution).
pub fn crop_back<T: Element>(
    x: &Tensor<T>,
    original: (usize, usize),
    scale: usize,
) -> Result<Tensor<T>> {
    crate::tensor::ops::crop_spatial(x, 0, 0, original.0 * scale, original.1 * scale)
}

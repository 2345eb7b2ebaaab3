//! 8-bit PNG previews of latent tensors.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::LatentTensor;

/// Channel-wise min-max map to `0..=255`; a constant channel maps to 0.
fn normalize_channel(t: &LatentTensor, ch: usize) -> Vec<u8> {
    let (h, w, _) = t.dims();
    let values = (0..h * w).map(|i| t.get(i / w, i % w, ch));
    let (lo, hi) = values
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = hi - lo;
    values
        .map(|v| {
            if span > 0.0 {
                (255.0 * (v - lo) / span).round() as u8
            } else {
                0
            }
        })
        .collect()
}

/// One channel renders as grayscale (channel 0 when there are two); three or
/// more render the first three as RGB.
pub fn render_image(t: &LatentTensor) -> Result<DynamicImage> {
    let (h, w, d) = t.dims();
    if h == 0 || w == 0 || d == 0 {
        return Err(Error::Format(format!("cannot render an empty {h}x{w}x{d} tensor")));
    }
    let (wu, hu) = (
        u32::try_from(w).map_err(|_| Error::Format("width too large".into()))?,
        u32::try_from(h).map_err(|_| Error::Format("height too large".into()))?,
    );
    if d < 3 {
        let gray = normalize_channel(t, 0);
        Ok(DynamicImage::ImageLuma8(GrayImage::from_raw(wu, hu, gray).expect("buffer size")))
    } else {
        let planes: Vec<Vec<u8>> = (0..3).map(|c| normalize_channel(t, c)).collect();
        let rgb = (0..h * w).flat_map(|i| [planes[0][i], planes[1][i], planes[2][i]]).collect();
        Ok(DynamicImage::ImageRgb8(RgbImage::from_raw(wu, hu, rgb).expect("buffer size")))
    }
}

pub fn render_png(t: &LatentTensor, path: impl AsRef<Path>) -> Result<()> {
    render_image(t)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Pixel values of an 8-bit image as a tensor (1 or 3 channels).
pub fn image_to_tensor(img: &DynamicImage) -> LatentTensor {
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            LatentTensor::from_fn(h as usize, w as usize, 1, |r, c, _| g.get_pixel(c as u32, r as u32).0[0] as f64)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            LatentTensor::from_fn(h as usize, w as usize, 3, |r, c, k| rgb.get_pixel(c as u32, r as u32).0[k] as f64)
        }
    }
}

pub fn load_png(path: impl AsRef<Path>) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Format(e.to_string()))
}

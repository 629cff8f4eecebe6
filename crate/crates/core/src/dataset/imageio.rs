use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};

/// Load a PNG or PPM file as 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_png(path: &Path, image: &RgbImage) -> Result<()> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Bilinear resample to exactly `width x height`, sampling at pixel
/// centers: destination `x` reads source `(x + 0.5) * sw / dw − 0.5`,
/// clamped to the border. Conformant inputs are returned unchanged.
pub fn resize_to_window(image: &RgbImage, width: u32, height: u32) -> Result<RgbImage> {
    if width == 0 || height == 0 {
        return Err(Error::Argument(format!(
            "target size {width}x{height} is empty"
        )));
    }
    let (sw, sh) = image.dimensions();
    if sw == 0 || sh == 0 {
        return Err(Error::Argument("cannot resize a zero-area image".into()));
    }
    if (sw, sh) == (width, height) {
        return Ok(image.clone());
    }
    let taps = |dst: u32, src: u32| -> Vec<(usize, usize, f64)> {
        (0..dst)
            .map(|d| {
                let s = ((f64::from(d) + 0.5) * f64::from(src) / f64::from(dst) - 0.5)
                    .clamp(0.0, f64::from(src - 1));
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src as usize - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let xs = taps(width, sw);
    let ys = taps(height, sh);
    let src = image.as_raw();
    let px = |x: usize, y: usize, c: usize| f64::from(src[(y * sw as usize + x) * 3 + c]);
    let mut out = Vec::with_capacity((width * height * 3) as usize);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
                let bottom = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(RgbImage::from_raw(width, height, out).expect("sized buffer"))
}

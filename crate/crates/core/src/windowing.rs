//! Sliding-window geometry over equirectangular panoramas.
//!
//! A panorama of width `W` is scanned by windows of length `W / S` that move
//! in steps of `W / N`. Plain layouts stop at the last window that fits
//! inside the image; cyclic layouts keep going until every one of the `N`
//! stride positions has a window, completing the overflow with columns from
//! the left border.

use image::RgbImage;

use crate::error::{Error, Result};

/// Default span divisor: the window covers one eighth of the panorama.
pub const DEFAULT_SPAN_DIVISOR: u32 = 8;

/// Stride and span rule for one sliding-window scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowConfig {
    /// `N`: the stride is `pano_width / N`.
    pub stride_divisor: u32,
    /// `S`: the window length is `pano_width / S`.
    pub span_divisor: u32,
    pub cyclic: bool,
}

impl WindowConfig {
    pub fn new(stride_divisor: u32, span_divisor: u32, cyclic: bool) -> Result<Self> {
        let cfg = Self {
            stride_divisor,
            span_divisor,
            cyclic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `×N` with the default span of one eighth.
    pub fn times(stride_divisor: u32, cyclic: bool) -> Result<Self> {
        Self::new(stride_divisor, DEFAULT_SPAN_DIVISOR, cyclic)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride_divisor == 0 || self.span_divisor == 0 {
            return Err(Error::Config(format!(
                "stride divisor ({}) and span divisor ({}) must be positive",
                self.stride_divisor, self.span_divisor
            )));
        }
        if self.stride_divisor < self.span_divisor {
            return Err(Error::Config(format!(
                "stride divisor {} is smaller than span divisor {}: stride would exceed the window length",
                self.stride_divisor, self.span_divisor
            )));
        }
        Ok(())
    }

    /// Fraction of each window shared with its successor, `1 - S/N`.
    pub fn overlap_fraction(&self) -> f64 {
        1.0 - f64::from(self.span_divisor) / f64::from(self.stride_divisor)
    }

    /// Short label such as `x16` or `x16-cyclic` (`-sS` is appended for a
    /// non-default span).
    pub fn label(&self) -> String {
        let mut s = format!("x{}", self.stride_divisor);
        if self.span_divisor != DEFAULT_SPAN_DIVISOR {
            s.push_str(&format!("-s{}", self.span_divisor));
        }
        if self.cyclic {
            s.push_str("-cyclic");
        }
        s
    }
}

/// One window position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOffset {
    pub start_px: u32,
    /// The window extends past the right border.
    pub wraps: bool,
}

/// Concrete window positions for one panorama width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLayout {
    pub offsets: Vec<WindowOffset>,
    pub window_len_px: u32,
    pub stride_px: u32,
    pub pano_width_px: u32,
}

impl WindowLayout {
    /// Number of windows `K`.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Column ranges `[start, end)` covered by window `index`, one range for
    /// a plain window and two for a wrapping window.
    pub fn column_spans(&self, index: usize) -> Result<Vec<(u32, u32)>> {
        let off = self.offsets.get(index).ok_or(Error::Bounds {
            index,
            len: self.offsets.len(),
        })?;
        let end = off.start_px + self.window_len_px;
        if off.wraps {
            Ok(vec![
                (off.start_px, self.pano_width_px),
                (0, end - self.pano_width_px),
            ])
        } else {
            Ok(vec![(off.start_px, end)])
        }
    }
}

pub fn compute_layout(pano_width_px: u32, config: &WindowConfig) -> Result<WindowLayout> {
    config.validate()?;
    if pano_width_px == 0 {
        return Err(Error::Config("panorama width must be positive".into()));
    }
    for (name, div) in [
        ("stride divisor", config.stride_divisor),
        ("span divisor", config.span_divisor),
    ] {
        if !pano_width_px.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "panorama width {pano_width_px} is not divisible by {name} {div}"
            )));
        }
    }
    let window_len_px = pano_width_px / config.span_divisor;
    let stride_px = pano_width_px / config.stride_divisor;

    let count = if config.cyclic {
        config.stride_divisor
    } else {
        (pano_width_px - window_len_px) / stride_px + 1
    };
    let offsets = (0..count)
        .map(|k| {
            let start_px = k * stride_px;
            WindowOffset {
                start_px,
                wraps: start_px + window_len_px > pano_width_px,
            }
        })
        .collect();

    Ok(WindowLayout {
        offsets,
        window_len_px,
        stride_px,
        pano_width_px,
    })
}

/// Copy window `index` out of `pano`. Wrapping windows are completed with
/// columns from the left border.
pub fn extract_window(pano: &RgbImage, layout: &WindowLayout, index: usize) -> Result<RgbImage> {
    if pano.width() != layout.pano_width_px {
        return Err(Error::Argument(format!(
            "panorama width {} does not match layout width {}",
            pano.width(),
            layout.pano_width_px
        )));
    }
    let off = layout.offsets.get(index).ok_or(Error::Bounds {
        index,
        len: layout.offsets.len(),
    })?;
    let (w, h) = (layout.window_len_px, pano.height());
    let pano_w = layout.pano_width_px as usize;
    let src = pano.as_raw();
    let mut out = vec![0u8; (w * h * 3) as usize];
    let row_bytes = w as usize * 3;
    for y in 0..h as usize {
        let src_row = &src[y * pano_w * 3..(y + 1) * pano_w * 3];
        let dst_row = &mut out[y * row_bytes..(y + 1) * row_bytes];
        let start = off.start_px as usize;
        let first = (pano_w - start).min(w as usize);
        dst_row[..first * 3].copy_from_slice(&src_row[start * 3..(start + first) * 3]);
        if first < w as usize {
            let rest = w as usize - first;
            dst_row[first * 3..].copy_from_slice(&src_row[..rest * 3]);
        }
    }
    Ok(RgbImage::from_raw(w, h, out).expect("buffer sized to window"))
}

/// Roll an image horizontally by `shift` columns: output column `x` takes
/// input column `(x + shift) mod width`.
pub fn roll_columns(image: &RgbImage, shift: u32) -> RgbImage {
    let w = image.width();
    RgbImage::from_fn(w, image.height(), |x, y| {
        *image.get_pixel((x + shift) % w, y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn column_coded(width: u32, height: u32) -> RgbImage {
        RgbImage::from_fn(width, height, |x, y| {
            Rgb([(x % 256) as u8, (x / 256) as u8, y as u8])
        })
    }

    #[test]
    fn plain_x8_layout() {
        let layout = compute_layout(1024, &WindowConfig::times(8, false).unwrap()).unwrap();
        let starts: Vec<u32> = layout.offsets.iter().map(|o| o.start_px).collect();
        assert_eq!(starts, (0..8).map(|k| k * 128).collect::<Vec<_>>());
        assert_eq!(layout.window_len_px, 128);
        assert!(layout.offsets.iter().all(|o| !o.wraps));
    }

    #[test]
    fn cyclic_x16_layout() {
        let layout = compute_layout(1024, &WindowConfig::times(16, true).unwrap()).unwrap();
        assert_eq!(layout.len(), 16);
        assert_eq!(layout.stride_px, 64);
        let wrapping: Vec<u32> = layout
            .offsets
            .iter()
            .filter(|o| o.wraps)
            .map(|o| o.start_px)
            .collect();
        assert_eq!(wrapping, vec![960]);
    }

    #[test]
    fn plain_count_matches_brute_force() {
        for n in [8u32, 16, 32] {
            let layout = compute_layout(1024, &WindowConfig::times(n, false).unwrap()).unwrap();
            let stride = 1024 / n;
            let brute: Vec<u32> = (0..1024u32)
                .filter(|s| s % stride == 0 && s + 128 <= 1024)
                .collect();
            let got: Vec<u32> = layout.offsets.iter().map(|o| o.start_px).collect();
            assert_eq!(got, brute);
            assert_eq!(layout.len() as u32, 7 * n / 8 + 1);
        }
    }

    #[test]
    fn divisibility_errors_name_the_divisor() {
        let err = compute_layout(1024, &WindowConfig::times(24, false).unwrap()).unwrap_err();
        assert!(err.to_string().contains("stride divisor 24"), "{err}");
        let err = compute_layout(1000, &WindowConfig::new(8, 3, false).unwrap()).unwrap_err();
        assert!(err.to_string().contains("divisor"), "{err}");
    }

    #[test]
    fn stride_larger_than_window_is_rejected() {
        assert!(WindowConfig::new(4, 8, false).is_err());
        assert!(WindowConfig::new(0, 8, false).is_err());
    }

    #[test]
    fn overlap_fractions() {
        let f = |n| WindowConfig::times(n, false).unwrap().overlap_fraction();
        assert_eq!(f(8), 0.0);
        assert_eq!(f(16), 0.5);
        assert!((f(24) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f(32), 0.75);
    }

    #[test]
    fn wrapping_window_takes_left_border() {
        let pano = column_coded(1024, 4);
        let layout = compute_layout(1024, &WindowConfig::times(16, true).unwrap()).unwrap();
        let win = extract_window(&pano, &layout, 15).unwrap();
        assert_eq!(win.width(), 128);
        for x in 0..128u32 {
            let expect = (960 + x) % 1024;
            assert_eq!(*win.get_pixel(x, 2), *pano.get_pixel(expect, 2));
        }
    }

    #[test]
    fn plain_windows_equal_naive_slices() {
        let pano = column_coded(512, 8);
        let layout = compute_layout(512, &WindowConfig::times(32, false).unwrap()).unwrap();
        for i in 0..layout.len() {
            let win = extract_window(&pano, &layout, i).unwrap();
            let start = layout.offsets[i].start_px;
            let naive = image::imageops::crop_imm(&pano, start, 0, 64, 8).to_image();
            assert_eq!(win, naive, "window {i}");
        }
    }

    #[test]
    fn out_of_range_index() {
        let pano = column_coded(256, 2);
        let layout = compute_layout(256, &WindowConfig::times(8, false).unwrap()).unwrap();
        assert!(matches!(
            extract_window(&pano, &layout, 8),
            Err(Error::Bounds { index: 8, len: 8 })
        ));
    }

    #[test]
    fn non_overlapping_windows_reconstruct_the_panorama() {
        let pano = column_coded(256, 3);
        let layout = compute_layout(256, &WindowConfig::times(8, false).unwrap()).unwrap();
        let mut rebuilt = RgbImage::new(256, 3);
        for i in 0..layout.len() {
            let win = extract_window(&pano, &layout, i).unwrap();
            image::imageops::replace(&mut rebuilt, &win, i as i64 * 32, 0);
        }
        assert_eq!(rebuilt, pano);
    }

    #[test]
    fn cyclic_windows_cover_every_column() {
        for n in [8u32, 16, 24, 32] {
            let layout = compute_layout(768, &WindowConfig::times(n, true).unwrap()).unwrap();
            let mut covered = vec![false; 768];
            for i in 0..layout.len() {
                for (a, b) in layout.column_spans(i).unwrap() {
                    covered[a as usize..b as usize]
                        .iter_mut()
                        .for_each(|c| *c = true);
                }
            }
            assert!(covered.iter().all(|&c| c), "x{n}");
        }
    }

    #[test]
    fn rolling_by_stride_permutes_cyclic_windows() {
        let pano = column_coded(512, 2);
        let layout = compute_layout(512, &WindowConfig::times(16, true).unwrap()).unwrap();
        let k = layout.len();
        for shift_steps in [1usize, 3, 15] {
            let rolled = roll_columns(&pano, shift_steps as u32 * layout.stride_px);
            for i in 0..k {
                assert_eq!(
                    extract_window(&rolled, &layout, i).unwrap(),
                    extract_window(&pano, &layout, (i + shift_steps) % k).unwrap()
                );
            }
        }
    }
}

use image::{Rgb, RgbImage};
use panowindow::WindowLayout;

use crate::error::CliResult;

pub const OUTLINE: Rgb<u8> = Rgb([255, 32, 32]);
pub const THICKNESS: u32 = 2;

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

/// One rectangle per contiguous column span of window `index`; a wrapping
/// window yields one at each border.
pub fn window_rects(layout: &WindowLayout, index: usize, height: u32) -> CliResult<Vec<Rect>> {
    Ok(layout
        .column_spans(index)?
        .into_iter()
        .map(|(x0, x1)| Rect {
            x0,
            y0: 0,
            x1,
            y1: height,
        })
        .collect())
}

pub fn draw_outline(img: &mut RgbImage, r: Rect, color: Rgb<u8>, thickness: u32) {
    let (w, h) = img.dimensions();
    let (x1, y1) = (r.x1.min(w), r.y1.min(h));
    for y in r.y0..y1 {
        for x in r.x0..x1 {
            let edge = x < r.x0 + thickness
                || x + thickness >= x1
                || y < r.y0 + thickness
                || y + thickness >= y1;
            if edge {
                img.put_pixel(x, y, color);
            }
        }
    }
}

pub fn annotate(
    pano: &RgbImage,
    layout: &WindowLayout,
    index: usize,
) -> CliResult<(RgbImage, Vec<Rect>)> {
    let rects = window_rects(layout, index, pano.height())?;
    let mut out = pano.clone();
    for r in &rects {
        draw_outline(&mut out, *r, OUTLINE, THICKNESS);
    }
    Ok((out, rects))
}

#[cfg(test)]
mod tests {
    use super::*;
    use panowindow::{compute_layout, WindowConfig};

    #[test]
    fn rects_follow_layout_offsets() {
        let layout = compute_layout(1024, &WindowConfig::times(16, true).unwrap()).unwrap();
        assert_eq!(
            window_rects(&layout, 3, 128).unwrap(),
            vec![Rect {
                x0: 192,
                y0: 0,
                x1: 320,
                y1: 128
            }]
        );
        assert_eq!(
            window_rects(&layout, 15, 128).unwrap(),
            vec![
                Rect {
                    x0: 960,
                    y0: 0,
                    x1: 1024,
                    y1: 128
                },
                Rect {
                    x0: 0,
                    y0: 0,
                    x1: 64,
                    y1: 128
                }
            ]
        );
    }

    #[test]
    fn outline_only_touches_the_border() {
        let mut img = RgbImage::new(20, 10);
        draw_outline(
            &mut img,
            Rect {
                x0: 4,
                y0: 0,
                x1: 12,
                y1: 10,
            },
            OUTLINE,
            2,
        );
        assert_eq!(*img.get_pixel(4, 5), OUTLINE);
        assert_eq!(*img.get_pixel(11, 5), OUTLINE);
        assert_eq!(*img.get_pixel(7, 1), OUTLINE);
        assert_eq!(*img.get_pixel(7, 5), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(3, 5), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(12, 5), Rgb([0, 0, 0]));
    }
}

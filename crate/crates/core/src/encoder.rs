//! Global descriptors for perspective images and panorama windows.
//!
//! The built-in encoder is deliberately simple and fully deterministic:
//!
//! 1. per-pixel gradients (central differences, strongest RGB channel);
//! 2. a magnitude-weighted, softly binned orientation histogram per small
//!    square tile of `tile_px` pixels;
//! 3. GeM pooling of the tile histograms inside each cell of a coarse
//!    `tile_grid`, giving `rows * cols * orientation_bins` raw features;
//! 4. L2 normalization, an optional linear [`ProjectionHead`], and a final
//!    L2 normalization.
//!
//! Anything that maps an image to a unit vector can stand in for it through
//! the [`Encoder`] trait.

use std::f64::consts::PI;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::windowing::{compute_layout, extract_window, WindowConfig, WindowLayout};

/// Unit-norm feature vector. Values are stored in single precision, the
/// precision of the embedding exchange format, so that serialization is
/// lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f32>,
}

impl Descriptor {
    /// Wrap values that are already normalized (e.g. read back from disk).
    pub fn from_values(values: Vec<f32>) -> Self {
        Self { values }
    }

    /// L2-normalize `raw`. A zero (or non-finite norm) input maps to `e1`;
    /// the flag reports whether that fallback fired.
    pub fn normalize(raw: &[f64]) -> (Self, bool) {
        let (unit, fallback) = l2_normalize(raw);
        (
            Self {
                values: unit.iter().map(|&v| v as f32).collect(),
            },
            fallback,
        )
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-window descriptors of one panorama, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoDescriptor {
    pub windows: Vec<Descriptor>,
    pub layout: WindowLayout,
}

impl PanoDescriptor {
    pub fn new(windows: Vec<Descriptor>, layout: WindowLayout) -> Result<Self> {
        if windows.len() != layout.len() {
            return Err(Error::Argument(format!(
                "{} window descriptors for a layout of {} windows",
                windows.len(),
                layout.len()
            )));
        }
        if let Some(first) = windows.first() {
            let d = first.dim();
            if windows.iter().any(|w| w.dim() != d) {
                return Err(Error::Argument(
                    "window descriptors have mixed dimensions".into(),
                ));
            }
        }
        Ok(Self { windows, layout })
    }

    pub fn dim(&self) -> usize {
        self.windows.first().map_or(0, Descriptor::dim)
    }

    /// Concatenation of all window descriptors.
    pub fn concatenated(&self) -> Vec<f32> {
        self.windows
            .iter()
            .flat_map(|w| w.values().iter().copied())
            .collect()
    }
}

/// Returns the unit vector and whether the `e1` fallback was used.
pub(crate) fn l2_normalize(raw: &[f64]) -> (Vec<f64>, bool) {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        (raw.iter().map(|v| v / norm).collect(), false)
    } else {
        let mut e1 = vec![0.0; raw.len()];
        if let Some(first) = e1.first_mut() {
            *first = 1.0;
        }
        (e1, true)
    }
}

/// Generalized mean, component-wise: `((1/n) Σ xᵢᵖ)^(1/p)`.
pub fn gem_pool<V: AsRef<[f64]>>(vectors: &[V], p: f64) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Argument("gem_pool needs at least one vector".into()))?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain(format!(
            "GeM power must be positive, got {p}"
        )));
    }
    let dim = first.as_ref().len();
    let mut acc = vec![0.0f64; dim];
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Argument(format!(
                "gem_pool dimension mismatch: {} vs {dim}",
                v.len()
            )));
        }
        for (j, &x) in v.iter().enumerate() {
            if !(x >= 0.0) {
                return Err(Error::Domain(format!(
                    "gem_pool needs nonnegative inputs, got {x}"
                )));
            }
            acc[j] += x.powf(p);
            lo[j] = lo[j].min(x);
            hi[j] = hi[j].max(x);
        }
    }
    let n = vectors.len() as f64;
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(j, s)| (s / n).powf(1.0 / p).clamp(lo[j], hi[j]))
        .collect())
}

/// Trainable linear map applied to raw features before the final
/// normalization. `matrix` is row-major `d_in x d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    matrix: Vec<f64>,
    d_in: usize,
    d_out: usize,
    pub trained_epochs: u32,
}

impl ProjectionHead {
    pub fn new(matrix: Vec<f64>, d_in: usize, d_out: usize) -> Result<Self> {
        if d_out < 2 || d_in == 0 {
            return Err(Error::Config(format!(
                "projection head must be at least 1x2, got {d_in}x{d_out}"
            )));
        }
        if matrix.len() != d_in * d_out {
            return Err(Error::Config(format!(
                "projection matrix has {} entries, expected {d_in}x{d_out}",
                matrix.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "projection matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            matrix,
            d_in,
            d_out,
            trained_epochs: 0,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        Self::new(m, dim, dim).expect("identity is well formed")
    }

    /// Gaussian entries with variance `1 / d_in`.
    pub fn random(d_in: usize, d_out: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let m = (0..d_in * d_out).map(|_| normal.sample(&mut rng)).collect();
        Self::new(m, d_in, d_out)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut [f64] {
        &mut self.matrix
    }

    /// `y = Mᵀ x`, without normalization.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::Config(format!(
                "projection expects dimension {}, got {}",
                self.d_in,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.d_out];
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.matrix[i * self.d_out..(i + 1) * self.d_out];
            for (yj, &m) in y.iter_mut().zip(row) {
                *yj += xi * m;
            }
        }
        Ok(y)
    }

    /// 64-bit FNV-1a over the matrix bits and shape.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(&(self.d_in as u64).to_le_bytes());
        feed(&(self.d_out as u64).to_le_bytes());
        for v in &self.matrix {
            feed(&v.to_bits().to_le_bytes());
        }
        h
    }
}

/// Project already-normalized raw features and renormalize.
pub fn apply_projection(raw: &[f64], head: &ProjectionHead) -> Result<Descriptor> {
    let y = head.project(raw)?;
    Ok(Descriptor::normalize(&y).0)
}

/// Image to descriptor.
pub trait Encoder: Sync {
    fn dim(&self) -> usize;
    fn encode(&self, image: &RgbImage) -> Result<Descriptor>;
    /// Identifies the encoder configuration; indexes built with one encoder
    /// must not be queried with another.
    fn fingerprint(&self) -> String;
}

/// Configuration of the built-in gradient-histogram encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    /// Spatial cells `(rows, cols)`; each contributes one histogram block.
    pub tile_grid: (u32, u32),
    pub orientation_bins: u32,
    /// Side of the square tiles whose histograms are GeM-pooled within a
    /// cell. A value at least the cell size gives one tile per cell.
    pub tile_px: u32,
    pub gem_p: f64,
    pub projection: Option<ProjectionHead>,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            tile_grid: (4, 4),
            orientation_bins: 8,
            tile_px: 8,
            gem_p: 3.0,
            projection: None,
        }
    }
}

impl EncoderSpec {
    pub fn with_projection(mut self, head: ProjectionHead) -> Self {
        self.projection = Some(head);
        self
    }

    /// Dimension before projection.
    pub fn raw_dim(&self) -> usize {
        (self.tile_grid.0 * self.tile_grid.1 * self.orientation_bins) as usize
    }

    fn validate(&self) -> Result<()> {
        let (r, c) = self.tile_grid;
        if r == 0 || c == 0 || self.orientation_bins == 0 || self.tile_px == 0 {
            return Err(Error::Config(
                "tile grid, orientation bins and tile size must be positive".into(),
            ));
        }
        if !(self.gem_p > 0.0 && self.gem_p.is_finite()) {
            return Err(Error::Config(format!(
                "GeM power must be positive and finite, got {}",
                self.gem_p
            )));
        }
        if let Some(head) = &self.projection {
            if head.d_in() != self.raw_dim() {
                return Err(Error::Config(format!(
                    "projection expects {} inputs but the encoder produces {}",
                    head.d_in(),
                    self.raw_dim()
                )));
            }
        }
        Ok(())
    }

    /// Pooled histograms before any normalization. Block `(r, c)` occupies
    /// components `[(r * cols + c) * bins, (r * cols + c + 1) * bins)`.
    pub fn encode_histograms(&self, image: &RgbImage) -> Result<Vec<f64>> {
        self.validate()?;
        let (w, h) = image.dimensions();
        let (rows, cols) = self.tile_grid;
        if w < cols || h < rows {
            return Err(Error::Argument(format!(
                "image {w}x{h} is smaller than the {rows}x{cols} tile grid"
            )));
        }
        let bins = self.orientation_bins as usize;
        let tile = self.tile_px;
        let grad = GradientField::compute(image);

        let mut out = Vec::with_capacity(self.raw_dim());
        for r in 0..rows {
            let (y0, y1) = (r * h / rows, (r + 1) * h / rows);
            let tiles_y = (y1 - y0).div_ceil(tile);
            for c in 0..cols {
                let (x0, x1) = (c * w / cols, (c + 1) * w / cols);
                let tiles_x = (x1 - x0).div_ceil(tile);
                let mut hists = vec![vec![0.0f64; bins]; (tiles_x * tiles_y) as usize];
                for y in y0..y1 {
                    let ty = (y - y0) / tile;
                    for x in x0..x1 {
                        let tx = (x - x0) / tile;
                        let hist = &mut hists[(ty * tiles_x + tx) as usize];
                        grad.vote(x, y, hist);
                    }
                }
                out.extend(gem_pool(&hists, self.gem_p)?);
            }
        }
        Ok(out)
    }

    /// Unit-norm features before projection (the training head's input).
    pub fn encode_features(&self, image: &RgbImage) -> Result<Vec<f64>> {
        Ok(l2_normalize(&self.encode_histograms(image)?).0)
    }
}

impl Encoder for EncoderSpec {
    fn dim(&self) -> usize {
        self.projection
            .as_ref()
            .map_or_else(|| self.raw_dim(), ProjectionHead::d_out)
    }

    fn encode(&self, image: &RgbImage) -> Result<Descriptor> {
        let features = self.encode_features(image)?;
        match &self.projection {
            Some(head) => apply_projection(&features, head),
            None => Ok(Descriptor::normalize(&features).0),
        }
    }

    fn fingerprint(&self) -> String {
        let proj = match &self.projection {
            Some(head) => format!("{}x{}:{:016x}", head.d_in(), head.d_out(), head.checksum()),
            None => "none".to_string(),
        };
        format!(
            "gradhist-gem;grid={}x{};bins={};tile={};p={:?};proj={}",
            self.tile_grid.0,
            self.tile_grid.1,
            self.orientation_bins,
            self.tile_px,
            self.gem_p,
            proj
        )
    }
}

/// Per-pixel gradient of the channel with the largest magnitude.
struct GradientField {
    width: u32,
    magnitude: Vec<f64>,
    /// Unsigned orientation in `[0, π)`.
    angle: Vec<f64>,
}

impl GradientField {
    fn compute(image: &RgbImage) -> Self {
        let (w, h) = image.dimensions();
        let raw = image.as_raw();
        let at = |x: u32, y: u32, ch: usize| f64::from(raw[((y * w + x) * 3) as usize + ch]);
        let mut magnitude = Vec::with_capacity((w * h) as usize);
        let mut angle = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let mut best = (0.0f64, 0.0f64, 0.0f64);
                for ch in 0..3 {
                    let dx = at(xp, y, ch) - at(xm, y, ch);
                    let dy = at(x, yp, ch) - at(x, ym, ch);
                    let m2 = dx * dx + dy * dy;
                    if m2 > best.0 {
                        best = (m2, dx, dy);
                    }
                }
                magnitude.push(best.0.sqrt());
                let mut theta = best.2.atan2(best.1);
                if theta < 0.0 {
                    theta += PI;
                }
                if theta >= PI {
                    theta -= PI;
                }
                angle.push(theta);
            }
        }
        Self {
            width: w,
            magnitude,
            angle,
        }
    }

    /// Add pixel `(x, y)` to `hist`, splitting its weight linearly between
    /// the two nearest orientation bins (circularly).
    fn vote(&self, x: u32, y: u32, hist: &mut [f64]) {
        let i = (y * self.width + x) as usize;
        let m = self.magnitude[i];
        if m == 0.0 {
            return;
        }
        let bins = hist.len();
        let pos = self.angle[i] / PI * bins as f64 - 0.5;
        let lo = pos.floor();
        let frac = pos - lo;
        let lo = (lo as i64).rem_euclid(bins as i64) as usize;
        let hi = (lo + 1) % bins;
        hist[lo] += m * (1.0 - frac);
        hist[hi] += m * frac;
    }
}

/// Encode every window of `pano` independently.
pub fn encode_pano<E: Encoder + ?Sized>(
    pano: &RgbImage,
    encoder: &E,
    config: &WindowConfig,
) -> Result<PanoDescriptor> {
    let layout = compute_layout(pano.width(), config)?;
    let windows = (0..layout.len())
        .map(|i| encoder.encode(&extract_window(pano, &layout, i)?))
        .collect::<Result<Vec<_>>>()?;
    PanoDescriptor::new(windows, layout)
}

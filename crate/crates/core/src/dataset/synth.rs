//! Procedural perspective-to-panorama datasets.
//!
//! Every place gets one horizontally periodic panorama (a wavy horizon,
//! building-like vertical bands, and scattered shapes and striped patches
//! that wrap across the seam) plus `queries_per_place` perspective crops
//! taken at random horizontal offsets and degraded with jitter, brightness
//! change and additive noise. Everything is a pure function of the seed.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::imageio::save_png;
use super::manifest::{write_manifest, ImageRecord, Role};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::windowing::DEFAULT_SPAN_DIVISOR;

const ORIGIN: GeoPoint = GeoPoint {
    easting_m: 500_000.0,
    northing_m: 4_000_000.0,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub num_places: usize,
    pub pano_width_px: u32,
    pub pano_height_px: u32,
    pub queries_per_place: usize,
    /// Uniform horizontal perturbation of each crop offset, in pixels.
    pub crop_jitter_px: u32,
    /// Standard deviation of additive Gaussian noise, as a fraction of 255.
    pub noise_level: f64,
    /// Brightness gain is drawn from `1 ± brightness_jitter`.
    pub brightness_jitter: f64,
    /// Fraction of queries whose crop crosses the right/left border.
    pub seam_straddle_fraction: f64,
    pub geo_spacing_m: f64,
    /// When set, crop offsets are drawn from multiples of this step before
    /// jitter; otherwise they are uniform.
    pub align_step_px: Option<u32>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 7,
            num_places: 50,
            pano_width_px: 1024,
            pano_height_px: 128,
            queries_per_place: 2,
            crop_jitter_px: 0,
            noise_level: 0.0,
            brightness_jitter: 0.0,
            seam_straddle_fraction: 0.0,
            geo_spacing_m: 40.0,
            align_step_px: None,
        }
    }
}

impl SynthParams {
    pub fn query_width_px(&self) -> u32 {
        self.pano_width_px / DEFAULT_SPAN_DIVISOR
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_places == 0 {
            return bad("need at least one place".into());
        }
        if self.pano_width_px == 0 || !self.pano_width_px.is_multiple_of(32) {
            return bad(format!(
                "panorama width {} must be a positive multiple of 32",
                self.pano_width_px
            ));
        }
        if self.pano_height_px < 8 {
            return bad(format!(
                "panorama height {} is too small",
                self.pano_height_px
            ));
        }
        if !(0.0..=1.0).contains(&self.seam_straddle_fraction) {
            return bad(format!(
                "seam straddle fraction {} is outside [0, 1]",
                self.seam_straddle_fraction
            ));
        }
        if !(self.geo_spacing_m > 25.0) {
            return bad(format!(
                "geo spacing {} m must exceed 25 m so places are unambiguous",
                self.geo_spacing_m
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!(
                "noise level {} must be nonnegative",
                self.noise_level
            ));
        }
        if !(0.0..1.0).contains(&self.brightness_jitter) {
            return bad(format!(
                "brightness jitter {} is outside [0, 1)",
                self.brightness_jitter
            ));
        }
        if let Some(step) = self.align_step_px {
            if step == 0 || step > self.pano_width_px {
                return bad(format!("alignment step {step} is out of range"));
            }
            if self.seam_straddle_fraction > 0.0 && step >= self.query_width_px() {
                return bad(format!(
                    "alignment step {step} leaves no aligned offset that crosses the seam"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthPano {
    pub id: String,
    pub place: usize,
    pub image: RgbImage,
    pub geo: GeoPoint,
}

#[derive(Debug, Clone)]
pub struct SynthQuery {
    pub id: String,
    /// Ground truth: index of the source panorama.
    pub place: usize,
    pub image: RgbImage,
    pub geo: GeoPoint,
    /// Left column of the crop in its source panorama.
    pub offset_px: u32,
    pub straddles_seam: bool,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub params: SynthParams,
    pub database: Vec<SynthPano>,
    pub queries: Vec<SynthQuery>,
}

fn place_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    rng
}

fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [(); 3].map(|_| rng.random_range(24..=232))
}

/// Horizontally wrapping canvas.
struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        let (w, h) = (i64::from(self.img.width()), i64::from(self.img.height()));
        if (0..h).contains(&y) {
            self.img.put_pixel(x.rem_euclid(w) as u32, y as u32, Rgb(c));
        }
    }
}

fn render_panorama(width: u32, height: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let (w, h) = (i64::from(width), i64::from(height));
    let wf = f64::from(width);
    let hf = f64::from(height);
    let sky = random_color(rng);
    let ground = random_color(rng);
    let freq = rng.random_range(1..=4) as f64;
    let phase = rng.random_range(0.0..2.0 * PI);
    let amp = rng.random_range(0.05..0.15) * hf;
    let tint = rng.random_range(0.0..2.0 * PI);
    let horizon: Vec<f64> = (0..width)
        .map(|x| 0.55 * hf + amp * (2.0 * PI * freq * f64::from(x) / wf + phase).sin())
        .collect();

    let mut canvas = Canvas {
        img: RgbImage::new(width, height),
    };
    for x in 0..w {
        for y in 0..h {
            let base = if (y as f64) < horizon[x as usize] {
                sky
            } else {
                ground
            };
            canvas.put(x, y, base);
        }
    }

    // building-like vertical bands rising from the horizon
    let n_bands = (width / 40).max(4);
    for _ in 0..n_bands {
        let x0 = rng.random_range(0..w);
        let bw = rng.random_range(8..=48);
        let top = rng.random_range(0.1 * hf..0.5 * hf) as i64;
        let color = random_color(rng);
        let windows = rng.random_bool(0.5).then(|| random_color(rng));
        for x in x0..x0 + bw {
            let bottom = horizon[x.rem_euclid(w) as usize] as i64 + 4;
            for y in top..bottom.min(h) {
                let lit = windows.filter(|_| (x - x0) % 8 >= 4 && (y - top) % 10 >= 5);
                canvas.put(x, y, lit.unwrap_or(color));
            }
        }
    }

    // scattered shapes
    let n_shapes = (width / 20).max(8);
    for _ in 0..n_shapes {
        let cx = rng.random_range(0..w);
        let cy = rng.random_range(0..h);
        let size = rng.random_range(5..=24) as i64;
        let color = random_color(rng);
        match rng.random_range(0..4) {
            0 => {
                for dy in -size..=size {
                    for dx in -size..=size {
                        if dx * dx + dy * dy <= size * size {
                            canvas.put(cx + dx, cy + dy, color);
                        }
                    }
                }
            }
            1 => {
                let sh = rng.random_range(3..=size.max(3));
                for dy in 0..sh {
                    for dx in 0..size * 2 {
                        canvas.put(cx + dx, cy + dy, color);
                    }
                }
            }
            2 => {
                let other = random_color(rng);
                let theta = rng.random_range(0.0..PI);
                let period = rng.random_range(3.0..9.0);
                let (c, s) = (theta.cos(), theta.sin());
                for dy in -size..=size {
                    for dx in -size..=size {
                        let t = (dx as f64 * c + dy as f64 * s) / period;
                        let col = if t.floor() as i64 % 2 == 0 {
                            color
                        } else {
                            other
                        };
                        canvas.put(cx + dx, cy + dy, col);
                    }
                }
            }
            _ => {
                for dy in 0..size {
                    for dx in -dy..=dy {
                        canvas.put(cx + dx, cy + dy, color);
                    }
                }
            }
        }
    }

    // periodic horizontal color drift and a vertical shade, so that no
    // region is perfectly flat
    let mut img = canvas.img;
    for (x, y, px) in img.enumerate_pixels_mut() {
        let drift = 20.0 * (2.0 * PI * f64::from(x) / wf + tint).cos();
        let shade = 16.0 * f64::from(y) / hf;
        for c in px.0.iter_mut() {
            *c = (f64::from(*c) + drift - shade).round().clamp(0.0, 255.0) as u8;
        }
    }
    img
}

/// Copy `width` columns starting at `offset`, wrapping past the right border.
fn crop_wrapping(pano: &RgbImage, offset: u32, width: u32) -> RgbImage {
    let w = pano.width();
    RgbImage::from_fn(width, pano.height(), |x, y| {
        *pano.get_pixel((offset + x) % w, y)
    })
}

fn degrade(img: &mut RgbImage, gain: f64, noise: Option<&Normal<f64>>, rng: &mut ChaCha8Rng) {
    for px in img.pixels_mut() {
        for c in px.0.iter_mut() {
            let mut v = f64::from(*c) * gain;
            if let Some(n) = noise {
                v += n.sample(rng);
            }
            *c = v.round().clamp(0.0, 255.0) as u8;
        }
    }
}

pub fn synth_dataset(params: &SynthParams) -> Result<SynthDataset> {
    params.validate()?;
    let w = params.pano_width_px;
    let qw = params.query_width_px();
    let cols = (params.num_places as f64).sqrt().ceil() as usize;

    let database: Vec<SynthPano> = (0..params.num_places)
        .map(|p| {
            let mut rng = place_rng(params.seed, 1, p);
            let image = render_panorama(w, params.pano_height_px, &mut rng);
            SynthPano {
                id: format!("db{p:04}"),
                place: p,
                image,
                geo: GeoPoint::new(
                    ORIGIN.easting_m + (p % cols) as f64 * params.geo_spacing_m,
                    ORIGIN.northing_m + (p / cols) as f64 * params.geo_spacing_m,
                ),
            }
        })
        .collect();

    let total = params.num_places * params.queries_per_place;
    let n_seam = (params.seam_straddle_fraction * total as f64).round() as usize;
    let mut seam_rng = place_rng(params.seed, 2, 0);
    let mut straddles = vec![false; total];
    for i in rand::seq::index::sample(&mut seam_rng, total, n_seam.min(total)) {
        straddles[i] = true;
    }

    let noise = (params.noise_level > 0.0)
        .then(|| Normal::new(0.0, params.noise_level * 255.0))
        .transpose()
        .map_err(|e| Error::Config(e.to_string()))?;

    let plain_max = w - qw;
    let mut queries = Vec::with_capacity(total);
    for (pano, place_queries) in database
        .iter()
        .zip(straddles.chunks(params.queries_per_place.max(1)))
    {
        for (j, &seam) in place_queries.iter().enumerate() {
            let mut rng = place_rng(params.seed, 3, pano.place * params.queries_per_place + j);
            // seam crops start in (w - qw, w); plain ones in [0, w - qw]
            let (lo, hi) = if seam {
                (plain_max + 1, w - 1)
            } else {
                (0, plain_max)
            };
            let base = match params.align_step_px {
                Some(step) => {
                    let first = lo.div_ceil(step);
                    let last = hi / step;
                    step * rng.random_range(first..=last)
                }
                None => rng.random_range(lo..=hi),
            };
            let j_px = i64::from(params.crop_jitter_px);
            let jitter = if j_px > 0 {
                rng.random_range(-j_px..=j_px)
            } else {
                0
            };
            let offset = (i64::from(base) + jitter).clamp(i64::from(lo), i64::from(hi)) as u32;

            let mut image = crop_wrapping(&pano.image, offset, qw);
            let gain = if params.brightness_jitter > 0.0 {
                1.0 + rng.random_range(-params.brightness_jitter..params.brightness_jitter)
            } else {
                1.0
            };
            if gain != 1.0 || noise.is_some() {
                degrade(&mut image, gain, noise.as_ref(), &mut rng);
            }
            let r = rng.random_range(0.0..0.99);
            let a = rng.random_range(0.0..2.0 * PI);
            queries.push(SynthQuery {
                id: format!("q{:04}-{j:02}", pano.place),
                place: pano.place,
                image,
                geo: GeoPoint::new(
                    pano.geo.easting_m + r * a.cos(),
                    pano.geo.northing_m + r * a.sin(),
                ),
                offset_px: offset,
                straddles_seam: seam,
            });
        }
    }

    Ok(SynthDataset {
        params: params.clone(),
        database,
        queries,
    })
}

impl SynthDataset {
    /// Write `database/*.png`, `queries/*.png`, `manifest.tsv` and
    /// `ground_truth.tsv` under `dir`. Returns the manifest path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        for sub in ["database", "queries"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let mut records = Vec::with_capacity(self.database.len() + self.queries.len());
        for p in &self.database {
            let rel = PathBuf::from("database").join(format!("{}.png", p.id));
            save_png(&dir.join(&rel), &p.image)?;
            records.push(ImageRecord {
                id: p.id.clone(),
                role: Role::Database,
                path: rel,
                geo: p.geo,
            });
        }
        let mut truth = String::from("# query_id\tplace\tdb_id\toffset_px\tstraddles_seam\n");
        for q in &self.queries {
            let rel = PathBuf::from("queries").join(format!("{}.png", q.id));
            save_png(&dir.join(&rel), &q.image)?;
            records.push(ImageRecord {
                id: q.id.clone(),
                role: Role::Query,
                path: rel,
                geo: q.geo,
            });
            truth.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                q.id, q.place, self.database[q.place].id, q.offset_px, q.straddles_seam
            ));
        }
        let truth_path = dir.join("ground_truth.tsv");
        fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;
        let manifest = dir.join("manifest.tsv");
        write_manifest(&manifest, &records)?;
        Ok(manifest)
    }
}

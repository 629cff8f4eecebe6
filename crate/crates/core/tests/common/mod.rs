// Brute-force reference implementations and random instance builders.
// Written independently of the library code paths they check.
#![allow(dead_code)]

use panowindow::windowing::WindowOffset;
use panowindow::{
    encoder::PanoDescriptor, triplet_loss_grad, Descriptor, LossConfig, ProjectionHead,
    WindowLayout,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn unit_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// A layout with `k` windows; geometry is irrelevant to distance code.
pub fn dummy_layout(k: usize) -> WindowLayout {
    WindowLayout {
        offsets: (0..k as u32)
            .map(|i| WindowOffset {
                start_px: i,
                wraps: false,
            })
            .collect(),
        window_len_px: 1,
        stride_px: 1,
        pano_width_px: k as u32,
    }
}

pub fn random_pano<R: Rng>(rng: &mut R, k: usize, dim: usize) -> PanoDescriptor {
    let windows = (0..k)
        .map(|_| Descriptor::from_values(unit_vec(rng, dim)))
        .collect();
    PanoDescriptor::new(windows, dummy_layout(k)).unwrap()
}

pub fn oracle_pdist(a: &[f32], b: &[f32], p: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `(min distance, first argmin)` by scanning every window.
pub fn oracle_window_distance(q: &Descriptor, pano: &PanoDescriptor, p: f64) -> (f64, usize) {
    let ds: Vec<f64> = pano
        .windows
        .iter()
        .map(|w| oracle_pdist(q.values(), w.values(), p))
        .collect();
    let min = ds.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, ds.iter().position(|&d| d == min).unwrap())
}

/// Ids sorted by `(distance, id)`.
pub fn oracle_rank(
    q: &Descriptor,
    db: &[(String, PanoDescriptor)],
    p: f64,
) -> Vec<(String, f64, usize)> {
    let mut all: Vec<(String, f64, usize)> = db
        .iter()
        .map(|(id, pano)| {
            let (d, w) = oracle_window_distance(q, pano, p);
            (id.clone(), d, w)
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Projected + normalized vector, computed from the row-major `d_in x d_out`
/// matrix by explicit index arithmetic.
pub fn oracle_embed(x: &[f64], m: &[f64], d_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; d_out];
    for j in 0..d_out {
        for (i, xi) in x.iter().enumerate() {
            y[j] += xi * m[i * d_out + j];
        }
    }
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    y.iter().map(|v| v / n).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub struct LossProbe {
    pub loss: f64,
    /// Smallest gap between the best and second-best window, over all panos.
    pub window_gap: f64,
    /// Smallest |hinge argument|.
    pub hinge_gap: f64,
    pub active: usize,
}

/// Euclidean window triplet loss in f64 directly from raw features.
pub fn oracle_loss(
    q: &[f64],
    pos: &[Vec<f64>],
    negs: &[Vec<Vec<f64>>],
    m: &[f64],
    d_out: usize,
    margin: f64,
) -> LossProbe {
    let qe = oracle_embed(q, m, d_out);
    let mut window_gap = f64::INFINITY;
    let mut best = |windows: &[Vec<f64>]| {
        let mut ds: Vec<f64> = windows
            .iter()
            .map(|w| dist2(&qe, &oracle_embed(w, m, d_out)))
            .collect();
        ds.sort_by(f64::total_cmp);
        if ds.len() > 1 {
            window_gap = window_gap.min(ds[1] - ds[0]);
        }
        ds[0]
    };
    let dp = best(pos);
    let mut loss = 0.0;
    let mut hinge_gap = f64::INFINITY;
    let mut active = 0;
    for n in negs {
        let h = dp - best(n) + margin;
        hinge_gap = hinge_gap.min(h.abs());
        if h > 0.0 {
            loss += h;
            active += 1;
        }
    }
    LossProbe {
        loss,
        window_gap,
        hinge_gap,
        active,
    }
}

/// Relative error between the analytic and central-difference gradients on
/// one random instance; `None` for instances too close to a kink.
pub fn gradient_case(rng: &mut ChaCha8Rng) -> Option<f64> {
    let (d_in, d_out) = (10, 4);
    let feats = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..d_in).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect()
    };
    let q = feats(rng, 1).remove(0);
    let pos = feats(rng, 3);
    let negs: Vec<Vec<Vec<f64>>> = (0..3).map(|_| feats(rng, 3)).collect();
    let m: Vec<f64> = (0..d_in * d_out)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let margin = 0.3;
    let probe = oracle_loss(&q, &pos, &negs, &m, d_out, margin);
    if probe.active == 0 || probe.window_gap < 1e-3 || probe.hinge_gap < 1e-3 {
        return None;
    }
    let head = ProjectionHead::new(m.clone(), d_in, d_out).unwrap();
    let cfg = LossConfig {
        margin,
        ..LossConfig::default()
    };
    let got = triplet_loss_grad(&q, &pos, &negs, &head, &cfg).unwrap();
    assert!(!got.diagnostics.is_degenerate());
    assert!(rel_close(got.loss, probe.loss, 1e-12));

    let h = 1e-5;
    let mut fd = vec![0.0; m.len()];
    for (k, g) in fd.iter_mut().enumerate() {
        let mut mp = m.clone();
        mp[k] += h;
        let lp = oracle_loss(&q, &pos, &negs, &mp, d_out, margin).loss;
        mp[k] -= 2.0 * h;
        let lm = oracle_loss(&q, &pos, &negs, &mp, d_out, margin).loss;
        *g = (lp - lm) / (2.0 * h);
    }
    let diff = fd
        .iter()
        .zip(&got.grad)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(scale > 0.0);
    Some(diff / scale)
}

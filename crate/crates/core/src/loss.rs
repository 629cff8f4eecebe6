//! Window-based triplet loss and its subgradient with respect to a
//! [`ProjectionHead`].
//!
//! For a query `q`, positive panorama `p` and negatives `nᵢ`:
//!
//! ```text
//! loss = Σᵢ max(d(q, p) − d(q, nᵢ) + margin, 0)
//! d(q, y) = min_w ‖q − y[w]‖_p
//! ```
//!
//! The gradient treats the argmin window and the set of active hinges as
//! fixed at their forward-pass values.

use crate::encoder::{l2_normalize, Descriptor, PanoDescriptor, ProjectionHead};
use crate::error::{Error, Result};
use crate::retrieval::{check_norm, window_distance};

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
    pub norm_p: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            norm_p: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        check_norm(self.norm_p)
    }
}

/// Triplet loss over descriptors that are already encoded.
pub fn triplet_loss(
    query: &Descriptor,
    positive: &PanoDescriptor,
    negatives: &[PanoDescriptor],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    if negatives.is_empty() {
        return Err(Error::Argument(
            "triplet loss needs at least one negative".into(),
        ));
    }
    let d_pos = window_distance(query, positive, cfg.norm_p)?.distance;
    negatives.iter().try_fold(0.0, |acc, neg| {
        let d_neg = window_distance(query, neg, cfg.norm_p)?.distance;
        Ok(acc + (d_pos - d_neg + cfg.margin).max(0.0))
    })
}

/// Conditions under which the returned gradient is only a subgradient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradDiagnostics {
    /// Two windows of one panorama were exactly equidistant from the query.
    pub window_tie: bool,
    /// A hinge argument was exactly zero.
    pub hinge_at_zero: bool,
    /// A projected vector was zero and fell back to `e1`.
    pub normalization_fallback: bool,
}

impl GradDiagnostics {
    pub fn is_degenerate(&self) -> bool {
        self.window_tie || self.hinge_at_zero || self.normalization_fallback
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Same row-major `d_in x d_out` layout as the head matrix.
    pub grad: Vec<f64>,
    pub diagnostics: GradDiagnostics,
}

/// A raw vector pushed through the head and normalized, with what the
/// backward pass needs.
struct Projected<'a> {
    raw: &'a [f64],
    unit: Vec<f64>,
    norm: f64,
    fallback: bool,
}

impl<'a> Projected<'a> {
    fn new(raw: &'a [f64], head: &ProjectionHead) -> Result<Self> {
        let y = head.project(raw)?;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (unit, fallback) = l2_normalize(&y);
        Ok(Self {
            raw,
            unit,
            norm,
            fallback,
        })
    }

    /// Accumulate `∂L/∂M` given `∂L/∂unit`.
    fn backward(&self, g_unit: &[f64], grad: &mut [f64]) {
        if self.fallback {
            return;
        }
        let dot: f64 = self.unit.iter().zip(g_unit).map(|(z, g)| z * g).sum();
        let g_y: Vec<f64> = self
            .unit
            .iter()
            .zip(g_unit)
            .map(|(z, g)| (g - z * dot) / self.norm)
            .collect();
        let d_out = g_y.len();
        for (i, &x) in self.raw.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (gm, gy) in grad[i * d_out..(i + 1) * d_out].iter_mut().zip(&g_y) {
                *gm += x * gy;
            }
        }
    }
}

fn p_dist_f64(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    } else {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// `∂‖a − b‖_p / ∂a`; the zero vector where `a == b`.
fn p_dist_grad(a: &[f64], b: &[f64], p: f64, dist: f64) -> Vec<f64> {
    if dist == 0.0 {
        return vec![0.0; a.len()];
    }
    let scale = dist.powf(p - 1.0);
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d.signum() * d.abs().powf(p - 1.0) / scale
        })
        .collect()
}

/// Argmin window over projected windows, reporting exact ties.
fn best_window(q: &[f64], windows: &[Projected<'_>], p: f64) -> (f64, usize, bool) {
    let mut best = (f64::INFINITY, 0usize);
    let mut tie = false;
    for (i, w) in windows.iter().enumerate() {
        let d = p_dist_f64(q, &w.unit, p);
        if d < best.0 {
            best = (d, i);
            tie = false;
        } else if d == best.0 {
            tie = true;
        }
    }
    (best.0, best.1, tie)
}

fn check_raws(raws: &[Vec<f64>], what: &str) -> Result<()> {
    if raws.is_empty() {
        Err(Error::Argument(format!("{what} has no windows")))
    } else {
        Ok(())
    }
}

/// Loss and subgradient with respect to `head.matrix` for one triplet of
/// pre-projection features. `pos_raws` holds the positive's per-window
/// features; `neg_raws[i]` those of negative `i`.
pub fn triplet_loss_grad<N: AsRef<[Vec<f64>]>>(
    q_raw: &[f64],
    pos_raws: &[Vec<f64>],
    neg_raws: &[N],
    head: &ProjectionHead,
    cfg: &LossConfig,
) -> Result<LossGradient> {
    cfg.validate()?;
    if neg_raws.is_empty() {
        return Err(Error::Argument(
            "triplet loss needs at least one negative".into(),
        ));
    }
    check_raws(pos_raws, "positive")?;
    let p = cfg.norm_p;
    let mut diag = GradDiagnostics::default();

    let q = Projected::new(q_raw, head)?;
    let pos = pos_raws
        .iter()
        .map(|r| Projected::new(r, head))
        .collect::<Result<Vec<_>>>()?;
    let negs = neg_raws
        .iter()
        .map(|n| {
            let n = n.as_ref();
            check_raws(n, "negative")?;
            n.iter()
                .map(|r| Projected::new(r, head))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    diag.normalization_fallback =
        q.fallback || pos.iter().any(|w| w.fallback) || negs.iter().flatten().any(|w| w.fallback);

    let (d_pos, pos_w, tie) = best_window(&q.unit, &pos, p);
    diag.window_tie |= tie;

    let mut loss = 0.0;
    let mut active = Vec::new();
    for (i, neg) in negs.iter().enumerate() {
        let (d_neg, neg_w, tie) = best_window(&q.unit, neg, p);
        diag.window_tie |= tie;
        let hinge = d_pos - d_neg + cfg.margin;
        if hinge == 0.0 {
            diag.hinge_at_zero = true;
        }
        if hinge > 0.0 {
            loss += hinge;
            active.push((i, neg_w, d_neg));
        }
    }

    let mut grad = vec![0.0; head.matrix().len()];
    if active.is_empty() {
        return Ok(LossGradient {
            loss,
            grad,
            diagnostics: diag,
        });
    }

    // ∂d(q,p)/∂q and ∂d(q,p)/∂p_w, counted once per active hinge
    let weight = active.len() as f64;
    let g_qp = p_dist_grad(&q.unit, &pos[pos_w].unit, p, d_pos);
    let mut g_q: Vec<f64> = g_qp.iter().map(|g| g * weight).collect();
    let g_pos: Vec<f64> = g_qp.iter().map(|g| -g * weight).collect();
    pos[pos_w].backward(&g_pos, &mut grad);

    for &(i, neg_w, d_neg) in &active {
        let nw = &negs[i][neg_w];
        let g_qn = p_dist_grad(&q.unit, &nw.unit, p, d_neg);
        for (gq, g) in g_q.iter_mut().zip(&g_qn) {
            *gq -= g;
        }
        // the loss carries −d(q, n), and ∂d/∂n = −∂d/∂q
        nw.backward(&g_qn, &mut grad);
    }
    q.backward(&g_q, &mut grad);

    Ok(LossGradient {
        loss,
        grad,
        diagnostics: diag,
    })
}

//! Windowed query-to-panorama distance and exhaustive database ranking.

use rayon::prelude::*;

use crate::encoder::{Descriptor, PanoDescriptor};
use crate::error::{Error, Result};

/// Default `p` of the descriptor distance.
pub const DEFAULT_NORM_P: f64 = 2.0;

/// Best window of one panorama for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMatch {
    pub distance: f64,
    pub window_index: usize,
}

impl WindowMatch {
    /// Reporting convention: higher is more similar.
    pub fn similarity(&self) -> f64 {
        -self.distance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<I> {
    pub id: I,
    pub matched: WindowMatch,
}

/// Database entries sorted by ascending best-window distance.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult<I = String> {
    pub ranked: Vec<RankedEntry<I>>,
}

impl<I> RetrievalResult<I> {
    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

/// `‖a − b‖_p` accumulated in double precision.
pub fn p_distance(a: &[f32], b: &[f32], norm_p: f64) -> f64 {
    let diffs = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs());
    if norm_p == 2.0 {
        diffs.map(|d| d * d).sum::<f64>().sqrt()
    } else if norm_p == 1.0 {
        diffs.sum()
    } else {
        diffs
            .map(|d| d.powf(norm_p))
            .sum::<f64>()
            .powf(1.0 / norm_p)
    }
}

pub(crate) fn check_norm(norm_p: f64) -> Result<()> {
    if norm_p >= 1.0 && norm_p.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "distance norm p must be finite and >= 1, got {norm_p}"
        )))
    }
}

/// Minimum p-norm distance between `query` and any window of `pano`. Ties
/// resolve to the lowest window index.
pub fn window_distance(
    query: &Descriptor,
    pano: &PanoDescriptor,
    norm_p: f64,
) -> Result<WindowMatch> {
    check_norm(norm_p)?;
    if pano.windows.is_empty() {
        return Err(Error::Argument("panorama has no windows".into()));
    }
    if pano.dim() != query.dim() {
        return Err(Error::Argument(format!(
            "query dimension {} does not match window dimension {}",
            query.dim(),
            pano.dim()
        )));
    }
    let mut best = WindowMatch {
        distance: f64::INFINITY,
        window_index: 0,
    };
    for (i, w) in pano.windows.iter().enumerate() {
        let d = p_distance(query.values(), w.values(), norm_p);
        if d < best.distance {
            best = WindowMatch {
                distance: d,
                window_index: i,
            };
        }
    }
    if !best.distance.is_finite() {
        return Err(Error::Argument("non-finite window distance".into()));
    }
    Ok(best)
}

/// Rank every database panorama by its best-window distance to `query`.
/// Equal distances are ordered by ascending id.
pub fn rank<I: Ord + Clone>(
    query: &Descriptor,
    database: &[(I, PanoDescriptor)],
    norm_p: f64,
) -> Result<RetrievalResult<I>> {
    if database.is_empty() {
        return Err(Error::Argument(
            "cannot rank against an empty database".into(),
        ));
    }
    let mut ranked = database
        .iter()
        .map(|(id, pano)| {
            Ok(RankedEntry {
                id: id.clone(),
                matched: window_distance(query, pano, norm_p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        a.matched
            .distance
            .total_cmp(&b.matched.distance)
            .then_with(|| a.id.cmp(&b.id))
    });
    if ranked.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::Argument("database ids are not unique".into()));
    }
    Ok(RetrievalResult { ranked })
}

/// Rank many queries against a shared database on the rayon pool. Output
/// order follows `queries`.
pub fn rank_all<I: Ord + Clone + Send + Sync>(
    queries: &[Descriptor],
    database: &[(I, PanoDescriptor)],
    norm_p: f64,
) -> Result<Vec<RetrievalResult<I>>> {
    queries
        .par_iter()
        .map(|q| rank(q, database, norm_p))
        .collect()
}

/// The first `min(n, len)` entries.
pub fn top_n<I>(result: &RetrievalResult<I>, n: usize) -> &[RankedEntry<I>] {
    &result.ranked[..n.min(result.ranked.len())]
}

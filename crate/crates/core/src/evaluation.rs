//! Recall@N and stride/cyclic ablation sweeps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::pipeline::{encode_database, encode_queries, EvalSet};
use crate::retrieval::{rank_all, RetrievalResult};
use crate::windowing::{compute_layout, WindowConfig};

pub const DEFAULT_N_VALUES: [usize; 4] = [1, 5, 10, 20];
pub const DEFAULT_THRESHOLD_M: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    /// `(N, percentage)` in ascending `N`.
    pub recalls: Vec<(usize, f64)>,
    pub num_queries: usize,
    pub threshold_m: f64,
}

impl RecallReport {
    pub fn at(&self, n: usize) -> Option<f64> {
        self.recalls.iter().find(|(k, _)| *k == n).map(|&(_, r)| r)
    }
}

/// A query counts as correct at `N` when any of its top-`N` database
/// entries lies within `threshold_m` of the query's position.
pub fn recall_at_n<Q, I>(
    results: &[(Q, RetrievalResult<I>)],
    query_geos: &HashMap<Q, GeoPoint>,
    db_geos: &HashMap<I, GeoPoint>,
    n_values: &[usize],
    threshold_m: f64,
) -> Result<RecallReport>
where
    Q: Hash + Eq + std::fmt::Debug,
    I: Hash + Eq + std::fmt::Debug,
{
    if !(threshold_m > 0.0) {
        return Err(Error::Evaluation(format!(
            "threshold must be positive, got {threshold_m}"
        )));
    }
    if results.is_empty() {
        return Err(Error::Evaluation("no queries to evaluate".into()));
    }
    let mut ns: Vec<usize> = n_values.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.first() == Some(&0) {
        return Err(Error::Evaluation("N must be at least 1".into()));
    }

    let mut hits = vec![0usize; ns.len()];
    for (qid, result) in results {
        let qgeo = query_geos
            .get(qid)
            .ok_or_else(|| Error::Evaluation(format!("query {qid:?} has no geo tag")))?;
        // rank (1-based) of the first correct entry
        let mut first_hit = None;
        for (rank, entry) in result.ranked.iter().enumerate() {
            let dgeo = db_geos.get(&entry.id).ok_or_else(|| {
                Error::Evaluation(format!("database entry {:?} has no geo tag", entry.id))
            })?;
            if qgeo.distance_m(dgeo) <= threshold_m {
                first_hit = Some(rank + 1);
                break;
            }
        }
        if let Some(r) = first_hit {
            for (h, &n) in hits.iter_mut().zip(&ns) {
                if r <= n {
                    *h += 1;
                }
            }
        }
    }
    let total = results.len();
    Ok(RecallReport {
        recalls: ns
            .into_iter()
            .zip(hits)
            .map(|(n, h)| (n, 100.0 * h as f64 / total as f64))
            .collect(),
        num_queries: total,
        threshold_m,
    })
}

/// Index, rank and score one configuration.
pub fn evaluate_config<E: Encoder + ?Sized>(
    set: &EvalSet,
    encoder: &E,
    config: &WindowConfig,
    norm_p: f64,
    n_values: &[usize],
    threshold_m: f64,
) -> Result<RecallReport> {
    let (width, height) = set.pano_dims()?;
    let layout = compute_layout(width, config)?;
    let database = encode_database(&set.database, encoder, config)?;
    let queries = encode_queries(&set.queries, encoder, layout.window_len_px, height)?;
    let ranked = rank_all(&queries, &database, norm_p)?;
    let results: Vec<(String, RetrievalResult)> = set
        .queries
        .iter()
        .map(|q| q.id.clone())
        .zip(ranked)
        .collect();
    let query_geos = set.queries.iter().map(|q| (q.id.clone(), q.geo)).collect();
    let db_geos = set.database.iter().map(|p| (p.id.clone(), p.geo)).collect();
    recall_at_n(&results, &query_geos, &db_geos, n_values, threshold_m)
}

#[derive(Debug)]
pub struct SweepRow {
    pub config: WindowConfig,
    pub outcome: Result<RecallReport>,
}

#[derive(Debug)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl SweepTable {
    /// `R@1` of `row` minus `R@1` of the first row, both rounded to two
    /// decimals as displayed.
    pub fn diff_at_1(&self, row: usize) -> Option<f64> {
        let r1 = |i: usize| -> Option<f64> {
            self.rows.get(i)?.outcome.as_ref().ok()?.at(1).map(round2)
        };
        Some(round2(r1(row)? - r1(0)?))
    }

    /// Human-readable table with an overlap column and `Diff.@1` against
    /// the first row.
    pub fn to_text(&self) -> String {
        let ns: Vec<usize> = self
            .rows
            .iter()
            .find_map(|r| r.outcome.as_ref().ok())
            .map(|r| r.recalls.iter().map(|&(n, _)| n).collect())
            .unwrap_or_else(|| DEFAULT_N_VALUES.to_vec());
        let mut out = format!("{:<14} {:>8}", "Config", "Overlap");
        for n in &ns {
            let _ = write!(out, " {:>8}", format!("R@{n}"));
        }
        let _ = writeln!(out, " {:>8}", "Diff.@1");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(
                out,
                "{:<14} {:>7.0}%",
                row.config.label(),
                100.0 * row.config.overlap_fraction()
            );
            match &row.outcome {
                Ok(report) => {
                    for n in &ns {
                        match report.at(*n) {
                            Some(r) => {
                                let _ = write!(out, " {r:>8.2}");
                            }
                            None => {
                                let _ = write!(out, " {:>8}", "-");
                            }
                        }
                    }
                    match self.diff_at_1(i) {
                        Some(d) if i > 0 => {
                            let _ = writeln!(out, " {d:>+8.2}");
                        }
                        _ => {
                            let _ = writeln!(out, " {:>8}", "-");
                        }
                    }
                }
                Err(e) => {
                    let _ = writeln!(out, "  error: {e}");
                }
            }
        }
        out
    }

    /// One `config, N, recall` line per measured value; failed configs are
    /// omitted.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            if let Ok(report) = &row.outcome {
                for (n, r) in &report.recalls {
                    let _ = writeln!(out, "{}, {n}, {r:.2}", row.config.label());
                }
            }
        }
        out
    }
}

/// Evaluate each configuration independently; a failing configuration is
/// recorded in its row and the sweep continues.
pub fn ablation_sweep<E: Encoder + ?Sized>(
    set: &EvalSet,
    encoder: &E,
    configs: &[WindowConfig],
    norm_p: f64,
    n_values: &[usize],
    threshold_m: f64,
) -> SweepTable {
    SweepTable {
        rows: configs
            .iter()
            .map(|config| SweepRow {
                config: *config,
                outcome: evaluate_config(set, encoder, config, norm_p, n_values, threshold_m),
            })
            .collect(),
    }
}

//! Desk-scale training of a [`ProjectionHead`] with the window-based
//! triplet loss.
//!
//! The handcrafted encoder is frozen; its per-window features are computed
//! once. Every epoch re-projects all features with the current head, mines
//! one triplet per usable training query, shuffles the triplets and applies
//! plain gradient descent batch by batch. Validation recall uses the
//! test-time threshold.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{resize_to_window, EmbeddingFile};
use crate::encoder::{apply_projection, EncoderSpec, PanoDescriptor, ProjectionHead};
use crate::error::{Error, Result};
use crate::evaluation::{recall_at_n, RecallReport, DEFAULT_N_VALUES, DEFAULT_THRESHOLD_M};
use crate::loss::{triplet_loss_grad, LossConfig};
use crate::mining::{mine_triplet, MiningConfig, MiningEntry, MiningOutcome};
use crate::pipeline::{pano_dims, LabeledImage};
use crate::retrieval::rank_all;
use crate::windowing::{compute_layout, extract_window, WindowConfig, WindowLayout};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    /// Zero is allowed and leaves the head untouched.
    pub learning_rate: f64,
    pub seed: u64,
    pub mining: MiningConfig,
    pub loss: LossConfig,
    pub window: WindowConfig,
    /// Validation threshold; the mining radii are independent of it.
    pub threshold_m: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 2,
            learning_rate: 0.5,
            seed: 0,
            mining: MiningConfig::default(),
            loss: LossConfig::default(),
            window: WindowConfig::times(16, true).expect("valid default"),
            threshold_m: DEFAULT_THRESHOLD_M,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        self.mining.validate()?;
        self.loss.validate()?;
        self.window.validate()
    }
}

/// Database plus training and validation queries, all geo-tagged.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub database: Vec<LabeledImage>,
    pub train_queries: Vec<LabeledImage>,
    pub val_queries: Vec<LabeledImage>,
}

impl TrainData {
    /// Deterministic split: every `val_every`-th query (1-based) goes to
    /// validation.
    pub fn split(
        database: Vec<LabeledImage>,
        queries: Vec<LabeledImage>,
        val_every: usize,
    ) -> Self {
        let val_every = val_every.max(2);
        let (mut train_queries, mut val_queries) = (Vec::new(), Vec::new());
        for (i, q) in queries.into_iter().enumerate() {
            if (i + 1) % val_every == 0 {
                val_queries.push(q);
            } else {
                train_queries.push(q);
            }
        }
        Self {
            database,
            train_queries,
            val_queries,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub triplets: usize,
    pub validation: RecallReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Validation recall of the head before any update.
    pub initial_validation: RecallReport,
    pub epochs: Vec<EpochStats>,
    /// Training queries with no panorama inside the positive radius.
    pub skipped_queries: Vec<String>,
    pub head: ProjectionHead,
}

impl TrainReport {
    pub fn loss_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

struct Features {
    layout: WindowLayout,
    /// `[pano][window] -> features`
    database: Vec<Vec<Vec<f64>>>,
    train: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
}

fn extract_features(
    data: &TrainData,
    spec: &EncoderSpec,
    window: &WindowConfig,
) -> Result<Features> {
    let (width, height) = pano_dims(&data.database)?;
    let layout = compute_layout(width, window)?;
    let database = data
        .database
        .par_iter()
        .map(|p| {
            (0..layout.len())
                .map(|i| spec.encode_features(&extract_window(&p.image, &layout, i)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let queries = |qs: &[LabeledImage]| -> Result<Vec<Vec<f64>>> {
        qs.par_iter()
            .map(|q| {
                spec.encode_features(&resize_to_window(&q.image, layout.window_len_px, height)?)
            })
            .collect()
    };
    Ok(Features {
        train: queries(&data.train_queries)?,
        val: queries(&data.val_queries)?,
        database,
        layout,
    })
}

fn project_database(
    features: &[Vec<Vec<f64>>],
    layout: &WindowLayout,
    head: &ProjectionHead,
) -> Result<Vec<PanoDescriptor>> {
    features
        .par_iter()
        .map(|windows| {
            let descs = windows
                .iter()
                .map(|f| apply_projection(f, head))
                .collect::<Result<Vec<_>>>()?;
            PanoDescriptor::new(descs, layout.clone())
        })
        .collect()
}

fn validation_recall(
    data: &TrainData,
    features: &Features,
    head: &ProjectionHead,
    cfg: &TrainConfig,
) -> Result<RecallReport> {
    if data.val_queries.is_empty() {
        return Err(Error::Training("no validation queries".into()));
    }
    let panos = project_database(&features.database, &features.layout, head)?;
    let database: Vec<(usize, PanoDescriptor)> = panos.into_iter().enumerate().collect();
    let queries = features
        .val
        .iter()
        .map(|f| apply_projection(f, head))
        .collect::<Result<Vec<_>>>()?;
    let ranked = rank_all(&queries, &database, cfg.loss.norm_p)?;
    let results: Vec<(usize, _)> = ranked.into_iter().enumerate().collect();
    let query_geos: HashMap<usize, _> = data
        .val_queries
        .iter()
        .enumerate()
        .map(|(i, q)| (i, q.geo))
        .collect();
    let db_geos: HashMap<usize, _> = data
        .database
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.geo))
        .collect();
    recall_at_n(
        &results,
        &query_geos,
        &db_geos,
        &DEFAULT_N_VALUES,
        cfg.threshold_m,
    )
}

/// SplitMix64 finalizer, used to derive independent per-query seeds.
fn mix_seed(seed: u64, epoch: u32, index: usize) -> u64 {
    let mut z =
        seed ^ (u64::from(epoch) << 40) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Triplet {
    query: usize,
    positive: usize,
    negatives: Vec<usize>,
}

/// Train `head` on top of the frozen encoder `spec` (any projection already
/// attached to `spec` is ignored).
pub fn train(
    data: &TrainData,
    spec: &EncoderSpec,
    head: ProjectionHead,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let base = EncoderSpec {
        projection: None,
        ..spec.clone()
    };
    if head.d_in() != base.raw_dim() {
        return Err(Error::Config(format!(
            "head expects {} inputs, encoder produces {}",
            head.d_in(),
            base.raw_dim()
        )));
    }
    let features = extract_features(data, &base, &cfg.window)?;
    let mut head = head;
    let initial_validation = validation_recall(data, &features, &head, cfg)?;
    let mut epochs = Vec::with_capacity(cfg.epochs as usize);
    let mut skipped_queries = Vec::new();

    for epoch in 0..cfg.epochs {
        let panos = project_database(&features.database, &features.layout, &head)?;
        let entries: Vec<MiningEntry<'_, usize>> = panos
            .iter()
            .zip(&data.database)
            .enumerate()
            .map(|(i, (d, p))| MiningEntry {
                id: i,
                geo: p.geo,
                descriptor: d,
            })
            .collect();
        let outcomes = features
            .train
            .par_iter()
            .zip(&data.train_queries)
            .enumerate()
            .map(|(qi, (f, q))| {
                let desc = apply_projection(f, &head)?;
                mine_triplet(
                    qi,
                    &desc,
                    &q.geo,
                    &entries,
                    &cfg.mining,
                    cfg.loss.norm_p,
                    mix_seed(cfg.seed, epoch, qi),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let mut triplets = Vec::new();
        let mut skipped = Vec::new();
        for outcome in outcomes {
            match outcome {
                MiningOutcome::Triplet(t) => triplets.push(Triplet {
                    query: t.query_id,
                    positive: t.positive_id,
                    negatives: t.negative_ids,
                }),
                MiningOutcome::NoPositive(qi) => skipped.push(data.train_queries[qi].id.clone()),
            }
        }
        if triplets.is_empty() {
            return Err(Error::Training(format!(
                "no usable triplets; queries without a positive: {}",
                skipped.join(", ")
            )));
        }
        if epoch == 0 {
            skipped_queries = skipped;
        }

        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(
            cfg.seed,
            epoch,
            usize::MAX,
        )));

        let mut losses = vec![0.0; triplets.len()];
        for batch in order.chunks(cfg.batch_size) {
            let grads = batch
                .par_iter()
                .map(|&t| {
                    let tr = &triplets[t];
                    let negs: Vec<&[Vec<f64>]> = tr
                        .negatives
                        .iter()
                        .map(|&n| features.database[n].as_slice())
                        .collect();
                    triplet_loss_grad(
                        &features.train[tr.query],
                        &features.database[tr.positive],
                        &negs,
                        &head,
                        &cfg.loss,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let step = cfg.learning_rate / batch.len() as f64;
            for (&t, g) in batch.iter().zip(&grads) {
                losses[t] = g.loss;
                if g.diagnostics.is_degenerate() {
                    debug!("epoch {epoch}: degenerate triplet {t}: {:?}", g.diagnostics);
                }
            }
            if step > 0.0 {
                let m = head.matrix_mut();
                for g in &grads {
                    for (w, d) in m.iter_mut().zip(&g.grad) {
                        *w -= step * d;
                    }
                }
            }
        }
        head.trained_epochs += 1;

        let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let validation = validation_recall(data, &features, &head, cfg)?;
        info!(
            "epoch {}: mean loss {:.6}, {} triplets, val R@1 {:.2}",
            epoch + 1,
            mean_loss,
            triplets.len(),
            validation.at(1).unwrap_or(0.0)
        );
        epochs.push(EpochStats {
            mean_loss,
            triplets: triplets.len(),
            validation,
        });
    }

    Ok(TrainReport {
        initial_validation,
        epochs,
        skipped_queries,
        head,
    })
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Write the head matrix as a `PVPR` file (one raw record per input row)
/// and a `<path>.meta` key/value sidecar.
pub fn save_checkpoint(
    path: &Path,
    head: &ProjectionHead,
    meta: &[(String, String)],
) -> Result<()> {
    let d_out = head.d_out();
    let records = head
        .matrix()
        .chunks(d_out)
        .enumerate()
        .map(|(i, row)| (format!("row{i}"), row.iter().map(|&v| v as f32).collect()))
        .collect();
    let file = EmbeddingFile::new(d_out, false, records)?;
    fs::write(path, file.encode()).map_err(|e| Error::io(path, e))?;

    let mut text = String::from("# projection head checkpoint\n");
    text.push_str(&format!(
        "d_in\t{}\nd_out\t{}\ntrained_epochs\t{}\n",
        head.d_in(),
        d_out,
        head.trained_epochs
    ));
    for (k, v) in meta {
        text.push_str(&format!("{k}\t{v}\n"));
    }
    let mp = meta_path(path);
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ProjectionHead> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = EmbeddingFile::decode(&bytes)?;
    let d_in = file.records.len();
    let matrix = file
        .records
        .iter()
        .flat_map(|(_, row)| row.iter().map(|&v| f64::from(v)))
        .collect();
    let mut head = ProjectionHead::new(matrix, d_in, file.dim)?;

    let mp = meta_path(path);
    if let Ok(text) = fs::read_to_string(&mp) {
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    path: mp.clone(),
                    line: i + 1,
                    message: "expected key<TAB>value".into(),
                });
            };
            if key == "trained_epochs" {
                head.trained_epochs = value.parse().map_err(|_| Error::Parse {
                    path: mp.clone(),
                    line: i + 1,
                    message: format!("invalid epoch count `{value}`"),
                })?;
            }
        }
    }
    Ok(head)
}

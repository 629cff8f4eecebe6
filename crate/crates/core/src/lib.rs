//! Sliding-window place recognition from perspective queries against
//! equirectangular panorama databases.
//!
//! Database panoramas are cut into (optionally overlapping and cyclic)
//! windows whose width matches the query image, every window is encoded to
//! a unit descriptor, and a query is scored against a panorama by its best
//! window. The crate also covers geo-aware triplet mining, a window-based
//! triplet loss for training a projection head, Recall@N evaluation, the
//! `PVPR` embedding exchange format and a procedural dataset generator.

// Bounds are checked as `!(x > bound)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod geo;
pub mod loss;
pub mod mining;
pub mod pipeline;
pub mod retrieval;
pub mod training;
pub mod windowing;

pub use encoder::{
    apply_projection, encode_pano, gem_pool, Descriptor, Encoder, EncoderSpec, PanoDescriptor,
    ProjectionHead,
};
pub use error::{Error, Result};
pub use evaluation::{ablation_sweep, recall_at_n, RecallReport, SweepTable};
pub use geo::GeoPoint;
pub use loss::{triplet_loss, triplet_loss_grad, LossConfig};
pub use mining::{geo_neighbors, mine_triplet, MiningConfig, TripletSet};
pub use pipeline::{EvalSet, LabeledImage};
pub use retrieval::{rank, top_n, window_distance, RetrievalResult, WindowMatch};
pub use training::{train, TrainConfig, TrainData, TrainReport};
pub use windowing::{compute_layout, extract_window, WindowConfig, WindowLayout};

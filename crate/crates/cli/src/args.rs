use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "panowindow",
    version,
    about = "Sliding-window retrieval of perspective queries against panoramas"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panorama dataset with a manifest.
    Synth(SynthArgs),
    /// Encode the database panoramas of a manifest into an index directory.
    Index(IndexArgs),
    /// Rank database panoramas for every query in a manifest.
    Query(QueryArgs),
    /// Recall@N for one configuration or a stride sweep.
    Evaluate(EvaluateArgs),
    /// Train a projection head on top of the built-in encoder.
    Train(TrainArgs),
    /// Draw the matched windows of the top-ranked panoramas.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub places: usize,
    #[arg(long, default_value_t = 1024)]
    pub pano_width: u32,
    #[arg(long, default_value_t = 128)]
    pub pano_height: u32,
    #[arg(long, default_value_t = 2)]
    pub queries_per_place: usize,
    /// Maximum horizontal crop jitter in pixels.
    #[arg(long, default_value_t = 0)]
    pub jitter: u32,
    /// Gaussian noise sigma as a fraction of full scale.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Brightness gain is drawn from `1 ± brightness`.
    #[arg(long, default_value_t = 0.0)]
    pub brightness: f64,
    #[arg(long, default_value_t = 0.0)]
    pub seam_fraction: f64,
    #[arg(long, default_value_t = 40.0)]
    pub geo_spacing: f64,
    /// Snap crop offsets to multiples of this many pixels.
    #[arg(long)]
    pub align_step: Option<u32>,
}

/// Encoder selection shared by every command that encodes images.
#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    /// GeM pooling power of the built-in encoder.
    #[arg(long, default_value_t = 3.0)]
    pub gem_p: f64,
    /// Projection head checkpoint produced by `train`.
    #[arg(long, conflicts_with = "embeddings")]
    pub checkpoint: Option<PathBuf>,
    /// Precomputed descriptors replacing the built-in encoder: one record per
    /// query id and one record per window for each database id, in window
    /// order.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// Stride divisor N (stride = width / N).
    #[arg(long, default_value_t = 16)]
    pub stride_div: u32,
    /// Span divisor S (window length = width / S).
    #[arg(long, default_value_t = 8)]
    pub span_div: u32,
    #[arg(long)]
    pub cyclic: bool,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Manifest whose query records are ranked.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub norm_p: f64,
    /// Only rank this query id (repeatable).
    #[arg(long = "query-id")]
    pub query_ids: Vec<String>,
    /// Expected stride divisor; refused if the index differs.
    #[arg(long)]
    pub stride_div: Option<u32>,
    #[arg(long)]
    pub span_div: Option<u32>,
    #[arg(long)]
    pub cyclic: bool,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated configs such as `x8,x16,x24,x32`; an entry may carry
    /// a `-cyclic` suffix. Without it a single `--stride-div` row is run.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<String>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = 2.0)]
    pub norm_p: f64,
    #[arg(long, default_value_t = 25.0)]
    pub threshold_m: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
    pub recall_at: Vec<usize>,
    /// Also write `config, N, recall` lines to this file.
    #[arg(long)]
    pub lines_out: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the trained head.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Start from this head instead of a random one.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: u32,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub proj_dim: usize,
    /// Every n-th query is held out for validation.
    #[arg(long, default_value_t = 4)]
    pub val_every: usize,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 25.0)]
    pub threshold_m: f64,
    #[arg(long, default_value_t = 3.0)]
    pub gem_p: f64,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Queries to draw (repeatable); all queries when omitted.
    #[arg(long = "query-id")]
    pub query_ids: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub top_n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub norm_p: f64,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

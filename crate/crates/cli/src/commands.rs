use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use log::info;
use panowindow::dataset::{
    load_manifest, load_rgb, save_png, synth_dataset, Manifest, Role, SynthParams,
};
use panowindow::evaluation::{ablation_sweep, SweepRow, SweepTable};
use panowindow::pipeline::{encode_database, encode_queries};
use panowindow::retrieval::rank_all;
use panowindow::training::save_checkpoint;
use panowindow::{
    compute_layout, recall_at_n, top_n, train, Descriptor, EncoderSpec, EvalSet, GeoPoint,
    LossConfig, ProjectionHead, RecallReport, RetrievalResult, TrainConfig, TrainData,
    WindowConfig,
};

use crate::args::{
    EvaluateArgs, IndexArgs, QueryArgs, SynthArgs, TrainArgs, VisualizeArgs, WindowArgs,
};
use crate::artifact::IndexArtifact;
use crate::data::{database_dims, database_hash, load_images, EncoderChoice, ExternalEmbeddings};
use crate::error::{CliError, CliResult};
use crate::visualize::annotate;

fn window_config(w: &WindowArgs) -> CliResult<WindowConfig> {
    Ok(WindowConfig::new(w.stride_div, w.span_div, w.cyclic)?)
}

fn check_norm(p: f64) -> CliResult<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--norm-p must be finite and >= 1, got {p}"
        )))
    }
}

pub fn synth(args: &SynthArgs) -> CliResult<String> {
    let params = SynthParams {
        seed: args.seed,
        num_places: args.places,
        pano_width_px: args.pano_width,
        pano_height_px: args.pano_height,
        queries_per_place: args.queries_per_place,
        crop_jitter_px: args.jitter,
        noise_level: args.noise,
        brightness_jitter: args.brightness,
        seam_straddle_fraction: args.seam_fraction,
        geo_spacing_m: args.geo_spacing,
        align_step_px: args.align_step,
    };
    params
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = synth_dataset(&params)?;
    let manifest = ds.write_to(&args.out)?;
    Ok(format!(
        "wrote {} panoramas and {} queries; manifest {}\n",
        ds.database.len(),
        ds.queries.len(),
        manifest.display()
    ))
}

pub fn index(args: &IndexArgs) -> CliResult<String> {
    let manifest = load_manifest(&args.manifest)?;
    let (width, height) = database_dims(&manifest)?;
    let window = window_config(&args.window)?;
    let layout = compute_layout(width, &window)?;
    let encoder = EncoderChoice::from_args(&args.encoder)?;
    let panos = match &encoder {
        EncoderChoice::Builtin(spec) => {
            encode_database(&load_images(&manifest, Role::Database)?, spec, &window)?
        }
        EncoderChoice::External(x) => manifest
            .database()
            .map(|r| Ok((r.id.clone(), x.pano(&r.id, &layout)?)))
            .collect::<CliResult<_>>()?,
    };
    let artifact = IndexArtifact {
        fingerprint: encoder.fingerprint(),
        window,
        layout,
        pano_height_px: height,
        manifest_hash: database_hash(&manifest)?,
        panos,
    };
    artifact.write(&args.index)?;
    Ok(format!(
        "indexed {} panoramas, {} windows each ({}), dim {} -> {}\n",
        artifact.panos.len(),
        artifact.layout.len(),
        window.label(),
        artifact.dim(),
        args.index.display()
    ))
}

type Ranked = Vec<(String, RetrievalResult)>;

/// Rank the selected queries of `manifest` against a stored index after
/// checking that the index was built from the same database and encoder.
pub fn rank_against_index(
    index_dir: &std::path::Path,
    manifest_path: &std::path::Path,
    query_ids: &[String],
    encoder_args: &crate::args::EncoderArgs,
    norm_p: f64,
) -> CliResult<(IndexArtifact, Manifest, Ranked)> {
    check_norm(norm_p)?;
    let artifact = IndexArtifact::read(index_dir)?;
    let encoder = EncoderChoice::from_args(encoder_args)?;
    let fp = encoder.fingerprint();
    if fp != artifact.fingerprint {
        return Err(CliError::Mismatch(format!(
            "index was built with encoder `{}` but these flags give `{fp}`; rebuild the index or pass matching --gem-p/--checkpoint/--embeddings",
            artifact.fingerprint
        )));
    }
    let manifest = load_manifest(manifest_path)?;
    if database_hash(&manifest)? != artifact.manifest_hash {
        return Err(CliError::Mismatch(format!(
            "database records or images of {} differ from the ones the index was built from",
            manifest_path.display()
        )));
    }

    let mut selected = Manifest {
        base_dir: manifest.base_dir.clone(),
        records: manifest.queries().cloned().collect(),
    };
    if !query_ids.is_empty() {
        for id in query_ids {
            if !selected.records.iter().any(|r| &r.id == id) {
                return Err(CliError::Usage(format!("unknown query id `{id}`")));
            }
        }
        selected.records.retain(|r| query_ids.contains(&r.id));
    }
    let descriptors: Vec<Descriptor> = match &encoder {
        EncoderChoice::Builtin(spec) => encode_queries(
            &load_images(&selected, Role::Query)?,
            spec,
            artifact.layout.window_len_px,
            artifact.pano_height_px,
        )?,
        EncoderChoice::External(x) => selected
            .records
            .iter()
            .map(|r| x.query(&r.id))
            .collect::<CliResult<_>>()?,
    };
    let ranked = rank_all(&descriptors, &artifact.panos, norm_p)?;
    let results = selected
        .records
        .iter()
        .map(|r| r.id.clone())
        .zip(ranked)
        .collect();
    Ok((artifact, manifest, results))
}

pub fn query(args: &QueryArgs) -> CliResult<String> {
    if args.top_n == 0 {
        return Err(CliError::Usage("--top-n must be at least 1".into()));
    }
    let (artifact, _, results) = rank_against_index(
        &args.index,
        &args.manifest,
        &args.query_ids,
        &args.encoder,
        args.norm_p,
    )?;
    let w = artifact.window;
    let wanted = [
        ("stride divisor", args.stride_div, w.stride_divisor),
        ("span divisor", args.span_div, w.span_divisor),
    ];
    for (name, flag, stored) in wanted {
        if let Some(v) = flag.filter(|v| *v != stored) {
            return Err(CliError::Mismatch(format!(
                "--{name} {v} requested but the index uses {stored}"
            )));
        }
    }
    if args.cyclic && !w.cyclic {
        return Err(CliError::Mismatch(
            "--cyclic requested but the index is not cyclic".into(),
        ));
    }

    let mut out = String::new();
    for (qid, result) in &results {
        for (r, e) in top_n(result, args.top_n).iter().enumerate() {
            let _ = writeln!(
                out,
                "{qid} {} {} {} {}",
                r + 1,
                e.id,
                e.matched.window_index,
                e.matched.distance
            );
        }
    }
    Ok(out)
}

/// `x16`, `16`, `x16-cyclic` or `x16c`.
pub fn parse_sweep_entry(entry: &str, span_div: u32, all_cyclic: bool) -> CliResult<WindowConfig> {
    let s = entry.trim();
    let (body, cyclic) = match s.strip_suffix("-cyclic").or_else(|| s.strip_suffix('c')) {
        Some(b) => (b, true),
        None => (s, false),
    };
    let n: u32 = body
        .strip_prefix('x')
        .unwrap_or(body)
        .parse()
        .map_err(|_| {
            CliError::Usage(format!(
                "bad sweep entry `{entry}` (expected e.g. x16 or x16-cyclic)"
            ))
        })?;
    WindowConfig::new(n, span_div, cyclic || all_cyclic).map_err(|e| CliError::Usage(e.to_string()))
}

fn external_report(
    set: &EvalSet,
    x: &ExternalEmbeddings,
    window: &WindowConfig,
    width: u32,
    args: &EvaluateArgs,
) -> CliResult<RecallReport> {
    let layout = compute_layout(width, window)?;
    let db = set
        .database
        .iter()
        .map(|p| Ok((p.id.clone(), x.pano(&p.id, &layout)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let queries = set
        .queries
        .iter()
        .map(|q| x.query(&q.id))
        .collect::<CliResult<Vec<_>>>()?;
    let ranked = rank_all(&queries, &db, args.norm_p)?;
    let results: Vec<(String, RetrievalResult)> = set
        .queries
        .iter()
        .map(|q| q.id.clone())
        .zip(ranked)
        .collect();
    let qg: HashMap<String, GeoPoint> = set.queries.iter().map(|q| (q.id.clone(), q.geo)).collect();
    let dg: HashMap<String, GeoPoint> =
        set.database.iter().map(|p| (p.id.clone(), p.geo)).collect();
    Ok(recall_at_n(
        &results,
        &qg,
        &dg,
        &args.recall_at,
        args.threshold_m,
    )?)
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<String> {
    check_norm(args.norm_p)?;
    if args.recall_at.is_empty() || args.recall_at.contains(&0) {
        return Err(CliError::Usage(
            "--recall-at values must be at least 1".into(),
        ));
    }
    if !(args.threshold_m > 0.0) {
        return Err(CliError::Usage("--threshold-m must be positive".into()));
    }
    let mut configs = if args.sweep.is_empty() {
        vec![window_config(&args.window)?]
    } else {
        args.sweep
            .iter()
            .map(|e| parse_sweep_entry(e, args.window.span_div, args.window.cyclic))
            .collect::<CliResult<Vec<_>>>()?
    };
    configs.sort_by_key(|c| (c.stride_divisor, c.cyclic));

    let manifest = load_manifest(&args.manifest)?;
    let encoder = EncoderChoice::from_args(&args.encoder)?;
    let table = match &encoder {
        EncoderChoice::Builtin(spec) => {
            let set = EvalSet {
                database: load_images(&manifest, Role::Database)?,
                queries: load_images(&manifest, Role::Query)?,
            };
            ablation_sweep(
                &set,
                spec,
                &configs,
                args.norm_p,
                &args.recall_at,
                args.threshold_m,
            )
        }
        EncoderChoice::External(x) => {
            let (width, _) = database_dims(&manifest)?;
            let geo_only = |role| {
                manifest
                    .records
                    .iter()
                    .filter(|r| r.role == role)
                    .map(|r| panowindow::LabeledImage {
                        id: r.id.clone(),
                        image: image::RgbImage::new(0, 0),
                        geo: r.geo,
                    })
                    .collect()
            };
            let set = EvalSet {
                database: geo_only(Role::Database),
                queries: geo_only(Role::Query),
            };
            SweepTable {
                rows: configs
                    .iter()
                    .map(|c| SweepRow {
                        config: *c,
                        outcome: external_report(&set, x, c, width, args).map_err(|e| match e {
                            CliError::Mismatch(m) => panowindow::Error::Config(m),
                            other => panowindow::Error::Argument(other.to_string()),
                        }),
                    })
                    .collect(),
            }
        }
    };
    if let Some(path) = &args.lines_out {
        fs::write(path, table.to_lines())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    if table.rows.iter().all(|r| r.outcome.is_err()) {
        if let Some(Err(e)) = table.rows.into_iter().next().map(|r| r.outcome) {
            return Err(e.into());
        }
        unreachable!("sweep has at least one row");
    }
    Ok(table.to_text())
}

pub fn train_cmd(args: &TrainArgs) -> CliResult<String> {
    if !(args.lr >= 0.0 && args.lr.is_finite()) || args.batch_size == 0 || args.proj_dim < 2 {
        return Err(CliError::Usage(
            "--lr must be >= 0, --batch-size >= 1 and --proj-dim >= 2".into(),
        ));
    }
    if !(args.gem_p > 0.0 && args.gem_p.is_finite()) {
        return Err(CliError::Usage(format!(
            "--gem-p must be positive, got {}",
            args.gem_p
        )));
    }
    let manifest = load_manifest(&args.manifest)?;
    let data = TrainData::split(
        load_images(&manifest, Role::Database)?,
        load_images(&manifest, Role::Query)?,
        args.val_every,
    );
    let spec = EncoderSpec {
        gem_p: args.gem_p,
        ..EncoderSpec::default()
    };
    let head = match &args.init {
        Some(p) => panowindow::training::load_checkpoint(p)?,
        None => ProjectionHead::random(spec.raw_dim(), args.proj_dim, args.seed)?,
    };
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: args.seed,
        loss: LossConfig {
            margin: args.margin,
            ..LossConfig::default()
        },
        window: window_config(&args.window)?,
        threshold_m: args.threshold_m,
        ..TrainConfig::default()
    };
    info!(
        "training on {} queries, validating on {}",
        data.train_queries.len(),
        data.val_queries.len()
    );
    let report = train(&data, &spec, head, &cfg)?;

    let mut out = String::new();
    let r1 = |r: &RecallReport| r.at(1).unwrap_or(f64::NAN);
    let _ = writeln!(out, "initial val R@1 {:.2}", r1(&report.initial_validation));
    for (e, s) in report.epochs.iter().enumerate() {
        let _ = writeln!(
            out,
            "epoch {} loss {:.6} triplets {} val R@1 {:.2}",
            e + 1,
            s.mean_loss,
            s.triplets,
            r1(&s.validation)
        );
    }
    if !report.skipped_queries.is_empty() {
        let _ = writeln!(
            out,
            "skipped (no positive): {}",
            report.skipped_queries.join(" ")
        );
    }
    let meta = [
        ("seed", args.seed.to_string()),
        ("learning_rate", args.lr.to_string()),
        ("gem_p", args.gem_p.to_string()),
        ("window", cfg.window.label()),
    ]
    .map(|(k, v)| (k.to_string(), v));
    save_checkpoint(&args.checkpoint, &report.head, &meta)?;
    let _ = writeln!(out, "checkpoint {}", args.checkpoint.display());
    Ok(out)
}

pub fn visualize(args: &VisualizeArgs) -> CliResult<String> {
    if args.top_n == 0 {
        return Err(CliError::Usage("--top-n must be at least 1".into()));
    }
    let (artifact, manifest, results) = rank_against_index(
        &args.index,
        &args.manifest,
        &args.query_ids,
        &args.encoder,
        args.norm_p,
    )?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let paths: HashMap<&str, PathBuf> = manifest
        .database()
        .map(|r| (r.id.as_str(), manifest.resolve(r)))
        .collect();
    let mut out = String::new();
    for (qid, result) in &results {
        for (r, e) in top_n(result, args.top_n).iter().enumerate() {
            let pano = load_rgb(&paths[e.id.as_str()])?;
            let (img, rects) = annotate(&pano, &artifact.layout, e.matched.window_index)?;
            let file = args.out.join(format!("{qid}_rank{}_{}.png", r + 1, e.id));
            save_png(&file, &img)?;
            let spans: Vec<String> = rects
                .iter()
                .map(|b| format!("{}..{}", b.x0, b.x1))
                .collect();
            let _ = writeln!(
                out,
                "{qid} {} {} window {} columns {} -> {}",
                r + 1,
                e.id,
                e.matched.window_index,
                spans.join("+"),
                file.display()
            );
        }
    }
    Ok(out)
}

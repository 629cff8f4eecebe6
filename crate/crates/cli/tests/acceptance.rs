//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness; a failing criterion makes the process exit non-zero.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use common::*;
use panowindow::dataset::{synth_dataset, EmbeddingFile, SynthDataset, SynthParams};
use panowindow::evaluation::{evaluate_config, DEFAULT_N_VALUES, DEFAULT_THRESHOLD_M};
use panowindow::mining::{MiningEntry, MiningOutcome};
use panowindow::pipeline::{encode_database, encode_queries};
use panowindow::retrieval::rank_all;
use panowindow::windowing::roll_columns;
use panowindow::{
    compute_layout, gem_pool, mine_triplet, rank, recall_at_n, train, window_distance, Descriptor,
    EncoderSpec, EvalSet, GeoPoint, LabeledImage, MiningConfig, ProjectionHead, RecallReport,
    TrainConfig, TrainData, WindowConfig,
};
use panowindow_cli::args::Cli;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tolerances and sizes fixed by the acceptance criteria.
const EXACT_MATCH_BUDGET: Duration = Duration::from_secs(60);
const TRAINING_BUDGET: Duration = Duration::from_secs(300);
const ORACLE_INSTANCES: usize = 100;
const ORACLE_REL_TOL: f64 = 1e-9;
const GRAD_INSTANCES: usize = 25;
const GRAD_REL_TOL: f64 = 1e-4;
const NORM_TOL: f64 = 1e-6;
const GEM_MEAN_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn r1(report: &RecallReport) -> f64 {
    report.at(1).expect("R@1 measured")
}

fn all_configs(cyclic: bool) -> Vec<WindowConfig> {
    [8, 16, 24, 32]
        .iter()
        .map(|&n| WindowConfig::times(n, cyclic).unwrap())
        .collect()
}

/// 768 px is the smallest convenient width divisible by every stride of the
/// x8..x32 sweep with 8 windows per query width.
fn jittered(seed: u64, seam: f64) -> SynthParams {
    SynthParams {
        seed,
        num_places: 50,
        pano_width_px: 768,
        pano_height_px: 96,
        queries_per_place: 4,
        crop_jitter_px: 8,
        noise_level: 0.03,
        brightness_jitter: 0.1,
        seam_straddle_fraction: seam,
        ..SynthParams::default()
    }
}

fn subset(ds: &SynthDataset, keep: impl Fn(&panowindow::dataset::SynthQuery) -> bool) -> EvalSet {
    let mut set = EvalSet::from(ds);
    let ids: Vec<&str> = ds
        .queries
        .iter()
        .filter(|q| keep(q))
        .map(|q| q.id.as_str())
        .collect();
    set.queries.retain(|q| ids.contains(&q.id.as_str()));
    set
}

fn eval(set: &EvalSet, cfg: &WindowConfig) -> RecallReport {
    evaluate_config(
        set,
        &EncoderSpec::default(),
        cfg,
        2.0,
        &DEFAULT_N_VALUES,
        DEFAULT_THRESHOLD_M,
    )
    .unwrap()
}

fn exact_match() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rows = 0;
    for (width, height) in [(1024u32, 128u32), (768, 96)] {
        let params = SynthParams {
            seed: 7,
            num_places: 50,
            pano_width_px: width,
            pano_height_px: height,
            align_step_px: Some(width / 8),
            ..SynthParams::default()
        };
        let set = EvalSet::from(&synth_dataset(&params).unwrap());
        for cyclic in [false, true] {
            for n in [8u32, 16, 24, 32] {
                if width % n != 0 {
                    continue;
                }
                let cfg = WindowConfig::times(n, cyclic).unwrap();
                let r = r1(&eval(&set, &cfg));
                rows += 1;
                if r != 100.0 {
                    failures.push(format!("{width}px {} R@1 {r:.2}", cfg.label()));
                }
            }
        }
    }
    let t = start.elapsed();
    check(
        failures.is_empty() && t < EXACT_MATCH_BUDGET,
        format!(
            "{rows} configs at 100% R@1 in {t:.1?} (budget 60s){}",
            fail_list(&failures)
        ),
    )
}

fn fail_list(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("; failing: {}", f.join(", "))
    }
}

fn stride_trend() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let set = EvalSet::from(&synth_dataset(&jittered(seed, 0.0)).unwrap());
        assert_eq!(set.queries.len(), 200);
        let r: Vec<f64> = all_configs(false)
            .iter()
            .map(|c| r1(&eval(&set, c)))
            .collect();
        let monotone = r.windows(2).all(|w| w[1] >= w[0]);
        let strict = r.windows(2).any(|w| w[1] > w[0]);
        ok &= monotone && strict;
        lines.push(format!(
            "seed {seed}: {:.1}/{:.1}/{:.1}/{:.1}",
            r[0], r[1], r[2], r[3]
        ));
    }
    check(ok, format!("R@1 x8/x16/x24/x32 {}", lines.join("; ")))
}

fn cyclic_benefit() -> Outcome {
    let plain = WindowConfig::times(16, false).unwrap();
    let cyc = WindowConfig::times(16, true).unwrap();

    let ds = synth_dataset(&jittered(4, 0.5)).unwrap();
    let seam = subset(&ds, |q| q.straddles_seam);
    let (jp, jc) = (r1(&eval(&seam, &plain)), r1(&eval(&seam, &cyc)));

    let aligned = SynthParams {
        seed: 4,
        num_places: 50,
        pano_width_px: 768,
        pano_height_px: 96,
        seam_straddle_fraction: 0.5,
        align_step_px: Some(48),
        ..SynthParams::default()
    };
    let ds = synth_dataset(&aligned).unwrap();
    let seam_exact = subset(&ds, |q| q.straddles_seam);
    let (ep, ec) = (r1(&eval(&seam_exact, &plain)), r1(&eval(&seam_exact, &cyc)));
    check(
        jc > jp && ec == 100.0 && ep < 100.0,
        format!(
            "seam subset ({} queries) jittered: x16 {jp:.2} vs x16-cyclic {jc:.2}; aligned noise-free ({} queries): {ep:.2} vs {ec:.2}",
            seam.queries.len(),
            seam_exact.queries.len()
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_rel: f64 = 0.0;
    let mut mismatches = Vec::new();
    let mut mined = 0;
    for case in 0..ORACLE_INSTANCES {
        let n_db = rng.random_range(1..=20);
        let k = rng.random_range(1..=16);
        let dim = rng.random_range(1..=16);
        let db: Vec<(String, _)> = (0..n_db)
            .map(|i| (format!("p{i:02}"), random_pano(&mut rng, k, dim)))
            .collect();
        let q = Descriptor::from_values(unit_vec(&mut rng, dim));

        // window_distance
        for (_, pano) in &db {
            let got = window_distance(&q, pano, 2.0).unwrap();
            let (d, w) = oracle_window_distance(&q, pano, 2.0);
            max_rel = max_rel.max((got.distance - d).abs() / d.abs().max(1e-300));
            if got.window_index != w || !rel_close(got.distance, d, ORACLE_REL_TOL) {
                mismatches.push(format!("window_distance #{case}"));
            }
        }
        // rank
        let got = rank(&q, &db, 2.0).unwrap();
        let want = oracle_rank(&q, &db, 2.0);
        let same = got.ranked.iter().zip(&want).all(|(g, (id, d, w))| {
            &g.id == id
                && g.matched.window_index == *w
                && rel_close(g.matched.distance, *d, ORACLE_REL_TOL)
        });
        if !same || got.ranked.len() != want.len() {
            mismatches.push(format!("rank #{case}"));
        }
        // mine_triplet with a pool covering every far panorama
        let geos: Vec<GeoPoint> = (0..n_db)
            .map(|_| GeoPoint::new(rng.random_range(0.0..400.0), rng.random_range(0.0..400.0)))
            .collect();
        let anchor = geos[rng.random_range(0..n_db)];
        let qg = GeoPoint::new(
            anchor.easting_m + rng.random_range(-6.0..6.0),
            anchor.northing_m,
        );
        let entries: Vec<MiningEntry<'_, usize>> = (0..n_db)
            .map(|i| MiningEntry {
                id: i,
                geo: geos[i],
                descriptor: &db[i].1,
            })
            .collect();
        let cfg = MiningConfig::default();
        let dist = |i: usize| oracle_window_distance(&q, &db[i].1, 2.0).0;
        let positive = (0..n_db)
            .filter(|&i| qg.distance_m(&geos[i]) <= cfg.positive_radius_m)
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
        let mut far: Vec<usize> = (0..n_db)
            .filter(|&i| qg.distance_m(&geos[i]) > cfg.negative_exclusion_radius_m)
            .collect();
        far.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
        let outcome = mine_triplet(usize::MAX, &q, &qg, &entries, &cfg, 2.0, case as u64);
        let agree = match (outcome, positive) {
            (Ok(MiningOutcome::NoPositive(_)), None) => true,
            (Ok(MiningOutcome::Triplet(t)), Some(p)) => {
                mined += 1;
                t.positive_id == p && t.negative_ids == far[..cfg.negatives_per_query]
            }
            (Err(_), _) => far.len() < cfg.negatives_per_query,
            _ => false,
        };
        if !agree {
            mismatches.push(format!("mine_triplet #{case}"));
        }
        // recall_at_n over a few queries against the same database
        let queries: Vec<Descriptor> = (0..5)
            .map(|_| Descriptor::from_values(unit_vec(&mut rng, dim)))
            .collect();
        let qgeos: Vec<GeoPoint> = (0..5)
            .map(|_| GeoPoint::new(rng.random_range(0.0..150.0), rng.random_range(0.0..150.0)))
            .collect();
        let results: Vec<(usize, _)> = rank_all(&queries, &db, 2.0)
            .unwrap()
            .into_iter()
            .enumerate()
            .collect();
        let qmap: HashMap<usize, GeoPoint> = qgeos.iter().copied().enumerate().collect();
        let dmap: HashMap<String, GeoPoint> = db
            .iter()
            .map(|(id, _)| id.clone())
            .zip(geos.iter().copied())
            .collect();
        let ns = [1, 2, 5, 20];
        let got = recall_at_n(&results, &qmap, &dmap, &ns, 25.0).unwrap();
        for (n, pct) in got.recalls {
            let hits = (0..5)
                .filter(|&i| {
                    oracle_rank(&queries[i], &db, 2.0)
                        .iter()
                        .take(n)
                        .any(|(id, _, _)| qgeos[i].distance_m(&dmap[id]) <= 25.0)
                })
                .count();
            if pct != 100.0 * hits as f64 / 5.0 {
                mismatches.push(format!("recall_at_n #{case} N={n}"));
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!(
            "{ORACLE_INSTANCES} instances per operation ({mined} mined triplets), max distance rel. error {max_rel:.1e}{}",
            fail_list(&mismatches)
        ),
    )
}

fn gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < GRAD_INSTANCES {
        if let Some(rel) = gradient_case(&mut rng) {
            worst = worst.max(rel);
            n += 1;
        }
    }
    check(
        worst < GRAD_REL_TOL,
        format!("{n} instances, worst relative error {worst:.2e} (limit 1e-4)"),
    )
}

fn training() -> Outcome {
    let start = Instant::now();
    let ds = synth_dataset(&jittered(5, 0.0)).unwrap();
    let set = EvalSet::from(&ds);
    let data = TrainData::split(set.database, set.queries, 4);
    let head = ProjectionHead::random(128, 32, 1).unwrap();
    let report = train(
        &data,
        &EncoderSpec::default(),
        head,
        &TrainConfig::default(),
    )
    .unwrap();
    let trace = report.loss_trace();
    let (first, last) = (trace[0], trace[trace.len() - 1]);
    let before = r1(&report.initial_validation);
    let after = r1(&report.epochs.last().unwrap().validation);
    let t = start.elapsed();
    check(
        trace.len() == 10 && last < first && after > before && t < TRAINING_BUDGET,
        format!(
            "loss {first:.4} -> {last:.4} over {} epochs; val R@1 {before:.2} -> {after:.2}; {t:.1?} (budget 300s)",
            trace.len()
        ),
    )
}

fn invariance() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let ds = synth_dataset(&jittered(6, 0.3)).unwrap();
    let set = EvalSet::from(&ds);
    let cfg = WindowConfig::times(16, true).unwrap();
    let base = eval(&set, &cfg);
    let stride = compute_layout(768, &cfg).unwrap().stride_px;
    let mut rolled_equal = true;
    for k in [1u32, 5, 11] {
        let rolled = EvalSet {
            database: set
                .database
                .iter()
                .map(|p| LabeledImage {
                    image: roll_columns(&p.image, k * stride),
                    ..p.clone()
                })
                .collect(),
            queries: set.queries.clone(),
        };
        rolled_equal &= eval(&rolled, &cfg) == base;
    }
    ok &= rolled_equal;
    notes.push(format!(
        "roll by k*stride {}",
        if rolled_equal { "identical" } else { "DIFFERS" }
    ));

    let monotone = base.recalls.windows(2).all(|w| w[1].1 >= w[0].1);
    ok &= monotone;
    notes.push(format!("recall monotone in N {monotone}"));

    let spec = EncoderSpec::default();
    let db = encode_database(&set.database, &spec, &cfg).unwrap();
    let qs = encode_queries(&set.queries, &spec, 96, 96).unwrap();
    let worst = db
        .iter()
        .flat_map(|(_, p)| p.windows.iter())
        .chain(&qs)
        .map(|d| (d.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    ok &= worst <= NORM_TOL;
    notes.push(format!("max | |d| - 1 | {worst:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut gem_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..20);
        let vs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..8).map(|_| rng.random_range(0.0..50.0)).collect())
            .collect();
        let pooled = gem_pool(&vs, 1.0).unwrap();
        for j in 0..8 {
            let mean = vs.iter().map(|v| v[j]).sum::<f64>() / n as f64;
            gem_err = gem_err.max((pooled[j] - mean).abs());
        }
    }
    ok &= gem_err <= GEM_MEAN_TOL;
    notes.push(format!("GeM p=1 vs mean {gem_err:.1e}"));

    let records = db
        .iter()
        .flat_map(|(id, p)| {
            p.windows
                .iter()
                .map(move |w| (id.clone(), w.values().to_vec()))
        })
        .collect();
    let file = EmbeddingFile::new(128, true, records).unwrap();
    let bytes = file.encode();
    let round = EmbeddingFile::decode(&bytes).unwrap().encode() == bytes;
    ok &= round;
    notes.push(format!("PVPR round trip byte-exact {round}"));

    check(ok, notes.join("; "))
}

fn cli(args: &[&str]) -> String {
    let cli =
        Cli::try_parse_from(std::iter::once("panowindow").chain(args.iter().copied())).unwrap();
    panowindow_cli::run(&cli).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let runs: Vec<(BTreeMap<String, Vec<u8>>, String)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let p = |s: &str| dir.path().join(s).display().to_string();
            cli(&[
                "synth",
                "--out",
                &p("ds"),
                "--seed",
                "3",
                "--places",
                "30",
                "--pano-width",
                "768",
                "--pano-height",
                "96",
                "--jitter",
                "6",
                "--noise",
                "0.02",
                "--brightness",
                "0.1",
                "--seam-fraction",
                "0.3",
            ]);
            cli(&[
                "index",
                "--manifest",
                &p("ds/manifest.tsv"),
                "--index",
                &p("idx"),
                "--stride-div",
                "16",
                "--cyclic",
            ]);
            let report = cli(&[
                "evaluate",
                "--manifest",
                &p("ds/manifest.tsv"),
                "--sweep",
                "x8,x16,x24,x32",
                "--cyclic",
                "--lines-out",
                &p("sweep.txt"),
            ]);
            (tree(dir.path()), report)
        })
        .collect();
    let files = runs[0].0.len();
    check(
        runs[0] == runs[1],
        format!("{files} files and the sweep report identical across two runs"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("exact-match soundness", exact_match),
        ("stride-refinement trend", stride_trend),
        ("cyclic benefit", cyclic_benefit),
        ("oracle equivalence", oracle_equivalence),
        ("gradient correctness", gradient),
        ("training efficacy", training),
        ("invariance suite", invariance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1}s]: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Command-line front end. Every subcommand reads the layered run config
//! (`--config` file, `SEGALIGN_*` environment, `--set` flags).
//!
//! Exit codes: 0 ok, 2 config error, 3 data error, 4 training divergence,
//! 5 verification failure.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segalign::align::{run_baseline, write_matches_jsonl, Method, SegmentMatch};
use segalign::config::{load_from_env, RunConfig};
use segalign::eval::{
    dump_map_image, flatten_matches, group_annotations, group_matches, read_pair_matches, segment_box, write_pair_matches,
    PairSegments,
};
use segalign::experiment::{calibrate_threshold, fit_ssan, spd_samples};
use segalign::features::{ingest, FeatureStore};
use segalign::index::{load_index, save_index, KeyframeSets};
use segalign::keyframe::{read_jsonl, write_jsonl};
use segalign::pipeline::{self, append_artifact, QueryCandidates, RunInputs};
use segalign::simmap::{dense_map, write_pgm};
use segalign::spd::train::train_spd_with;
use segalign::spd::{detect_pair, load_detector, save_detector, DetectorParams};
use segalign::ssan::{load_ssan, save_ssan, ssan_forward};
use segalign::synth::{load_dataset, make_pairs, read_annotations, GroundTruthPair, LoadedDataset};
use segalign::{Error, Result};

#[derive(Parser)]
#[command(name = "segalign", version, about = "Segment-level video retrieval and alignment on frame embeddings")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config; environment and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker cap (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Copy pairs (defaults to `data.queries`).
        #[arg(long)]
        pairs: Option<usize>,
        /// Unrelated gallery videos (defaults to `data.distractors`).
        #[arg(long)]
        distractors: Option<usize>,
    },
    /// Write keyframe labels and scores as JSON lines.
    TeacherLabel {
        /// SGAF feature file.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// teacher, scorer or all.
        #[arg(long)]
        source: Option<String>,
    },
    /// Train the pattern detector.
    TrainSpd {
        /// Training dataset; synthetic pairs from the config otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Dataset whose best-F1 threshold becomes the operating threshold.
        #[arg(long)]
        calibrate: Option<PathBuf>,
        /// Train on keyframe-thinned, hit-like maps for use with `run` and
        /// `align`, calibrating on synthetic held-out pairs.
        #[arg(long)]
        hit_maps: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train keyframe scorer and detector jointly.
    TrainSsan {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Detector to start from; trained first when absent.
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Index gallery keyframes.
    BuildIndex {
        #[arg(long)]
        features: PathBuf,
        /// Keyframe JSONL; every frame is indexed when absent.
        #[arg(long)]
        keyframes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-N search for every query, grouped by gallery video.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        keyframes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align candidate groups on their keyframe-compacted sparse maps, or a
    /// single pair on its dense map with `--pair`.
    Align {
        #[arg(long, required_unless_present = "pair")]
        candidates: Option<PathBuf>,
        /// Query and gallery video ids; matches go out as JSON lines.
        #[arg(long, num_args = 2, value_names = ["Q", "R"], conflicts_with = "candidates")]
        pair: Option<Vec<String>>,
        /// Keyframe JSONL of queries and gallery; all frames otherwise.
        #[arg(long)]
        keyframes: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        /// hough, tn, dp or spd.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Output file; `--pair` output goes to stdout when absent.
        #[arg(long, required_unless_present = "pair")]
        out: Option<PathBuf>,
    },
    /// Run the detector on dense maps of query/reference pairs.
    Detect {
        /// SGDM detector, or SGSM joint model for keyframe-masked detection.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Annotation CSV naming the pairs; all query × reference pairs otherwise.
        #[arg(long, conflicts_with = "pair")]
        pairs: Option<PathBuf>,
        /// A single query and reference id; matches go out as JSON lines.
        #[arg(long, num_args = 2, value_names = ["Q", "R"])]
        pair: Option<Vec<String>>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Output file; `--pair` output goes to stdout when absent.
        #[arg(long, required_unless_present = "pair")]
        out: Option<PathBuf>,
    },
    /// Score predictions against annotations.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        #[arg(long, default_value = "seconds")]
        protocol: String,
        /// Score threshold for the fixed-threshold F1.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a similarity map as PGM, or PPM with box overlays.
    DumpMap {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        query_id: String,
        #[arg(long)]
        ref_id: String,
        /// Ground-truth annotation CSV drawn in green.
        #[arg(long)]
        gts: Option<PathBuf>,
        /// Prediction JSONL drawn in red.
        #[arg(long)]
        preds: Option<PathBuf>,
        /// `.pgm` for the bare map, anything else gets the PPM overlay.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: keyframes, index, search, alignment, evaluation.
    Run {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        detector: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Check the artifact hash chain of a run directory.
    Verify { dir: PathBuf },
}

fn load_config(c: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut set = c.set.clone();
    if let Some(t) = c.threads {
        set.push(format!("threads={t}"));
    }
    if let Some(s) = c.seed {
        set.push(format!("seed={s}"));
    }
    for (k, v) in extra {
        if let Some(v) = v {
            set.push(format!("{k}=\"{v}\""));
        }
    }
    Ok(load_from_env(c.config.as_deref(), &set)?.seeded())
}

fn out_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

/// Records a command's output in its directory's artifact chain.
fn record(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = out_dir(out);
    let cfg_path = dir.join(pipeline::CONFIG_FILE);
    let hash = cfg.hash()?;
    let same = std::fs::read(&cfg_path)
        .ok()
        .and_then(|b| serde_json::from_slice::<RunConfig>(&b).ok())
        .is_some_and(|c| c.hash().ok().as_deref() == Some(hash.as_str()));
    if !same {
        let mut w = BufWriter::new(File::create(&cfg_path)?);
        serde_json::to_writer_pretty(&mut w, cfg)?;
        std::io::Write::flush(&mut w)?;
        append_artifact(dir, &hash, pipeline::CONFIG_FILE, &[])?;
    }
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    append_artifact(dir, &hash, &name, &[pipeline::CONFIG_FILE])
}

/// JSON lines to `out`, or stdout when no file is named.
fn emit_matches(cfg: &RunConfig, out: Option<&Path>, matches: &[SegmentMatch]) -> Result<()> {
    match out {
        Some(path) => {
            write_matches_jsonl(BufWriter::new(File::create(path)?), matches)?;
            record(cfg, path)
        }
        None => write_matches_jsonl(std::io::stdout().lock(), matches),
    }
}

fn training_pairs(cfg: &RunConfig, data: Option<&Path>) -> Result<Vec<GroundTruthPair>> {
    match data {
        Some(dir) => load_dataset(dir)?.ground_truth_pairs(),
        None => {
            let t = &cfg.training;
            make_pairs(&cfg.data.synth, &cfg.data.mix, t.first_pair..t.first_pair + t.pairs, cfg.threads)
        }
    }
}

fn train_detector(cfg: &RunConfig, pairs: &[GroundTruthPair]) -> Result<DetectorParams> {
    let samples = spd_samples(pairs, cfg.detector.input_size, cfg.threads)?;
    let init = DetectorParams::init(&cfg.detector)?;
    let (det, _) = train_spd_with(&samples, &init, &cfg.training.sgd, |e, s| {
        eprintln!("epoch {e}: bce {:.4} giou {:.4}", s.l_bce, s.l_giou)
    })?;
    Ok(det)
}

fn read_keyframes(path: Option<&Path>) -> Result<Option<KeyframeSets>> {
    path.map(|p| Ok(pipeline::keyframe_sets(&read_jsonl(BufReader::new(File::open(p)?))?)))
        .transpose()
}

fn all_frames(store: &FeatureStore) -> KeyframeSets {
    store.iter().map(|s| (s.video_id().to_string(), (0..s.len()).collect())).collect()
}

fn read_candidates(path: &Path) -> Result<Vec<QueryCandidates>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn parse_method(s: &str) -> Result<Method> {
    s.parse().map_err(|e: Error| Error::Config(e.to_string()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Synth { out, pairs, distractors } => {
            let mut cfg = load_config(c, &[])?;
            cfg.data.queries = pairs.unwrap_or(cfg.data.queries);
            cfg.data.distractors = distractors.unwrap_or(cfg.data.distractors);
            let data: LoadedDataset = pipeline::generate_data(&out, &cfg)?;
            println!(
                "{} pairs, {} gallery videos; copy cosine {:.3}, random cosine {:.3}",
                data.manifest.pairs,
                data.refs.len(),
                data.manifest.report.copy_cosine,
                data.manifest.report.random_cosine
            );
        }
        Command::TeacherLabel { features, out, source } => {
            let cfg = load_config(c, &[("keyframes.source", source)])?;
            let store = ingest(&features)?;
            let records = pipeline::extract_all(&store, &cfg.keyframes, cfg.threads);
            write_jsonl(BufWriter::new(File::create(&out)?), &records)?;
            record(&cfg, &out)?;
            let kept: usize = records.iter().map(|r| r.keyframes().len()).sum();
            println!("{} videos, {kept} of {} frames kept", records.len(), store.total_frames());
        }
        Command::TrainSpd { data, calibrate, hit_maps, out } => {
            let cfg = load_config(c, &[])?;
            if hit_maps {
                let det = pipeline::train_detector(&cfg)?;
                println!("operating threshold {:.4}", det.config.score_threshold);
                save_detector(&det, &out)?;
                return record(&cfg, &out);
            }
            let pairs = training_pairs(&cfg, data.as_deref())?;
            let mut det = train_detector(&cfg, &pairs)?;
            if let Some(dir) = calibrate {
                let val = load_dataset(dir)?.ground_truth_pairs()?;
                det.config.score_threshold = calibrate_threshold(&det, &val, 0.02, &cfg.protocol, cfg.threads)?;
                println!("operating threshold {:.4}", det.config.score_threshold);
            }
            save_detector(&det, &out)?;
            record(&cfg, &out)?;
        }
        Command::TrainSsan { data, detector, out } => {
            let cfg = load_config(c, &[])?;
            let pairs = training_pairs(&cfg, data.as_deref())?;
            let det = match detector {
                Some(p) => load_detector(p)?,
                None => train_detector(&cfg, &pairs)?,
            };
            let (params, report) = fit_ssan(&pairs, &det, &cfg.training, &cfg.keyframes.teacher, cfg.threads, &mut |l| eprintln!("{l}"))?;
            save_ssan(&params, &out)?;
            record(&cfg, &out)?;
            if let Some(last) = report.epochs.last() {
                println!("final compression ratio {:.3}", last.compression_ratio);
            }
        }
        Command::BuildIndex { features, keyframes, out } => {
            let cfg = load_config(c, &[])?;
            let store = ingest(&features)?;
            let keys = read_keyframes(keyframes.as_deref())?.unwrap_or_else(|| all_frames(&store));
            let keys: KeyframeSets = keys.into_iter().filter(|(id, _)| store.get(id).is_some()).collect();
            let index = pipeline::build_index(&store, &keys, &cfg.index, cfg.seed)?;
            save_index(&index, &out)?;
            record(&cfg, &out)?;
            println!("{} index over {} keyframes", index.kind(), index.rows().len());
        }
        Command::Query { index, queries, keyframes, out } => {
            let cfg = load_config(c, &[])?;
            let index = pipeline::with_probe(load_index(&index)?, &cfg.index);
            let store = ingest(&queries)?;
            let keys = read_keyframes(keyframes.as_deref())?.unwrap_or_else(|| all_frames(&store));
            let gallery: BTreeSet<String> = index.rows().refs.iter().map(|r| r.video_id.clone()).collect();
            let mut cands = Vec::new();
            for id in store.ids() {
                let plan = segalign::index::QueryPlan {
                    query_video_id: id.to_string(),
                    keyframe_indices: keys.get(id).cloned().ok_or_else(|| Error::UnknownVideo(id.to_string()))?,
                    top_n: cfg.index.top_n,
                };
                let mut groups = segalign::index::plan_and_group(&plan, &store, &index, &cfg.group)?;
                groups.retain(|g| gallery.contains(&g.ref_video_id));
                cands.push(QueryCandidates { query_id: id.to_string(), groups });
            }
            pipeline::write_candidates(&out, &cands)?;
            record(&cfg, &out)?;
            let n: usize = cands.iter().map(|q| q.groups.len()).sum();
            println!("{} queries, {n} candidate pairs", cands.len());
        }
        Command::Align { candidates, pair, keyframes, queries, gallery, method, detector, out } => {
            let cfg = load_config(c, &[])?;
            let method = method.as_deref().map(parse_method).transpose()?.unwrap_or(cfg.method);
            let det = match (method, detector) {
                (Method::Spd, Some(p)) => Some(load_detector(p)?),
                (Method::Spd, None) => return Err(Error::Config("--method spd needs --detector".into())),
                _ => None,
            };
            let (qs, gs) = (ingest(&queries)?, ingest(&gallery)?);
            if let Some([q, r]) = pair.as_deref() {
                let m = dense_map(qs.require(q)?, gs.require(r)?)?;
                let matches = match &det {
                    Some(d) => detect_pair(d, &m)?.matches,
                    None => run_baseline(&m, method, &cfg.baseline)?,
                };
                return emit_matches(&cfg, out.as_deref(), &matches);
            }
            let (Some(candidates), Some(out)) = (candidates, out) else {
                return Err(Error::Config("align needs --candidates and --out, or --pair".into()));
            };
            let cands = read_candidates(&candidates)?;
            let keys = match read_keyframes(keyframes.as_deref())? {
                Some(k) => k,
                None => all_frames(&qs).into_iter().chain(all_frames(&gs)).collect(),
            };
            let preds = pipeline::align_candidates(&cands, &qs, &gs, &keys, method, &cfg, det.as_ref())?;
            let flat = flatten_matches(&preds);
            write_pair_matches(BufWriter::new(File::create(&out)?), &flat)?;
            record(&cfg, &out)?;
            println!("{} matches over {} pairs", flat.len(), preds.len());
        }
        Command::Detect { model, queries, refs, pairs, pair, threshold, out } => {
            let cfg = load_config(c, &[])?;
            let (qs, rs) = (ingest(&queries)?, ingest(&refs)?);
            let keys: Vec<(String, String)> = match (pairs, pair.as_deref()) {
                (_, Some([q, r])) => vec![(q.clone(), r.clone())],
                (Some(p), _) => group_annotations(&read_annotations(BufReader::new(File::open(p)?))?).into_keys().collect(),
                _ => qs.ids().flat_map(|q| rs.ids().map(move |r| (q.to_string(), r.to_string()))).collect(),
            };
            let joint = std::fs::read(&model)?.starts_with(b"SGSM");
            let mut preds = PairSegments::new();
            if joint {
                let mut params = load_ssan(&model)?;
                if let Some(t) = threshold {
                    params.detector.config.score_threshold = t;
                }
                for (q, r) in keys {
                    let (a, b) = (qs.require(&q)?, rs.require(&r)?);
                    let m = dense_map(a, b)?;
                    let outp = ssan_forward(&params, a, b, &m, &cfg.training.ssan)?;
                    preds.insert((q, r), outp.detections.matches);
                }
            } else {
                let mut det = load_detector(&model)?;
                if let Some(t) = threshold {
                    det.config.score_threshold = t;
                }
                for (q, r) in keys {
                    let (a, b) = (qs.require(&q)?, rs.require(&r)?);
                    preds.insert((q, r), detect_pair(&det, &dense_map(a, b)?)?.matches);
                }
            }
            if pair.is_some() {
                let matches: Vec<SegmentMatch> = preds.into_values().flatten().collect();
                return emit_matches(&cfg, out.as_deref(), &matches);
            }
            let Some(out) = out else {
                return Err(Error::Config("detect needs --out unless --pair is given".into()));
            };
            let flat = flatten_matches(&preds);
            write_pair_matches(BufWriter::new(File::create(&out)?), &flat)?;
            record(&cfg, &out)?;
            println!("{} matches over {} pairs", flat.len(), preds.len());
        }
        Command::Eval { preds, gts, protocol, threshold, out } => {
            let cfg = load_config(c, &[])?;
            if protocol != "seconds" {
                return Err(Error::Config(format!("unknown protocol `{protocol}`")));
            }
            let p = group_matches(&read_pair_matches(BufReader::new(File::open(&preds)?))?);
            let anns = read_annotations(BufReader::new(File::open(&gts)?))?;
            let g = group_annotations(&anns);
            // ranking is per query, so any common length normalizes alike
            let queries: std::collections::BTreeMap<String, usize> = anns.iter().map(|a| (a.query_id.clone(), 1)).collect();
            let report = pipeline::evaluate(&p, &g, &queries, threshold, &cfg);
            write_json(&out, &report)?;
            record(&cfg, &out)?;
            println!(
                "f1 {:.4} (p {:.4}, r {:.4}), best f1 {:.4}",
                report.f1,
                report.precision,
                report.recall,
                report.best_f1.unwrap_or(0.0)
            );
        }
        Command::DumpMap { queries, refs, query_id, ref_id, gts, preds, out } => {
            let (qs, rs) = (ingest(&queries)?, ingest(&refs)?);
            let m = dense_map(qs.require(&query_id)?, rs.require(&ref_id)?)?;
            if out.extension().is_some_and(|e| e == "pgm") {
                write_pgm(&m, &out)?;
            } else {
                let key = (query_id.clone(), ref_id.clone());
                let boxes = |segs: Option<&Vec<segalign::align::SegmentMatch>>| -> Vec<[f64; 4]> {
                    segs.into_iter().flatten().map(|s| segment_box(&m, s)).collect()
                };
                let g = match gts {
                    Some(p) => group_annotations(&read_annotations(BufReader::new(File::open(p)?))?),
                    None => PairSegments::new(),
                };
                let p = match preds {
                    Some(p) => group_matches(&read_pair_matches(BufReader::new(File::open(p)?))?),
                    None => PairSegments::new(),
                };
                dump_map_image(&m, &boxes(g.get(&key)), &boxes(p.get(&key)), &out)?;
            }
            println!("{} x {} map written to {}", m.rows(), m.cols(), out.display());
        }
        Command::Run { out, data, detector, method } => {
            let cfg = load_config(c, &[("method", method)])?;
            let report = pipeline::run_pipeline(&cfg, &RunInputs { data, detector }, &out)?;
            let e = &report.eval;
            println!(
                "{} queries, {} gallery videos, {} candidate pairs, {} matches",
                report.queries, report.gallery_videos, report.candidate_pairs, report.matches
            );
            println!(
                "segment f1 {:.4} (best {:.4}), mAP {}, compression {:.3}",
                e.f1,
                e.best_f1.unwrap_or(0.0),
                e.map.map_or("n/a".to_string(), |m| format!("{m:.4}")),
                report.compression_ratio
            );
            for t in &report.timings {
                println!("  {:<10} {:>8.3}s", t.stage, t.seconds);
            }
        }
        Command::Verify { dir } => {
            let v = pipeline::verify_run(&dir)?;
            println!("ok: {} artifacts under config {}", v.artifacts, v.config_hash);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

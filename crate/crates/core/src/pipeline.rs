//! The end-to-end retrieval run: keyframes, index, top-N search, candidate
//! groups, sparse maps, alignment and evaluation, plus the artifact hash
//! chain checked by `verify`.
//!
//! Every artifact in a run directory is listed in `artifacts.json` with
//! its digest, the config hash and the artifacts it was derived from.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::{normalized_video_score, run_baseline, Method, SegmentMatch};
use crate::config::{IndexConfig, IndexKind, KeyframeConfig, KeyframeSource, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{
    flatten_matches, group_annotations, map_eval, rank_by_score, segment_f1, sweep_f1, write_pair_matches, EvalReport, PairKey, PairMatch,
    PairSegments,
};
use crate::features::{FeatureSequence, FeatureStore};
use crate::hashing::{canonical_json, file_sha256, sha256_hex};
use crate::index::{plan_and_group, save_index, sparse_map_from_group, AnyIndex, CandidateGroup, FlatIndex, IvfIndex, KeyframeSets, QueryPlan};
use crate::keyframe::{compression_ratio, score_frames, select_keyframes, teacher_select, KeyframeRecord};
use crate::parallel::par_map;
use crate::simmap::{dense_map, keyframe_submatrix, SimilarityMap, SubmatrixMode};
use crate::spd::tile_samples;
use crate::spd::train::train_spd;
use crate::spd::{detect_pair, detect_values, pair_detections, save_detector, DetectorParams};
use crate::experiment::gt_boxes;
use crate::spd::SpdSample;
use crate::synth::{load_dataset, make_distractor, make_pairs, write_dataset, GroundTruthPair, LoadedDataset};

pub const CONFIG_FILE: &str = "config.json";
pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const REPORT_FILE: &str = "report.json";
pub const KEYFRAMES_FILE: &str = "keyframes.jsonl";
pub const INDEX_FILE: &str = "index.sgix";
pub const DETECTOR_FILE: &str = "detector.sgdm";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const MATCHES_FILE: &str = "matches.jsonl";
pub const DATA_DIR: &str = "data";

/// Keyframe record of one video under `cfg`.
pub fn extract_keyframes(seq: &FeatureSequence, cfg: &KeyframeConfig) -> KeyframeRecord {
    let n = seq.len();
    let scores: Vec<f64> = match cfg.source {
        KeyframeSource::All => vec![1.0; n],
        KeyframeSource::Teacher => teacher_select(seq, &cfg.teacher).iter().map(|&b| f64::from(u8::from(b))).collect(),
        KeyframeSource::Scorer => score_frames(seq, &cfg.scorer).scores,
    };
    let mut labels = vec![0u8; n];
    for i in select_keyframes(&scores, cfg.threshold, cfg.interval) {
        labels[i] = 1;
    }
    KeyframeRecord {
        video_id: seq.video_id().to_string(),
        labels,
        scores,
    }
}

pub fn extract_all(store: &FeatureStore, cfg: &KeyframeConfig, threads: usize) -> Vec<KeyframeRecord> {
    let seqs: Vec<&FeatureSequence> = store.iter().collect();
    par_map(&seqs, threads, |s| extract_keyframes(s, cfg))
}

pub fn keyframe_sets(records: &[KeyframeRecord]) -> KeyframeSets {
    records.iter().map(|r| (r.video_id.clone(), r.keyframes())).collect()
}

/// Gallery index over keyframes; IVF centroids are seeded by `seed`.
pub fn build_index(gallery: &FeatureStore, keys: &KeyframeSets, cfg: &IndexConfig, seed: u64) -> Result<AnyIndex> {
    Ok(match cfg.kind {
        IndexKind::Flat => AnyIndex::Flat(FlatIndex::build(gallery, Some(keys))?),
        IndexKind::Ivf => {
            let rows = crate::index::IndexRows::gather(gallery, Some(keys))?;
            let k_c = cfg.k_c.min(rows.len()).max(1);
            let mut ivf = IvfIndex::new(rows, k_c)?;
            ivf.train(cfg.kmeans_iters, seed);
            AnyIndex::Ivf(ivf.with_nprobe(cfg.nprobe))
        }
    })
}

/// Applies the configured probe count to an index read from disk.
pub fn with_probe(index: AnyIndex, cfg: &IndexConfig) -> AnyIndex {
    match index {
        AnyIndex::Ivf(i) => AnyIndex::Ivf(i.with_nprobe(cfg.nprobe)),
        other => other,
    }
}

/// Candidate groups of one query, in reference-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCandidates {
    pub query_id: String,
    pub groups: Vec<CandidateGroup>,
}

pub fn search_queries(
    queries: &FeatureStore,
    query_keys: &KeyframeSets,
    gallery: &FeatureStore,
    index: &AnyIndex,
    cfg: &RunConfig,
) -> Result<Vec<QueryCandidates>> {
    let ids: Vec<&str> = queries.ids().collect();
    par_map(&ids, cfg.threads, |id| {
        let keyframe_indices = query_keys.get(*id).cloned().ok_or_else(|| Error::UnknownVideo(id.to_string()))?;
        let plan = QueryPlan {
            query_video_id: id.to_string(),
            keyframe_indices,
            top_n: cfg.index.top_n,
        };
        let mut groups = plan_and_group(&plan, queries, index, &cfg.group)?;
        groups.retain(|g| gallery.get(&g.ref_video_id).is_some());
        Ok(QueryCandidates {
            query_id: id.to_string(),
            groups,
        })
    })
    .into_iter()
    .collect()
}

/// Aligns every candidate group. Baselines see the sparse map compacted to
/// query keyframes × gallery keyframes, since their paths need adjacent
/// cells; the detector sees the full-geometry sparse map. Matches are in
/// original frames either way.
pub fn align_candidates(
    candidates: &[QueryCandidates],
    queries: &FeatureStore,
    gallery: &FeatureStore,
    keys: &KeyframeSets,
    method: Method,
    cfg: &RunConfig,
    detector: Option<&DetectorParams>,
) -> Result<PairSegments> {
    let jobs: Vec<(&str, &CandidateGroup)> = candidates
        .iter()
        .flat_map(|q| q.groups.iter().map(move |g| (q.query_id.as_str(), g)))
        .collect();
    let out: Vec<Result<(String, String, Vec<SegmentMatch>)>> = par_map(&jobs, cfg.threads, |(qid, g)| {
        let q = queries.require(qid)?;
        let r = gallery.require(&g.ref_video_id)?;
        let frames = |id: &str, len: usize| keys.get(id).cloned().unwrap_or_else(|| (0..len).collect());
        let sparse = sparse_map_from_group(g, q, r)?;
        let matches = match method {
            Method::Spd => {
                let det = detector.ok_or_else(|| Error::Config("spd alignment needs a detector".into()))?;
                detect_pair(det, &sparse)?.matches
            }
            other => {
                let m = keyframe_submatrix(&sparse, &frames(qid, q.len()), &frames(&g.ref_video_id, r.len()), SubmatrixMode::Drop)?;
                run_baseline(&m, other, &cfg.baseline)?
            }
        };
        Ok((qid.to_string(), g.ref_video_id.clone(), matches))
    });
    let mut preds = PairSegments::new();
    for r in out {
        let (q, g, m) = r?;
        preds.insert((q, g), m);
    }
    Ok(preds)
}

/// Segment F1 at `threshold`, the threshold sweep, and video-level mAP
/// from the best match score of each candidate pair.
pub fn evaluate(
    preds: &PairSegments,
    gts: &PairSegments,
    query_frames: &BTreeMap<String, usize>,
    threshold: f64,
    cfg: &RunConfig,
) -> EvalReport {
    let mut report = segment_f1(preds, gts, threshold, &cfg.protocol);
    let (swept, curve) = sweep_f1(preds, gts, &cfg.protocol);
    report.pr_points = curve;
    report.best_threshold = swept.best_threshold;
    report.best_f1 = swept.best_f1;

    let mut scored: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for ((q, r), m) in preds {
        let n = query_frames.get(q).copied().unwrap_or(1);
        let kept: Vec<SegmentMatch> = m.iter().filter(|s| s.score >= threshold).copied().collect();
        if !kept.is_empty() {
            scored.entry(q.clone()).or_default().push((r.clone(), normalized_video_score(&kept, n)));
        }
    }
    let rankings: BTreeMap<String, Vec<String>> = scored.into_iter().map(|(q, v)| (q, rank_by_score(v))).collect();
    let mut relevant: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (q, r) in gts.keys() {
        relevant.entry(q.clone()).or_default().insert(r.clone());
    }
    for q in query_frames.keys() {
        relevant.entry(q.clone()).or_default();
    }
    let m = map_eval(&rankings, &relevant);
    report.map = (m.queries > 0).then_some(m.map);
    report.map_queries = m.queries;
    report.map_skipped = m.skipped;
    report
}

/// One stage's wall-clock time; kept out of the deterministic report body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub method: Method,
    pub queries: usize,
    pub gallery_videos: usize,
    pub gallery_frames: usize,
    pub indexed_frames: usize,
    /// Keyframes over basis frames, queries and gallery together.
    pub compression_ratio: f64,
    pub candidate_pairs: usize,
    pub matches: usize,
    pub score_threshold: f64,
    pub eval: EvalReport,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    /// Canonical JSON without the timing fields.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
        }
        canonical_json(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub name: String,
    pub sha256: String,
    pub config_hash: String,
    /// Earlier artifacts this one was derived from.
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArtifactChain {
    pub config_hash: String,
    pub artifacts: Vec<ArtifactRecord>,
}

impl ArtifactChain {
    fn record(&mut self, dir: &Path, name: &str, inputs: &[&str]) -> Result<()> {
        self.artifacts.push(ArtifactRecord {
            name: name.to_string(),
            sha256: file_sha256(dir.join(name))?,
            config_hash: self.config_hash.clone(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        });
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_candidates(path: &Path, candidates: &[QueryCandidates]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in candidates {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Generates the demo dataset: `queries` copy pairs plus distractors.
pub fn generate_data(dir: &Path, cfg: &RunConfig) -> Result<LoadedDataset> {
    let d = &cfg.data;
    let pairs = make_pairs(&d.synth, &d.mix, 0..d.queries, cfg.threads)?;
    let idx: Vec<usize> = (0..d.distractors).collect();
    let distractors = par_map(&idx, cfg.threads, |&i| make_distractor(&d.synth, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    write_dataset(dir, &d.synth, &d.mix, &pairs, &distractors)?;
    load_dataset(dir)
}

/// Keeps each row's `top_n` largest values at or above `floor`, zeroing
/// the rest, like a map assembled from index hits.
pub fn sparsify_rows(values: &mut [f64], cols: usize, top_n: usize, floor: f64) {
    for row in values.chunks_mut(cols) {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for (rank, &j) in order.iter().enumerate() {
            if rank >= top_n || row[j] < floor {
                row[j] = 0.0;
            }
        }
    }
}

/// Dense map of a pair zeroed outside keyframe rows × columns and
/// sparsified like a hit map.
fn hit_like_values(p: &GroundTruthPair, cfg: &RunConfig) -> Result<(SimilarityMap, Vec<f64>)> {
    let k1 = extract_keyframes(&p.query, &cfg.keyframes).keyframes();
    let k2 = extract_keyframes(&p.reference, &cfg.keyframes).keyframes();
    let m = keyframe_submatrix(&dense_map(&p.query, &p.reference)?, &k1, &k2, SubmatrixMode::ZeroFill)?;
    let mut v = m.detector_values();
    sparsify_rows(&mut v, m.cols(), cfg.index.top_n, cfg.group.score_floor as f64);
    Ok((m, v))
}

/// Detector tiles shaped like pipeline input.
pub fn keyframe_spd_samples(pairs: &[GroundTruthPair], cfg: &RunConfig) -> Result<Vec<SpdSample>> {
    let per: Vec<Result<Vec<SpdSample>>> = par_map(pairs, cfg.threads, |p| {
        let (m, v) = hit_like_values(p, cfg)?;
        tile_samples(&v, m.rows(), m.cols(), &gt_boxes(p), cfg.detector.input_size)
    });
    Ok(per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// Lowest score kept when collecting calibration candidates.
const CALIBRATION_FLOOR: f64 = 0.02;

/// Trains a detector on synthetic pairs disjoint from the demo data and
/// sets its threshold to the best-F1 point on further held-out pairs.
pub fn train_detector(cfg: &RunConfig) -> Result<DetectorParams> {
    let t = &cfg.training;
    let make = |start: usize, n: usize| make_pairs(&cfg.data.synth, &cfg.data.mix, start..start + n, cfg.threads);
    let samples = keyframe_spd_samples(&make(t.first_pair, t.pairs)?, cfg)?;
    let init = DetectorParams::init(&cfg.detector)?;
    let mut det = train_spd(&samples, &init, &t.sgd)?.0;
    drop(samples);
    let val = make(t.first_pair + t.pairs, t.calibration_pairs)?;
    if !val.is_empty() {
        let out: Vec<Result<(PairKey, Vec<SegmentMatch>)>> = par_map(&val, cfg.threads, |p| {
            let (m, v) = hit_like_values(p, cfg)?;
            let dets = detect_values(&det, &v, m.rows(), m.cols(), CALIBRATION_FLOOR)?;
            Ok(((p.query.video_id().to_string(), p.reference.video_id().to_string()), pair_detections(&m, dets).matches))
        });
        let preds: PairSegments = out.into_iter().collect::<Result<_>>()?;
        let (swept, _) = sweep_f1(&preds, &crate::experiment::ground_truth(&val), &cfg.protocol);
        if let Some(b) = swept.best_threshold {
            det.config.score_threshold = b.max(CALIBRATION_FLOOR);
        }
    }
    Ok(det)
}

/// Where the run gets its data and detector.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    /// Existing dataset directory; generated under the run directory if absent.
    pub data: Option<PathBuf>,
    /// Detector model; trained from the config if absent.
    pub detector: Option<PathBuf>,
}

/// Runs every stage, writing artifacts into `out`.
pub fn run_pipeline(cfg: &RunConfig, inputs: &RunInputs, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let cfg = cfg.seeded();
    let hash = cfg.hash()?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    let mut chain = ArtifactChain {
        config_hash: hash.clone(),
        artifacts: Vec::new(),
    };
    chain.record(out, CONFIG_FILE, &[])?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &str| {
        timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: clock.elapsed().as_secs_f64(),
        });
        clock = Instant::now();
    };

    let data = match &inputs.data {
        Some(dir) => load_dataset(dir)?,
        None => {
            let data = generate_data(&out.join(DATA_DIR), &cfg)?;
            for f in &data.manifest.files {
                chain.record(out, &format!("{DATA_DIR}/{}", f.name), &[CONFIG_FILE])?;
            }
            data
        }
    };
    lap("data");

    let mut records = extract_all(&data.queries, &cfg.keyframes, cfg.threads);
    records.extend(extract_all(&data.refs, &cfg.keyframes, cfg.threads));
    crate::keyframe::write_jsonl(BufWriter::new(File::create(out.join(KEYFRAMES_FILE))?), &records)?;
    chain.record(out, KEYFRAMES_FILE, &[CONFIG_FILE])?;
    let keys = keyframe_sets(&records);
    let selected: usize = records.iter().map(|r| r.keyframes().len()).sum();
    let total: usize = records.iter().map(|r| r.labels.len()).sum();
    lap("keyframes");

    let gallery_keys: KeyframeSets = keys.iter().filter(|(id, _)| data.refs.get(id).is_some()).map(|(k, v)| (k.clone(), v.clone())).collect();
    let index = build_index(&data.refs, &gallery_keys, &cfg.index, cfg.seed)?;
    save_index(&index, out.join(INDEX_FILE))?;
    chain.record(out, INDEX_FILE, &[KEYFRAMES_FILE])?;
    lap("index");

    let candidates = search_queries(&data.queries, &keys, &data.refs, &index, &cfg)?;
    write_candidates(&out.join(CANDIDATES_FILE), &candidates)?;
    chain.record(out, CANDIDATES_FILE, &[INDEX_FILE, KEYFRAMES_FILE])?;
    lap("search");

    let detector = match (cfg.method, &inputs.detector) {
        (Method::Spd, Some(path)) => Some(crate::spd::load_detector(path)?),
        (Method::Spd, None) => {
            let d = train_detector(&cfg)?;
            save_detector(&d, out.join(DETECTOR_FILE))?;
            chain.record(out, DETECTOR_FILE, &[CONFIG_FILE])?;
            Some(d)
        }
        _ => None,
    };
    lap("detector");

    let preds = align_candidates(&candidates, &data.queries, &data.refs, &keys, cfg.method, &cfg, detector.as_ref())?;
    let flat: Vec<PairMatch> = flatten_matches(&preds);
    write_pair_matches(BufWriter::new(File::create(out.join(MATCHES_FILE))?), &flat)?;
    let mut align_inputs = vec![CANDIDATES_FILE];
    if detector.is_some() && inputs.detector.is_none() {
        align_inputs.push(DETECTOR_FILE);
    }
    chain.record(out, MATCHES_FILE, &align_inputs)?;
    lap("align");

    let threshold = detector.as_ref().map_or(0.0, |d| d.config.score_threshold);
    let gts = group_annotations(&data.annotations);
    let query_frames: BTreeMap<String, usize> = data.queries.iter().map(|s| (s.video_id().to_string(), s.len())).collect();
    let mut eval = evaluate(&preds, &gts, &query_frames, threshold, &cfg);
    eval.compression_ratio = Some(compression_ratio(selected, total));
    lap("eval");

    let report = RunReport {
        config_hash: hash,
        method: cfg.method,
        queries: data.queries.len(),
        gallery_videos: data.refs.len(),
        gallery_frames: data.refs.total_frames(),
        indexed_frames: index.rows().len(),
        compression_ratio: compression_ratio(selected, total),
        candidate_pairs: preds.len(),
        matches: flat.len(),
        score_threshold: threshold,
        eval,
        timings,
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    chain.record(out, REPORT_FILE, &[MATCHES_FILE])?;
    write_json(&out.join(ARTIFACTS_FILE), &chain)?;
    Ok(report)
}

/// Writes a single-artifact chain entry next to a command's output so
/// stand-alone commands can be verified too.
pub fn append_artifact(dir: &Path, config_hash: &str, name: &str, inputs: &[&str]) -> Result<()> {
    let path = dir.join(ARTIFACTS_FILE);
    let mut chain: ArtifactChain = if path.exists() {
        serde_json::from_reader(BufReader::new(File::open(&path)?))?
    } else {
        ArtifactChain {
            config_hash: config_hash.to_string(),
            artifacts: Vec::new(),
        }
    };
    chain.artifacts.retain(|a| a.name != name);
    chain.config_hash = config_hash.to_string();
    chain.record(dir, name, inputs)?;
    write_json(&path, &chain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub artifacts: usize,
}

/// Checks a run directory: the config hashes to the recorded value, every
/// artifact carries that hash, its digest matches the file, and its
/// inputs appear earlier in the chain.
pub fn verify_run(dir: &Path) -> Result<VerifyReport> {
    let fail = |m: String| Error::Verification(m);
    let chain: ArtifactChain = serde_json::from_reader(BufReader::new(
        File::open(dir.join(ARTIFACTS_FILE)).map_err(|e| fail(format!("{ARTIFACTS_FILE}: {e}")))?,
    ))?;
    let cfg: RunConfig = serde_json::from_reader(BufReader::new(
        File::open(dir.join(CONFIG_FILE)).map_err(|e| fail(format!("{CONFIG_FILE}: {e}")))?,
    ))
    .map_err(|e| fail(format!("{CONFIG_FILE}: {e}")))?;
    let hash = sha256_hex(canonical_json(&cfg)?.as_bytes());
    if hash != chain.config_hash {
        return Err(fail(format!("config hash {hash} does not match chain {}", chain.config_hash)));
    }
    let mut seen = BTreeSet::new();
    for a in &chain.artifacts {
        if a.config_hash != hash {
            return Err(fail(format!("{} was produced under config {}", a.name, a.config_hash)));
        }
        let got = file_sha256(dir.join(&a.name)).map_err(|e| fail(format!("{}: {e}", a.name)))?;
        if got != a.sha256 {
            return Err(fail(format!("{} digest mismatch", a.name)));
        }
        if let Some(i) = a.inputs.iter().find(|i| !seen.contains(i.as_str())) {
            return Err(fail(format!("{} depends on {i}, which is not earlier in the chain", a.name)));
        }
        seen.insert(a.name.as_str());
    }
    if dir.join(REPORT_FILE).exists() {
        let report: RunReport = serde_json::from_reader(BufReader::new(File::open(dir.join(REPORT_FILE))?))?;
        if report.config_hash != hash {
            return Err(fail("report config hash differs from the run config".into()));
        }
    }
    Ok(VerifyReport {
        config_hash: hash,
        artifacts: chain.artifacts.len(),
    })
}

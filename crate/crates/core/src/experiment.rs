//! Desk-scale training and evaluation on synthetic pairs: turning ground
//! truth into detector samples and running every aligner over a split.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::align::{run_baseline, BaselineParams, Method, SegmentMatch};
use crate::error::Result;
use crate::eval::{segment_f1, sweep_f1, EvalReport, PairSegments, Protocol};
use crate::keyframe::{train_scorer, ScorerExample, ScorerParams, TeacherParams};
use crate::optim::SgdConfig;
use crate::parallel::par_map;
use crate::simmap::{dense_map, keyframe_submatrix, SimilarityMap, SubmatrixMode};
use crate::spd::boxes::BBox;
use crate::spd::train::train_spd_with;
use crate::spd::{detect_pair_at, detect_values, pair_detections, tile_samples, DetectorConfig, DetectorParams, SpdSample};
use crate::ssan::{hard_mask, masked_values, teacher_mask, train_ssan_with, SsanConfig, SsanParams, SsanSample};
use crate::synth::{make_pair_with, make_pairs, EditMix, GroundTruthPair, SynthConfig, TemporalEdit};

fn key(p: &GroundTruthPair) -> (String, String) {
    (p.query.video_id().to_string(), p.reference.video_id().to_string())
}

/// Ground-truth boxes of a pair in dense-map cells.
pub fn gt_boxes(p: &GroundTruthPair) -> Vec<BBox> {
    let qf = p.query.basis_fps() as f64;
    let rf = p.reference.basis_fps() as f64;
    p.segments
        .iter()
        .map(|s| [s.r_start * rf, s.q_start * qf, s.r_end * rf, s.q_end * qf])
        .collect()
}

pub fn ground_truth(pairs: &[GroundTruthPair]) -> PairSegments {
    pairs.iter().map(|p| (key(p), p.segments.clone())).collect()
}

/// Detector tiles of every pair's dense map.
pub fn spd_samples(pairs: &[GroundTruthPair], size: usize, threads: usize) -> Result<Vec<SpdSample>> {
    let per: Vec<Result<Vec<SpdSample>>> = par_map(pairs, threads, |p| {
        let m = dense_map(&p.query, &p.reference)?;
        tile_samples(&m.detector_values(), m.rows(), m.cols(), &gt_boxes(p), size)
    });
    Ok(per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// Detector tiles of maps thinned by teacher keyframes (zero-filled).
pub fn teacher_spd_samples(
    pairs: &[GroundTruthPair],
    teacher: &TeacherParams,
    interval: Option<usize>,
    size: usize,
    threads: usize,
) -> Result<Vec<SpdSample>> {
    let per: Vec<Result<Vec<SpdSample>>> = par_map(pairs, threads, |p| {
        let m = dense_map(&p.query, &p.reference)?;
        let w1 = teacher_mask(&p.query, teacher, interval);
        let w2 = teacher_mask(&p.reference, teacher, interval);
        let v = masked_values(&m.detector_values(), &w1, &w2);
        tile_samples(&v, m.rows(), m.cols(), &gt_boxes(p), size)
    });
    Ok(per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

pub fn ssan_samples(pairs: &[GroundTruthPair], teacher: &TeacherParams, threads: usize) -> Result<Vec<SsanSample>> {
    par_map(pairs, threads, |p| SsanSample::new(&p.query, &p.reference, gt_boxes(p), teacher))
        .into_iter()
        .collect()
}

/// How keyframes thin the map before detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thinning<'a> {
    Dense,
    /// Teacher keyframes with sparse-uniform filling.
    Teacher { teacher: &'a TeacherParams, interval: Option<usize> },
    /// Thresholded effective scores of a scorer.
    Scorer { scorer: &'a ScorerParams, cfg: &'a SsanConfig },
    /// Soft effective scores of a scorer multiplied into the map.
    Soft { scorer: &'a ScorerParams, cfg: &'a SsanConfig },
}

/// Per-pair keyframe weights for the query and reference axes, and the
/// number of frames counted as kept.
fn weights(p: &GroundTruthPair, thin: &Thinning) -> Option<(Vec<f64>, Vec<f64>, usize)> {
    use crate::keyframe::score_frames;
    use crate::ssan::{effective_keyframes, effective_scores, teacher_mask};
    let ones = |w: &[f64]| w.iter().filter(|&&x| x == 1.0).count();
    match *thin {
        Thinning::Dense => None,
        Thinning::Teacher { teacher, interval } => {
            let (a, b) = (teacher_mask(&p.query, teacher, interval), teacher_mask(&p.reference, teacher, interval));
            let k = ones(&a) + ones(&b);
            Some((a, b, k))
        }
        Thinning::Scorer { scorer, cfg } => {
            let a = hard_mask(&score_frames(&p.query, scorer).scores, cfg);
            let b = hard_mask(&score_frames(&p.reference, scorer).scores, cfg);
            let k = ones(&a) + ones(&b);
            Some((a, b, k))
        }
        Thinning::Soft { scorer, cfg } => {
            let a = effective_scores(&score_frames(&p.query, scorer).scores, cfg.interval).0;
            let b = effective_scores(&score_frames(&p.reference, scorer).scores, cfg.interval).0;
            let k = effective_keyframes(&a, cfg.keyframe_threshold).len() + effective_keyframes(&b, cfg.keyframe_threshold).len();
            Some((a, b, k))
        }
    }
}

/// Predictions of one aligner over a split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPredictions {
    pub preds: PairSegments,
    /// Kept frames over all frames; 1 for dense maps.
    pub compression_ratio: f64,
}

/// Runs the detector over every pair with optional keyframe masking.
/// Masked maps keep their full geometry; masked-out frames are zero.
pub fn predict_spd(
    det: &DetectorParams,
    pairs: &[GroundTruthPair],
    thin: &Thinning,
    threshold: f64,
    threads: usize,
) -> Result<SplitPredictions> {
    let out: Vec<Result<(Vec<SegmentMatch>, usize, usize)>> = par_map(pairs, threads, |p| {
        let m = dense_map(&p.query, &p.reference)?;
        let total = m.rows() + m.cols();
        match weights(p, thin) {
            None => Ok((detect_pair_at(det, &m, threshold)?.matches, total, total)),
            Some((w1, w2, kept)) => {
                let values = masked_values(&m.detector_values(), &w1, &w2);
                let dets = detect_values(det, &values, m.rows(), m.cols(), threshold)?;
                Ok((pair_detections(&m, dets).matches, kept, total))
            }
        }
    });
    collect(pairs, out)
}

fn collect(pairs: &[GroundTruthPair], out: Vec<Result<(Vec<SegmentMatch>, usize, usize)>>) -> Result<SplitPredictions> {
    let mut preds = PairSegments::new();
    let (mut k, mut t) = (0usize, 0usize);
    for (p, r) in pairs.iter().zip(out) {
        let (m, kk, tt) = r?;
        preds.insert(key(p), m);
        k += kk;
        t += tt;
    }
    Ok(SplitPredictions {
        preds,
        compression_ratio: crate::keyframe::compression_ratio(k, t),
    })
}

/// Detection on the compacted keyframe submatrix, with boxes mapped back
/// to original frames.
pub fn predict_spd_dropped(
    det: &DetectorParams,
    pairs: &[GroundTruthPair],
    thin: &Thinning,
    threshold: f64,
    threads: usize,
) -> Result<SplitPredictions> {
    let out = par_map(pairs, threads, |p| {
        let m = dense_map(&p.query, &p.reference)?;
        let total = m.rows() + m.cols();
        let (w1, w2, _) = weights(p, thin).unwrap_or_else(|| (vec![1.0; m.rows()], vec![1.0; m.cols()], 0));
        let k1: Vec<usize> = (0..w1.len()).filter(|&i| w1[i] == 1.0).collect();
        let k2: Vec<usize> = (0..w2.len()).filter(|&j| w2[j] == 1.0).collect();
        let sub = keyframe_submatrix(&m, &k1, &k2, SubmatrixMode::Drop)?;
        Ok((detect_pair_at(det, &sub, threshold)?.matches, k1.len() + k2.len(), total))
    });
    collect(pairs, out)
}

/// Runs a baseline over every pair's dense map.
pub fn predict_baseline(
    method: Method,
    params: &BaselineParams,
    pairs: &[GroundTruthPair],
    threads: usize,
) -> Result<SplitPredictions> {
    let out = par_map(pairs, threads, |p| {
        let m: SimilarityMap = dense_map(&p.query, &p.reference)?;
        let total = m.rows() + m.cols();
        Ok((run_baseline(&m, method, params)?, total, total))
    });
    collect(pairs, out)
}

/// SSAN inference with thresholded effective scores (zero-filled geometry).
pub fn predict_ssan(params: &SsanParams, cfg: &SsanConfig, pairs: &[GroundTruthPair], threshold: f64, threads: usize) -> Result<SplitPredictions> {
    predict_spd(&params.detector, pairs, &Thinning::Scorer { scorer: &params.scorer, cfg }, threshold, threads)
}

/// F1 numbers of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub name: String,
    /// F1 at the method's own operating threshold.
    pub f1: f64,
    /// Best F1 over all score thresholds.
    pub best_f1: f64,
    pub best_threshold: f64,
    pub compression_ratio: f64,
}

pub fn score_split(name: &str, preds: &SplitPredictions, gts: &PairSegments, threshold: f64, p: &Protocol) -> (MethodScore, EvalReport) {
    let fixed = segment_f1(&preds.preds, gts, threshold, p);
    let (mut swept, _) = sweep_f1(&preds.preds, gts, p);
    swept.compression_ratio = Some(preds.compression_ratio);
    (
        MethodScore {
            name: name.to_string(),
            f1: fixed.f1,
            best_f1: swept.best_f1.unwrap_or(0.0),
            best_threshold: swept.best_threshold.unwrap_or(f64::NAN),
            compression_ratio: preds.compression_ratio,
        },
        swept,
    )
}

/// IoU of two segments as boxes in (query, reference) seconds.
pub fn segment_iou(a: &SegmentMatch, b: &SegmentMatch) -> f64 {
    crate::spd::iou(&[a.r_start, a.q_start, a.r_end, a.q_end], &[b.r_start, b.q_start, b.r_end, b.q_end])
}

/// Whether distinct predictions cover every ground-truth segment at
/// `min_iou`. Exhaustive over assignments, so meant for a handful of
/// segments.
pub fn all_segments_matched(preds: &[SegmentMatch], gts: &[SegmentMatch], min_iou: f64) -> bool {
    fn go(k: usize, gts: &[SegmentMatch], preds: &[SegmentMatch], used: &mut Vec<bool>, min_iou: f64) -> bool {
        if k == gts.len() {
            return true;
        }
        for i in 0..preds.len() {
            if !used[i] && segment_iou(&preds[i], &gts[k]) >= min_iou {
                used[i] = true;
                if go(k + 1, gts, preds, used, min_iou) {
                    return true;
                }
                used[i] = false;
            }
        }
        false
    }
    preds.len() >= gts.len() && go(0, gts, preds, &mut vec![false; preds.len()], min_iou)
}

/// Best-F1 detection threshold on `pairs`, never below `floor`. Keeps the
/// detector's own threshold when nothing is detected.
pub fn calibrate_threshold(det: &DetectorParams, pairs: &[GroundTruthPair], floor: f64, p: &Protocol, threads: usize) -> Result<f64> {
    let preds = predict_spd(det, pairs, &Thinning::Dense, floor, threads)?;
    let (s, _) = score_split("calibration", &preds, &ground_truth(pairs), floor, p);
    Ok(if s.best_threshold.is_finite() { s.best_threshold.max(floor) } else { det.config.score_threshold })
}

/// Fits the scorer to teacher labels, then trains scorer and detector
/// jointly starting from `detector`.
pub fn fit_ssan(
    pairs: &[GroundTruthPair],
    detector: &DetectorParams,
    training: &crate::config::TrainingConfig,
    teacher: &TeacherParams,
    threads: usize,
    log: &mut dyn FnMut(&str),
) -> Result<(SsanParams, crate::ssan::SsanReport)> {
    let examples: Vec<ScorerExample> = pairs
        .iter()
        .flat_map(|p| [ScorerExample::from_teacher(&p.query, teacher), ScorerExample::from_teacher(&p.reference, teacher)])
        .collect();
    let scorer = train_scorer(&examples, ScorerParams::default(), &training.scorer_sgd)?;
    log(&format!("scorer fit: {scorer:?}"));
    let samples = ssan_samples(pairs, teacher, threads)?;
    let init = SsanParams { scorer, detector: detector.clone() };
    train_ssan_with(&samples, &init, &training.ssan_sgd, &training.ssan, |e, ep| {
        log(&format!("ssan epoch {e}: spd {:.4} ske {:.4} ratio {:.3}", ep.stats.l_spd, ep.stats.l_ske, ep.compression_ratio))
    })
}

/// Settings of the end-to-end desk experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskConfig {
    pub synth: SynthConfig,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
    pub accel_pairs: usize,
    pub multi_pairs: usize,
    pub detector: DetectorConfig,
    pub spd_sgd: SgdConfig,
    pub baseline: BaselineParams,
    /// Detection floor used when collecting candidates for threshold sweeps.
    pub candidate_threshold: f64,
    pub teacher: TeacherParams,
    pub interval: Option<usize>,
    /// Fine-tuning epochs of the dense detector on teacher-thinned maps.
    pub teacher_epochs: usize,
    pub scorer_sgd: SgdConfig,
    pub ssan_sgd: SgdConfig,
    pub ssan: SsanConfig,
    pub min_iou: f64,
    pub threads: usize,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            train_pairs: 500,
            val_pairs: 100,
            test_pairs: 100,
            accel_pairs: 100,
            multi_pairs: 50,
            detector: DetectorConfig::default(),
            spd_sgd: SgdConfig { epochs: 60, ..SgdConfig::default() },
            baseline: BaselineParams::default(),
            candidate_threshold: 0.02,
            teacher: TeacherParams::default(),
            interval: Some(8),
            teacher_epochs: 8,
            scorer_sgd: SgdConfig { lr: 0.5, epochs: 400, weight_decay: 0.0, ..SgdConfig::default() },
            ssan_sgd: SgdConfig { lr: 0.005, epochs: 6, ..SgdConfig::default() },
            ssan: SsanConfig::default(),
            min_iou: 0.3,
            threads: 1,
        }
    }
}

/// First pair index of each split; splits never share a seed.
pub const TRAIN_BASE: usize = 0;
pub const TEST_BASE: usize = 100_000;
pub const ACCEL_BASE: usize = 200_000;
pub const MULTI_BASE: usize = 300_000;
pub const VAL_BASE: usize = 400_000;

/// Pairs with exactly two copied segments, cycling through edit pairs.
pub fn two_segment_pairs(cfg: &SynthConfig, range: std::ops::Range<usize>) -> Result<Vec<GroundTruthPair>> {
    let all = EditMix::default().edits;
    let n = all.len();
    range
        .enumerate()
        .map(|(i, index)| make_pair_with(cfg, &[all[i % n], all[(i / n + i + 1) % n]], index))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSegmentScore {
    pub threshold: f64,
    pub pairs: usize,
    /// Pairs where every ground-truth segment has its own prediction.
    pub matched: usize,
    /// Pairs with at least two predictions.
    pub two_or_more: usize,
}

impl MultiSegmentScore {
    pub fn rate(&self) -> f64 {
        if self.pairs == 0 { 0.0 } else { self.matched as f64 / self.pairs as f64 }
    }
}

pub fn multi_segment_score(preds: &PairSegments, pairs: &[GroundTruthPair], threshold: f64, min_iou: f64) -> MultiSegmentScore {
    let mut out = MultiSegmentScore { threshold, pairs: pairs.len(), matched: 0, two_or_more: 0 };
    for p in pairs {
        let kept: Vec<SegmentMatch> = preds
            .get(&key(p))
            .map(|v| v.iter().filter(|m| m.score >= threshold).copied().collect())
            .unwrap_or_default();
        out.two_or_more += usize::from(kept.len() >= 2);
        out.matched += usize::from(all_segments_matched(&kept, &p.segments, min_iou));
    }
    out
}

/// Everything the desk experiment measured. Timings are wall-clock seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskReport {
    /// Detector threshold picked on the validation split.
    pub operating_threshold: f64,
    pub spd: MethodScore,
    pub dp: MethodScore,
    pub hough: MethodScore,
    pub tn: MethodScore,
    pub accel_spd: MethodScore,
    pub accel_hough: MethodScore,
    pub accel_dp: MethodScore,
    /// Dense detector on teacher-thinned maps, before fine-tuning.
    pub teacher_untuned: MethodScore,
    pub teacher: MethodScore,
    pub ssan_joint: MethodScore,
    pub ssan_frozen: MethodScore,
    pub ssan_joint_hard: MethodScore,
    pub ssan_frozen_hard: MethodScore,
    pub multi: MultiSegmentScore,
    pub timings: Vec<(String, f64)>,
}

impl DeskReport {
    pub fn seconds(&self, stage: &str) -> f64 {
        self.timings.iter().filter(|(s, _)| s == stage).map(|(_, t)| t).sum()
    }
}

/// Trained models of a desk run.
#[derive(Debug, Clone)]
pub struct DeskModels {
    pub detector: DetectorParams,
    pub teacher_detector: DetectorParams,
    pub scorer: ScorerParams,
    pub ssan_joint: SsanParams,
    pub ssan_frozen: SsanParams,
}

struct Clock {
    last: Instant,
    timings: Vec<(String, f64)>,
}

impl Clock {
    fn lap(&mut self, stage: &str, log: &mut dyn FnMut(&str)) {
        let t = self.last.elapsed().as_secs_f64();
        self.last = Instant::now();
        log(&format!("{stage}: {t:.1}s"));
        self.timings.push((stage.to_string(), t));
    }
}

/// Trains the dense detector, compares it with the baselines, runs the
/// keyframe-compression study and the two-segment check. `log` receives
/// one line per finished stage or epoch.
pub fn run_desk(cfg: &DeskConfig, log: &mut dyn FnMut(&str)) -> Result<(DeskReport, DeskModels)> {
    cfg.synth.validate()?;
    cfg.detector.validate()?;
    let th = cfg.threads;
    let mut clock = Clock { last: Instant::now(), timings: Vec::new() };
    let mix = EditMix::default();
    let split = |base: usize, n: usize, mix: &EditMix| make_pairs(&cfg.synth, mix, base..base + n, th);
    let train = split(TRAIN_BASE, cfg.train_pairs, &mix)?;
    let val = split(VAL_BASE, cfg.val_pairs, &mix)?;
    let test = split(TEST_BASE, cfg.test_pairs, &mix)?;
    let accel = split(ACCEL_BASE, cfg.accel_pairs, &EditMix::only(TemporalEdit::Accelerate { k: 2 }))?;
    let multi = two_segment_pairs(&cfg.synth, MULTI_BASE..MULTI_BASE + cfg.multi_pairs)?;
    let samples = spd_samples(&train, cfg.detector.input_size, th)?;
    clock.lap("data", log);

    let init = DetectorParams::init(&cfg.detector)?;
    let (mut detector, _) = train_spd_with(&samples, &init, &cfg.spd_sgd, |e, s| {
        log(&format!("spd epoch {e}: bce {:.4} giou {:.4}", s.l_bce, s.l_giou))
    })?;
    drop(samples);
    clock.lap("train_spd", log);

    let protocol = Protocol::default();
    let floor = cfg.candidate_threshold;
    let operating = calibrate_threshold(&detector, &val, floor, &protocol, th)?;
    detector.config.score_threshold = operating;
    clock.lap("calibrate", log);

    let score = |name: &str, preds: &SplitPredictions, pairs: &[GroundTruthPair], thr: f64| {
        score_split(name, preds, &ground_truth(pairs), thr, &protocol).0
    };
    let spd = score("spd", &predict_spd(&detector, &test, &Thinning::Dense, floor, th)?, &test, operating);
    let dp = score("dp", &predict_baseline(Method::Dp, &cfg.baseline, &test, th)?, &test, 0.0);
    let hough = score("hough", &predict_baseline(Method::Hough, &cfg.baseline, &test, th)?, &test, 0.0);
    let tn = score("tn", &predict_baseline(Method::Tn, &cfg.baseline, &test, th)?, &test, 0.0);
    let accel_spd = score("spd", &predict_spd(&detector, &accel, &Thinning::Dense, floor, th)?, &accel, operating);
    let accel_hough = score("hough", &predict_baseline(Method::Hough, &cfg.baseline, &accel, th)?, &accel, 0.0);
    let accel_dp = score("dp", &predict_baseline(Method::Dp, &cfg.baseline, &accel, th)?, &accel, 0.0);
    let multi_preds = predict_spd(&detector, &multi, &Thinning::Dense, floor, th)?;
    let multi = multi_segment_score(&multi_preds.preds, &multi, operating, cfg.min_iou);
    clock.lap("evaluate_spd", log);

    let thin = Thinning::Teacher { teacher: &cfg.teacher, interval: cfg.interval };
    let teacher_untuned = score("teacher-untuned", &predict_spd(&detector, &test, &thin, floor, th)?, &test, operating);
    let tsamples = teacher_spd_samples(&train, &cfg.teacher, cfg.interval, cfg.detector.input_size, th)?;
    let tune = SgdConfig { epochs: cfg.teacher_epochs, ..cfg.spd_sgd };
    let (teacher_detector, _) = train_spd_with(&tsamples, &detector, &tune, |e, s| log(&format!("teacher epoch {e}: spd {:.4}", s.l_spd)))?;
    drop(tsamples);
    let teacher = score("teacher", &predict_spd(&teacher_detector, &test, &thin, floor, th)?, &test, operating);
    clock.lap("teacher", log);

    let examples: Vec<ScorerExample> = train
        .iter()
        .flat_map(|p| [ScorerExample::from_teacher(&p.query, &cfg.teacher), ScorerExample::from_teacher(&p.reference, &cfg.teacher)])
        .collect();
    let scorer = train_scorer(&examples, ScorerParams::default(), &cfg.scorer_sgd)?;
    drop(examples);
    clock.lap("train_scorer", log);

    let ssamples = ssan_samples(&train, &cfg.teacher, th)?;
    let start = SsanParams { scorer, detector: detector.clone() };
    let ssan_run = |name: &str, train_scorer: bool, log: &mut dyn FnMut(&str)| -> Result<(SsanParams, MethodScore, MethodScore)> {
        let sc = SsanConfig { interval: cfg.interval, train_scorer, ..cfg.ssan };
        let (params, _) = train_ssan_with(&ssamples, &start, &cfg.ssan_sgd, &sc, |e, ep| {
            log(&format!("ssan {name} epoch {e}: spd {:.4} ske {:.4} ratio {:.3}", ep.stats.l_spd, ep.stats.l_ske, ep.compression_ratio))
        })?;
        let soft = Thinning::Soft { scorer: &params.scorer, cfg: &sc };
        let s = score(name, &predict_spd(&params.detector, &test, &soft, floor, th)?, &test, operating);
        let h = score(name, &predict_ssan(&params, &sc, &test, floor, th)?, &test, operating);
        Ok((params, s, h))
    };
    let (ssan_joint_params, ssan_joint, ssan_joint_hard) = ssan_run("joint", true, log)?;
    clock.lap("ssan_joint", log);
    let (ssan_frozen_params, ssan_frozen, ssan_frozen_hard) = ssan_run("frozen", false, log)?;
    clock.lap("ssan_frozen", log);

    let report = DeskReport {
        operating_threshold: operating,
        spd,
        dp,
        hough,
        tn,
        accel_spd,
        accel_hough,
        accel_dp,
        teacher_untuned,
        teacher,
        ssan_joint,
        ssan_frozen,
        ssan_joint_hard,
        ssan_frozen_hard,
        multi,
        timings: clock.timings,
    };
    let models = DeskModels {
        detector,
        teacher_detector,
        scorer,
        ssan_joint: ssan_joint_params,
        ssan_frozen: ssan_frozen_params,
    };
    Ok((report, models))
}

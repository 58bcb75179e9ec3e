//! Joint keyframe scoring and pattern detection.
//!
//! Each video's keyframe scores are lifted to effective scores
//! `max(score, grid)`, where `grid` is one on the sparse-uniform positions.
//! The similarity map (negatives clamped to zero) is multiplied by the outer
//! product of the two effective score vectors and handed to the detector.
//! Training minimizes `l_ske(query) + l_ske(reference) + l_spd`, with the
//! detection loss flowing back into the scorer through the mask.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::keyframe::{
    novelty_descriptors, score_descriptors, scorer_backward, sparse_uniform_interpolate, ske_loss_grad,
    teacher_select, uniform_grid, Descriptor, ScorerParams, TeacherParams,
};
use crate::optim::{Sgd, SgdConfig};
use crate::simmap::{dense_map, prepare_detector_input, SimilarityMap};
use crate::spd::boxes::BBox;
use crate::spd::model_io::{read_block, write_block};
use crate::spd::train::boxes_in_tile;
use crate::spd::{backward, detect_values, forward, pair_detections, spd_loss, DetectorParams, PairDetections, TrainingStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsanConfig {
    /// Sparse-uniform interval; `None` disables the uniform mask.
    pub interval: Option<usize>,
    /// Effective score at which a frame counts as a keyframe.
    pub keyframe_threshold: f64,
    pub ske_weight: f64,
    /// Multiplier on the scorer gradient.
    pub scorer_lr_scale: f64,
    pub train_scorer: bool,
    pub train_detector: bool,
}

impl Default for SsanConfig {
    fn default() -> Self {
        Self {
            interval: Some(8),
            keyframe_threshold: 0.5,
            ske_weight: 1.0,
            scorer_lr_scale: 1.0,
            train_scorer: true,
            train_detector: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsanParams {
    pub scorer: ScorerParams,
    pub detector: DetectorParams,
}

impl SsanParams {
    pub fn is_finite(&self) -> bool {
        self.scorer.is_finite() && self.detector.is_finite()
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.detector.values.clone();
        v.extend(self.scorer.to_vec());
        v
    }

    fn set_flat(&mut self, v: &[f64]) {
        let n = self.detector.values.len();
        self.detector.values.copy_from_slice(&v[..n]);
        self.scorer = ScorerParams::from_slice(&v[n..]);
    }
}

/// `max(score, grid)` and whether each score passes through unchanged.
pub fn effective_scores(scores: &[f64], interval: Option<usize>) -> (Vec<f64>, Vec<bool>) {
    let grid = uniform_grid(scores.len(), interval);
    scores
        .iter()
        .zip(&grid)
        .map(|(&s, &g)| if g { (1.0, false) } else { (s, true) })
        .unzip()
}

/// Row-major `p1[i] · p2[j] · base[i, j]`.
pub fn masked_values(base: &[f64], p1: &[f64], p2: &[f64]) -> Vec<f64> {
    let cols = p2.len();
    base.iter()
        .enumerate()
        .map(|(k, &v)| p1[k / cols] * p2[k % cols] * v)
        .collect()
}

/// Frames whose effective score reaches the threshold.
pub fn effective_keyframes(effective: &[f64], threshold: f64) -> Vec<usize> {
    effective
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsanOutput {
    pub row_scores: Vec<f64>,
    pub col_scores: Vec<f64>,
    pub values: Vec<f64>,
    pub detections: PairDetections,
}

fn check_map(q: &FeatureSequence, r: &FeatureSequence, s: &SimilarityMap) -> Result<()> {
    if s.rows() != q.len() || s.cols() != r.len() {
        return Err(Error::LengthMismatch {
            expected: q.len() * r.len(),
            found: s.rows() * s.cols(),
            context: format!("map of `{}` vs `{}`", q.video_id(), r.video_id()),
        });
    }
    Ok(())
}

/// Detections on the map masked by effective keyframe scores.
pub fn ssan_forward(
    params: &SsanParams,
    q: &FeatureSequence,
    r: &FeatureSequence,
    s: &SimilarityMap,
    cfg: &SsanConfig,
) -> Result<SsanOutput> {
    check_map(q, r, s)?;
    let s1 = score_descriptors(q.video_id(), &novelty_descriptors(q), &params.scorer).scores;
    let s2 = score_descriptors(r.video_id(), &novelty_descriptors(r), &params.scorer).scores;
    forward_with_scores(params, s, &s1, &s2, cfg)
}

/// Like [`ssan_forward`] with raw keyframe scores supplied directly.
pub fn forward_with_scores(
    params: &SsanParams,
    s: &SimilarityMap,
    s1: &[f64],
    s2: &[f64],
    cfg: &SsanConfig,
) -> Result<SsanOutput> {
    if s1.len() != s.rows() || s2.len() != s.cols() {
        return Err(Error::LengthMismatch {
            expected: s.rows() + s.cols(),
            found: s1.len() + s2.len(),
            context: "keyframe scores".into(),
        });
    }
    let (e1, _) = effective_scores(s1, cfg.interval);
    let (e2, _) = effective_scores(s2, cfg.interval);
    let values = masked_values(&s.detector_values(), &e1, &e2);
    let dets = detect_values(&params.detector, &values, s.rows(), s.cols(), params.detector.config.score_threshold)?;
    Ok(SsanOutput {
        row_scores: e1,
        col_scores: e2,
        values,
        detections: pair_detections(s, dets),
    })
}

/// One training pair with everything that stays fixed during training.
#[derive(Debug, Clone, PartialEq)]
pub struct SsanSample {
    pub rows: usize,
    pub cols: usize,
    /// Dense map values clamped to `[0, 1]`.
    pub base: Vec<f64>,
    pub q_desc: Vec<Descriptor>,
    pub r_desc: Vec<Descriptor>,
    pub q_labels: Vec<bool>,
    pub r_labels: Vec<bool>,
    /// Ground-truth boxes in map cells.
    pub boxes: Vec<BBox>,
}

impl SsanSample {
    pub fn new(q: &FeatureSequence, r: &FeatureSequence, boxes: Vec<BBox>, teacher: &TeacherParams) -> Result<Self> {
        let m = dense_map(q, r)?;
        Ok(Self {
            rows: m.rows(),
            cols: m.cols(),
            base: m.detector_values(),
            q_desc: novelty_descriptors(q),
            r_desc: novelty_descriptors(r),
            q_labels: teacher_select(q, teacher),
            r_labels: teacher_select(r, teacher),
            boxes,
        })
    }
}

/// Gradients of `l_ssan`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsanGrad {
    pub detector: Vec<f64>,
    pub scorer: [f64; 4],
}

fn spd_terms(
    det: &DetectorParams,
    values: &[f64],
    rows: usize,
    cols: usize,
    boxes: &[BBox],
    want_input: bool,
) -> Result<(TrainingStats, Vec<f64>, Vec<f64>)> {
    let g = det.config.input_size;
    let tiles = prepare_detector_input(values, rows, cols, g)?;
    let inv = 1.0 / tiles.len() as f64;
    let mut stats = TrainingStats::default();
    let mut gp_sum = vec![0.0; det.len()];
    let mut g_values = vec![0.0; if want_input { values.len() } else { 0 }];
    for t in &tiles {
        let cache = forward(det, &t.data)?;
        let tb = boxes_in_tile(boxes, t.row_offset, t.col_offset, g);
        let (st, mut g_out) = spd_loss(&cache.out, det.config.grid(), &tb, det.config.giou_weight);
        stats.add(&st.scaled(inv));
        g_out.iter_mut().for_each(|x| *x *= inv);
        let (gp, gin) = backward(det, &cache, &g_out, want_input);
        gp_sum.iter_mut().zip(&gp).for_each(|(a, b)| *a += b);
        if let Some(gin) = gin {
            let h = g.min(rows - t.row_offset);
            let w = g.min(cols - t.col_offset);
            for y in 0..h {
                for x in 0..w {
                    g_values[(t.row_offset + y) * cols + t.col_offset + x] += gin[y * g + x];
                }
            }
        }
    }
    Ok((stats, gp_sum, g_values))
}

/// `l_ssan` and its gradients for one sample.
pub fn ssan_loss(params: &SsanParams, sample: &SsanSample, cfg: &SsanConfig) -> Result<(TrainingStats, SsanGrad)> {
    let s1 = score_descriptors("", &sample.q_desc, &params.scorer).scores;
    let s2 = score_descriptors("", &sample.r_desc, &params.scorer).scores;
    let (e1, pass1) = effective_scores(&s1, cfg.interval);
    let (e2, pass2) = effective_scores(&s2, cfg.interval);
    let values = masked_values(&sample.base, &e1, &e2);
    let (mut stats, g_det, g_values) = spd_terms(&params.detector, &values, sample.rows, sample.cols, &sample.boxes, true)?;

    let (l1, k1) = ske_loss_grad(&s1, &sample.q_labels)?;
    let (l2, k2) = ske_loss_grad(&s2, &sample.r_labels)?;
    let cols = sample.cols;
    let mut g1 = vec![0.0; sample.rows];
    let mut g2 = vec![0.0; cols];
    for i in 0..sample.rows {
        for j in 0..cols {
            let g = g_values[i * cols + j] * sample.base[i * cols + j];
            g1[i] += g * e2[j];
            g2[j] += g * e1[i];
        }
    }
    let chain = |g: &mut [f64], pass: &[bool], ske: &[f64]| {
        for ((x, &p), &k) in g.iter_mut().zip(pass).zip(ske) {
            *x = if p { *x } else { 0.0 } + cfg.ske_weight * k;
        }
    };
    chain(&mut g1, &pass1, &k1);
    chain(&mut g2, &pass2, &k2);
    let a = scorer_backward(&sample.q_desc, &s1, &g1);
    let b = scorer_backward(&sample.r_desc, &s2, &g2);
    stats.l_ske = cfg.ske_weight * (l1 + l2);
    stats.l_ssan = stats.l_spd + stats.l_ske;
    Ok((
        stats,
        SsanGrad {
            detector: g_det,
            scorer: [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]],
        },
    ))
}

/// Loss terms only.
pub fn ssan_stats(params: &SsanParams, sample: &SsanSample, cfg: &SsanConfig) -> Result<TrainingStats> {
    let s1 = score_descriptors("", &sample.q_desc, &params.scorer).scores;
    let s2 = score_descriptors("", &sample.r_desc, &params.scorer).scores;
    let (e1, _) = effective_scores(&s1, cfg.interval);
    let (e2, _) = effective_scores(&s2, cfg.interval);
    let values = masked_values(&sample.base, &e1, &e2);
    let (mut stats, _, _) = spd_terms(&params.detector, &values, sample.rows, sample.cols, &sample.boxes, false)?;
    stats.l_ske = cfg.ske_weight * (ske_loss_grad(&s1, &sample.q_labels)?.0 + ske_loss_grad(&s2, &sample.r_labels)?.0);
    stats.l_ssan = stats.l_spd + stats.l_ske;
    Ok(stats)
}

/// Largest relative error between the analytic scorer gradient of `l_ssan`
/// and central differences.
pub fn scorer_grad_check(params: &SsanParams, sample: &SsanSample, cfg: &SsanConfig, h: f64) -> Result<f64> {
    let (_, g) = ssan_loss(params, sample, cfg)?;
    let mut worst = 0.0f64;
    for k in 0..ScorerParams::LEN {
        let mut v = params.scorer.to_vec();
        let mut p = params.clone();
        v[k] += h;
        p.scorer = ScorerParams::from_slice(&v);
        let up = ssan_stats(&p, sample, cfg)?.l_ssan;
        v[k] -= 2.0 * h;
        p.scorer = ScorerParams::from_slice(&v);
        let down = ssan_stats(&p, sample, cfg)?.l_ssan;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(crate::spd::train::relative_error(g.scorer[k], numeric, 1e-6));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsanEpoch {
    pub stats: TrainingStats,
    /// Share of frames whose effective score reaches the threshold.
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SsanReport {
    pub steps: usize,
    pub epochs: Vec<SsanEpoch>,
}

/// Compression ratio of a scorer over the samples' videos.
pub fn sample_compression(scorer: &ScorerParams, samples: &[SsanSample], cfg: &SsanConfig) -> f64 {
    let (mut kept, mut total) = (0usize, 0usize);
    for s in samples {
        for desc in [&s.q_desc, &s.r_desc] {
            let scores = score_descriptors("", desc, scorer).scores;
            let (e, _) = effective_scores(&scores, cfg.interval);
            kept += effective_keyframes(&e, cfg.keyframe_threshold).len();
            total += e.len();
        }
    }
    crate::keyframe::compression_ratio(kept, total)
}

/// Joint fine-tuning from pretrained components. Either part can be frozen
/// through `cfg`.
pub fn train_ssan(
    samples: &[SsanSample],
    init: &SsanParams,
    sgd: &SgdConfig,
    cfg: &SsanConfig,
) -> Result<(SsanParams, SsanReport)> {
    train_ssan_with(samples, init, sgd, cfg, |_, _| {})
}

pub fn train_ssan_with(
    samples: &[SsanSample],
    init: &SsanParams,
    sgd: &SgdConfig,
    cfg: &SsanConfig,
    mut on_epoch: impl FnMut(usize, &SsanEpoch),
) -> Result<(SsanParams, SsanReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut params = init.clone();
    let n_det = params.detector.len();
    let mut decay = params.detector.decay_mask();
    if !cfg.train_detector {
        decay.iter_mut().for_each(|d| *d = false);
    }
    decay.extend([cfg.train_scorer, cfg.train_scorer, cfg.train_scorer, false]);
    let mut flat = params.flat();
    let mut opt = Sgd::new(*sgd, flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(sgd.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = sgd.batch_size.max(1);
    let mut report = SsanReport::default();
    for epoch in 0..sgd.epochs {
        order.shuffle(&mut rng);
        let mut sum = TrainingStats::default();
        for chunk in order.chunks(batch) {
            let mut grad = vec![0.0; flat.len()];
            for &i in chunk {
                let (stats, g) = ssan_loss(&params, &samples[i], cfg)?;
                if !stats.l_ssan.is_finite() {
                    return Err(Error::Divergence {
                        step: opt.steps(),
                        detail: format!("non-finite joint loss on sample {i}"),
                    });
                }
                sum.add(&stats);
                if cfg.train_detector {
                    grad[..n_det].iter_mut().zip(&g.detector).for_each(|(a, b)| *a += b);
                }
                if cfg.train_scorer {
                    for k in 0..4 {
                        grad[n_det + k] += cfg.scorer_lr_scale * g.scorer[k];
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            opt.step(&mut flat, &grad, &decay);
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: opt.steps(),
                    detail: "parameters became non-finite".into(),
                });
            }
            params.set_flat(&flat);
        }
        let e = SsanEpoch {
            stats: sum.scaled(1.0 / samples.len() as f64),
            compression_ratio: sample_compression(&params.scorer, samples, cfg),
        };
        on_epoch(epoch, &e);
        report.epochs.push(e);
    }
    report.steps = opt.steps();
    Ok((params, report))
}

/// Binary keyframe mask for inference at a fixed compression: frames whose
/// effective score reaches the threshold keep weight one, others zero.
pub fn hard_mask(scores: &[f64], cfg: &SsanConfig) -> Vec<f64> {
    let (e, _) = effective_scores(scores, cfg.interval);
    e.iter().map(|&s| if s >= cfg.keyframe_threshold { 1.0 } else { 0.0 }).collect()
}

/// Teacher keyframes with sparse-uniform filling, as a binary mask.
pub fn teacher_mask(seq: &FeatureSequence, teacher: &TeacherParams, interval: Option<usize>) -> Vec<f64> {
    let mut labels = teacher_select(seq, teacher);
    if let Some(step) = interval {
        labels = sparse_uniform_interpolate(&labels, step);
    }
    labels.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
}

pub const SGSM_MAGIC: &[u8; 4] = b"SGSM";
pub const SGSM_VERSION: u32 = 1;

pub fn write_ssan<W: Write>(w: W, params: &SsanParams) -> Result<W> {
    let mut w = BinWriter::new(w);
    w.bytes(SGSM_MAGIC)?;
    w.u32(SGSM_VERSION)?;
    for v in params.scorer.to_vec() {
        w.f64(v)?;
    }
    write_block(&mut w, &params.detector)?;
    w.finish()
}

pub fn read_ssan<R: Read>(r: R) -> Result<SsanParams> {
    let mut r = BinReader::new(r, "SGSM");
    r.magic(SGSM_MAGIC)?;
    r.version(SGSM_VERSION)?;
    let mut v = [0.0; 4];
    for x in &mut v {
        *x = r.f64("scorer")?;
    }
    let scorer = ScorerParams::from_slice(&v);
    if !scorer.is_finite() {
        return Err(r.err("non-finite scorer parameters"));
    }
    let detector = read_block(&mut r)?;
    r.end()?;
    Ok(SsanParams { scorer, detector })
}

pub fn save_ssan(params: &SsanParams, path: impl AsRef<Path>) -> Result<()> {
    write_ssan(BufWriter::new(File::create(path)?), params)?;
    Ok(())
}

pub fn load_ssan(path: impl AsRef<Path>) -> Result<SsanParams> {
    read_ssan(BufReader::new(File::open(path)?))
}

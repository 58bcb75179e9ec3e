//! Keyframe extraction: teacher labeling, a differentiable per-frame scorer,
//! its BCE objective, score quantization, and sparse-uniform interpolation.
//!
//! The scorer is a logistic model over a three-component novelty descriptor
//! computed from the normalized embeddings:
//!
//! ```text
//! phi(i) = (1 - cos(f_i, f_{i-1}),
//!           1 - max_{k in [i-w, i-1]} cos(f_i, f_k),
//!           mean_{k in [i-w, i-1]} cos(f_i, f_k))        phi(0) = (1, 1, 0)
//! P(i)   = sigmoid(weights . phi(i) + bias)
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{dot, FeatureSequence};
use crate::optim::{Sgd, SgdConfig};

/// Look-back window of the novelty descriptor.
pub const NOVELTY_WINDOW: usize = 8;

/// Probability clamp of the BCE objective.
pub const BCE_EPS: f64 = 1e-7;

pub type Descriptor = [f64; 3];

/// Similarity-threshold and time-limit rule of the teacher labeler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherParams {
    pub sim_threshold: f32,
    pub min_gap: usize,
    /// Forced refresh distance; `usize::MAX` disables it.
    pub max_gap: usize,
}

impl Default for TeacherParams {
    fn default() -> Self {
        Self {
            sim_threshold: 0.85,
            min_gap: 4,
            max_gap: 64,
        }
    }
}

impl TeacherParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sim_threshold) {
            return Err(Error::invalid(format!(
                "sim_threshold {} outside [0, 1]",
                self.sim_threshold
            )));
        }
        if self.min_gap == 0 || self.min_gap > self.max_gap {
            return Err(Error::invalid(format!(
                "need 1 <= min_gap <= max_gap, got {} / {}",
                self.min_gap, self.max_gap
            )));
        }
        Ok(())
    }
}

/// Selects teacher keyframes.
///
/// The first usable frame is always a keyframe. Afterwards frame `i` is
/// selected when it is dissimilar enough from the last keyframe and at
/// least `min_gap` frames away, or when `max_gap` frames have passed.
/// Frames flagged low quality are never selected and never serve as the
/// reference keyframe.
pub fn teacher_select(seq: &FeatureSequence, p: &TeacherParams) -> Vec<bool> {
    let mut labels = vec![false; seq.len()];
    let mut last: Option<usize> = None;
    for i in 0..seq.len() {
        if seq.is_low_quality(i) {
            continue;
        }
        let select = match last {
            None => true,
            Some(k) => {
                let gap = i - k;
                let sim = dot(seq.frame(i), seq.frame(k));
                (sim < p.sim_threshold && gap >= p.min_gap) || gap >= p.max_gap
            }
        };
        if select {
            labels[i] = true;
            last = Some(i);
        }
    }
    labels
}

/// Guarantees at least one positive in every window
/// `[k * interval, (k + 1) * interval)` by setting the first frame of empty
/// windows. An `interval` of zero is treated as one.
pub fn sparse_uniform_interpolate(labels: &[bool], interval: usize) -> Vec<bool> {
    let interval = interval.max(1);
    let mut out = labels.to_vec();
    for start in (0..labels.len()).step_by(interval) {
        let end = (start + interval).min(labels.len());
        if !out[start..end].iter().any(|&b| b) {
            out[start] = true;
        }
    }
    out
}

/// Binary mask that is one on the sparse-uniform grid `0, interval, 2 * interval, ...`.
/// `None` disables the grid.
pub fn uniform_grid(len: usize, interval: Option<usize>) -> Vec<bool> {
    let mut out = vec![false; len];
    if let Some(step) = interval {
        for i in (0..len).step_by(step.max(1)) {
            out[i] = true;
        }
    }
    out
}

/// Per-frame keyframe confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeScores {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub labels: Option<Vec<bool>>,
}

impl KeyframeScores {
    pub fn from_logits(video_id: impl Into<String>, logits: &[f64]) -> Self {
        Self {
            video_id: video_id.into(),
            scores: logits.iter().map(|&z| sigmoid(z)).collect(),
            labels: None,
        }
    }

    pub fn constant(video_id: impl Into<String>, len: usize, value: f64) -> Self {
        Self {
            video_id: video_id.into(),
            scores: vec![value; len],
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Self {
        self.labels = Some(labels);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub weights: [f64; 3],
    pub bias: f64,
}

impl Default for ScorerParams {
    fn default() -> Self {
        Self {
            weights: [0.0; 3],
            bias: 0.0,
        }
    }
}

impl ScorerParams {
    pub const LEN: usize = 4;

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.weights[0], self.weights[1], self.weights[2], self.bias]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            weights: [v[0], v[1], v[2]],
            bias: v[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite()) && self.bias.is_finite()
    }

    pub fn logit(&self, phi: &Descriptor) -> f64 {
        self.weights[0] * phi[0] + self.weights[1] * phi[1] + self.weights[2] * phi[2] + self.bias
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Novelty descriptor of every frame.
pub fn novelty_descriptors(seq: &FeatureSequence) -> Vec<Descriptor> {
    let mut out = Vec::with_capacity(seq.len());
    for i in 0..seq.len() {
        if i == 0 {
            out.push([1.0, 1.0, 0.0]);
            continue;
        }
        let cur = seq.frame(i);
        let prev = dot(cur, seq.frame(i - 1)) as f64;
        let lo = i.saturating_sub(NOVELTY_WINDOW);
        let mut max_sim = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for k in lo..i {
            let s = dot(cur, seq.frame(k)) as f64;
            max_sim = max_sim.max(s);
            sum += s;
        }
        out.push([1.0 - prev, 1.0 - max_sim, sum / (i - lo) as f64]);
    }
    out
}

pub fn score_descriptors(
    video_id: impl Into<String>,
    phis: &[Descriptor],
    theta: &ScorerParams,
) -> KeyframeScores {
    let logits: Vec<f64> = phis.iter().map(|phi| theta.logit(phi)).collect();
    KeyframeScores::from_logits(video_id, &logits)
}

pub fn score_frames(seq: &FeatureSequence, theta: &ScorerParams) -> KeyframeScores {
    score_descriptors(seq.video_id(), &novelty_descriptors(seq), theta)
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
pub fn ske_loss(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(ske_loss_grad(scores, labels)?.0)
}

/// Loss and its gradient with respect to each score. Clamped scores get a
/// zero gradient.
pub fn ske_loss_grad(scores: &[f64], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            found: labels.len(),
            context: "ske_loss labels".into(),
        });
    }
    if scores.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&p, &y) in scores.iter().zip(labels) {
        let clamped = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let inside = clamped == p;
        if y {
            loss -= clamped.ln();
            grad.push(if inside { -1.0 / (clamped * n) } else { 0.0 });
        } else {
            loss -= (1.0 - clamped).ln();
            grad.push(if inside { 1.0 / ((1.0 - clamped) * n) } else { 0.0 });
        }
    }
    Ok((loss / n, grad))
}

/// Chains a gradient with respect to scores back to the scorer parameters
/// (`[w0, w1, w2, bias]`).
pub fn scorer_backward(phis: &[Descriptor], scores: &[f64], grad_scores: &[f64]) -> [f64; 4] {
    let mut g = [0.0; 4];
    for ((phi, &p), &gp) in phis.iter().zip(scores).zip(grad_scores) {
        let gz = gp * p * (1.0 - p);
        g[0] += gz * phi[0];
        g[1] += gz * phi[1];
        g[2] += gz * phi[2];
        g[3] += gz;
    }
    g
}

/// One video's training material for the scorer.
#[derive(Debug, Clone)]
pub struct ScorerExample {
    pub descriptors: Vec<Descriptor>,
    pub labels: Vec<bool>,
}

impl ScorerExample {
    pub fn from_teacher(seq: &FeatureSequence, teacher: &TeacherParams) -> Self {
        Self {
            descriptors: novelty_descriptors(seq),
            labels: teacher_select(seq, teacher),
        }
    }
}

/// Fits the scorer to teacher labels with full-batch Nesterov SGD; one
/// optimizer step per epoch over the frame-weighted mean loss.
pub fn train_scorer(
    examples: &[ScorerExample],
    init: ScorerParams,
    cfg: &SgdConfig,
) -> Result<ScorerParams> {
    let total: usize = examples.iter().map(|e| e.labels.len()).sum();
    if total == 0 {
        return Err(Error::invalid("scorer training set is empty"));
    }
    let mut params = init.to_vec();
    let mut opt = Sgd::new(*cfg, ScorerParams::LEN);
    let decay = [true, true, true, false];
    for step in 0..cfg.epochs {
        let theta = ScorerParams::from_slice(&params);
        let mut grad = [0.0; 4];
        let mut loss = 0.0;
        for ex in examples {
            let scores = score_descriptors("", &ex.descriptors, &theta).scores;
            let (l, gs) = ske_loss_grad(&scores, &ex.labels)?;
            let w = ex.labels.len() as f64 / total as f64;
            loss += w * l;
            let g = scorer_backward(&ex.descriptors, &scores, &gs);
            for k in 0..4 {
                grad[k] += w * g[k];
            }
        }
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("scorer loss {loss}"),
            });
        }
        opt.step(&mut params, &grad, &decay);
    }
    Ok(ScorerParams::from_slice(&params))
}

/// Indices whose score reaches `threshold`; frame 0 when none does.
pub fn quantize_scores(scores: &[f64], threshold: f64) -> Vec<usize> {
    let mut set: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(i, _)| i)
        .collect();
    if set.is_empty() && !scores.is_empty() {
        set.push(0);
    }
    set
}

/// Quantized keyframes followed by sparse-uniform interpolation.
pub fn select_keyframes(scores: &[f64], threshold: f64, interval: Option<usize>) -> Vec<usize> {
    let mut labels = vec![false; scores.len()];
    for i in quantize_scores(scores, threshold) {
        labels[i] = true;
    }
    if let Some(step) = interval {
        labels = sparse_uniform_interpolate(&labels, step);
    }
    labels_to_indices(&labels)
}

pub fn labels_to_indices(labels: &[bool]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect()
}

pub fn compression_ratio(selected: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        selected as f64 / total as f64
    }
}

/// Geometry of the tiled multi-frame canvas: `grid_m × grid_m` blocks of
/// `block_size` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilingSpec {
    pub block_size: u32,
    pub grid_m: u32,
}

impl Default for TilingSpec {
    fn default() -> Self {
        Self {
            block_size: 32,
            grid_m: 24,
        }
    }
}

/// Pixel box `[x1, y1, x2, y2]` of frame `i` on the tiled canvas, laid out
/// row-major.
pub fn tile_bbox(i: usize, t: &TilingSpec) -> Result<[u32; 4]> {
    let m = t.grid_m as usize;
    if t.block_size == 0 || m == 0 {
        return Err(Error::invalid("tiling block size and grid must be positive"));
    }
    if i >= m * m {
        return Err(Error::OutOfRange {
            index: i,
            len: m * m,
            context: "tile_bbox frame",
        });
    }
    let (row, col) = ((i / m) as u32, (i % m) as u32);
    let s = t.block_size;
    Ok([col * s, row * s, (col + 1) * s, (row + 1) * s])
}

/// JSON-lines record of labels and scores of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub video_id: String,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

impl KeyframeRecord {
    pub fn keyframes(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[KeyframeRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<KeyframeRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq_from(rows: Vec<Vec<f32>>) -> FeatureSequence {
        FeatureSequence::from_rows("v", 8.0, &rows).unwrap()
    }

    fn random_walk(n: usize, dim: usize, step: f32, seed: u64) -> FeatureSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cur: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rows = Vec::new();
        for _ in 0..n {
            for v in cur.iter_mut() {
                *v += rng.random_range(-step..step);
            }
            rows.push(cur.clone());
        }
        seq_from(rows)
    }

    #[test]
    fn identical_frames_select_only_the_first() {
        let s = seq_from(vec![vec![1.0, 2.0, 3.0]; 40]);
        let p = TeacherParams {
            max_gap: usize::MAX,
            ..TeacherParams::default()
        };
        let labels = teacher_select(&s, &p);
        assert!(labels[0]);
        assert_eq!(labels.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn alternating_orthogonal_frames_all_selected() {
        let rows = (0..12)
            .map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let p = TeacherParams {
            sim_threshold: 0.5,
            min_gap: 1,
            max_gap: usize::MAX,
        };
        assert!(teacher_select(&seq_from(rows), &p).iter().all(|&b| b));
    }

    /// Independent single-pass reference written against the rule text.
    fn reference_teacher(seq: &FeatureSequence, p: &TeacherParams) -> Vec<bool> {
        let n = seq.len();
        let mut out = Vec::with_capacity(n);
        let mut anchor = 0usize;
        for i in 0..n {
            if i == 0 {
                out.push(true);
                continue;
            }
            let a = seq.frame(anchor);
            let b = seq.frame(i);
            let mut s = 0.0f32;
            for k in 0..a.len() {
                s += a[k] * b[k];
            }
            let dist = i - anchor;
            let keep = dist >= p.max_gap || (dist >= p.min_gap && s < p.sim_threshold);
            out.push(keep);
            if keep {
                anchor = i;
            }
        }
        out
    }

    #[test]
    fn teacher_matches_reference_on_random_walks() {
        for seed in 0..20 {
            let s = random_walk(200, 16, 0.25, seed);
            let p = TeacherParams::default();
            let labels = teacher_select(&s, &p);
            assert_eq!(labels, reference_teacher(&s, &p), "seed {seed}");
            let idx = labels_to_indices(&labels);
            for w in idx.windows(2) {
                let gap = w[1] - w[0];
                assert!(gap >= p.min_gap && gap <= p.max_gap);
            }
        }
    }

    #[test]
    fn low_quality_frames_are_never_selected() {
        let rows = (0..12)
            .map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let s = seq_from(rows).with_low_quality(vec![0, 3]);
        let p = TeacherParams {
            sim_threshold: 0.5,
            min_gap: 1,
            max_gap: usize::MAX,
        };
        let labels = teacher_select(&s, &p);
        assert!(!labels[0] && !labels[3]);
        assert!(labels[1]);
    }

    #[test]
    fn interpolation_fills_empty_windows() {
        let out = sparse_uniform_interpolate(&[false; 20], 8);
        assert_eq!(labels_to_indices(&out), vec![0, 8, 16]);
        let dense = vec![true, false, false, true, false, true];
        assert_eq!(sparse_uniform_interpolate(&dense, 3), dense);
    }

    #[test]
    fn interpolation_window_property_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..60);
            let interval = rng.random_range(1..12);
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
            let out = sparse_uniform_interpolate(&labels, interval);
            for (a, b) in labels.iter().zip(&out) {
                assert!(!a || *b, "positive removed");
            }
            let mut start = 0;
            while start < n {
                let end = (start + interval).min(n);
                assert!(out[start..end].iter().any(|&b| b));
                start = end;
            }
            assert_eq!(sparse_uniform_interpolate(&out, interval), out);
        }
    }

    #[test]
    fn zero_params_score_one_half() {
        let s = random_walk(10, 4, 0.1, 1);
        let k = score_frames(&s, &ScorerParams::default());
        assert!(k.scores.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn constant_sequence_scores_by_hand() {
        let s = seq_from(vec![vec![0.5, 0.5, 0.5, 0.5]; 12]);
        let theta = ScorerParams {
            weights: [2.0, -1.5, 0.75],
            bias: -0.3,
        };
        let k = score_frames(&s, &theta);
        // phi(0) = (1, 1, 0); phi(i > 0) = (0, 0, 1)
        let first = 1.0 / (1.0 + (-(2.0 - 1.5 - 0.3f64)).exp());
        let rest = 1.0 / (1.0 + (-(0.75 - 0.3f64)).exp());
        assert!((k.scores[0] - first).abs() < 1e-12);
        for &p in &k.scores[1..] {
            assert!((p - rest).abs() < 1e-6);
        }
    }

    #[test]
    fn saturating_bias_drives_scores_to_one() {
        let s = random_walk(10, 4, 0.1, 2);
        let mut prev = 0.0;
        for b in [0.0, 2.0, 5.0, 10.0, 30.0] {
            let theta = ScorerParams {
                weights: [0.0; 3],
                bias: b,
            };
            let p = score_frames(&s, &theta).scores[3];
            assert!(p >= prev);
            prev = p;
        }
        assert!(prev > 1.0 - 1e-9);
    }

    #[test]
    fn ske_loss_analytic_cases() {
        let labels = [true, false, true, false];
        assert!(ske_loss(&[1.0, 0.0, 1.0, 0.0], &labels).unwrap() <= -(1.0f64 - BCE_EPS).ln() + 1e-15);
        let half = ske_loss(&[0.5; 4], &labels).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(ske_loss(&[0.5; 3], &labels).is_err());
    }

    #[test]
    fn ske_loss_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..30).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<bool> = (0..30).map(|_| rng.random_bool(0.3)).collect();
        let mut expected = 0.0;
        for i in 0..30 {
            let t = if y[i] { 1.0 } else { 0.0 };
            expected += -(t * p[i].ln() + (1.0 - t) * (1.0 - p[i]).ln());
        }
        expected /= 30.0;
        assert!((ske_loss(&p, &y).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn scorer_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let s = random_walk(20, 8, 0.4, 100 + trial);
            let phis = novelty_descriptors(&s);
            let labels: Vec<bool> = (0..20).map(|_| rng.random_bool(0.3)).collect();
            let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss_at = |v: &[f64]| {
                let k = score_descriptors("", &phis, &ScorerParams::from_slice(v));
                ske_loss(&k.scores, &labels).unwrap()
            };
            let k = score_descriptors("", &phis, &ScorerParams::from_slice(&theta));
            let (_, gs) = ske_loss_grad(&k.scores, &labels).unwrap();
            let analytic = scorer_backward(&phis, &k.scores, &gs);
            let h = 1e-5;
            for j in 0..4 {
                let mut up = theta.clone();
                up[j] += h;
                let mut dn = theta.clone();
                dn[j] -= h;
                let numeric = (loss_at(&up) - loss_at(&dn)) / (2.0 * h);
                let denom = analytic[j].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (analytic[j] - numeric).abs() / denom < 1e-4,
                    "param {j}: {} vs {numeric}",
                    analytic[j]
                );
            }
        }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_scores(&[0.4, 0.6], 0.5), vec![1]);
        assert_eq!(quantize_scores(&[0.1, 0.2, 0.3], 0.5), vec![0]);
        assert_eq!(select_keyframes(&[0.1; 20], 0.5, Some(8)), vec![0, 8, 16]);
    }

    #[test]
    fn tile_bbox_row_col_layout() {
        let t = TilingSpec::default();
        assert_eq!(tile_bbox(0, &t).unwrap(), [0, 0, 32, 32]);
        assert_eq!(tile_bbox(24, &t).unwrap(), [0, 32, 32, 64]);
        assert_eq!(tile_bbox(25, &t).unwrap(), [32, 32, 64, 64]);
        assert!(tile_bbox(576, &t).is_err());
    }

    #[test]
    fn scorer_learns_teacher_labels() {
        let examples: Vec<ScorerExample> = (0..4)
            .map(|s| ScorerExample::from_teacher(&random_walk(120, 8, 0.3, 40 + s), &TeacherParams::default()))
            .collect();
        let cfg = SgdConfig {
            lr: 0.5,
            epochs: 300,
            ..SgdConfig::default()
        };
        let before: f64 = examples
            .iter()
            .map(|e| ske_loss(&score_descriptors("", &e.descriptors, &ScorerParams::default()).scores, &e.labels).unwrap())
            .sum();
        let theta = train_scorer(&examples, ScorerParams::default(), &cfg).unwrap();
        let after: f64 = examples
            .iter()
            .map(|e| ske_loss(&score_descriptors("", &e.descriptors, &theta).scores, &e.labels).unwrap())
            .sum();
        assert!(after < before);
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![KeyframeRecord {
            video_id: "a".into(),
            labels: vec![1, 0, 1],
            scores: vec![0.9, 0.1, 0.7],
        }];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        assert_eq!(read_jsonl(&buf[..]).unwrap(), recs);
        assert_eq!(recs[0].keyframes(), vec![0, 2]);
    }
}

//! Synthetic feature videos and copied-segment pairs with exact ground truth.
//!
//! A video is a sequence of shots. Each shot has a random unit anchor, and
//! frames follow `normalize(α·prev + (1-α)·anchor + σ·noise)`, so similarity
//! stays high inside a shot and decays with frame distance. Anchors share a
//! common background direction, which gives unrelated videos a small
//! positive baseline similarity as real embeddings have.
//!
//! Copies are made by cutting a segment from a reference video, applying a
//! temporal edit (with its exact frame mapping) and a feature-space
//! perturbation, and overwriting part of an unrelated host video.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::align::SegmentMatch;
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FeatureStore};
use crate::hashing::{file_sha256, sha256_bytes};
use crate::parallel::par_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub dim: usize,
    /// Video length range in frames, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    /// Frame-to-frame smoothness of the random walk.
    pub alpha: f64,
    pub mean_shot_len: usize,
    /// Fixed shot count per video; `None` draws shots of about
    /// `mean_shot_len` frames.
    pub shots: Option<usize>,
    pub noise: f64,
    /// Weight of the shared background direction in every anchor.
    pub background: f64,
    /// Size of a dataset-wide pool of stock scenes.
    pub scene_pool: usize,
    /// Probability that a shot reuses a pooled scene instead of a fresh one.
    pub scene_share: f64,
    pub low_quality_frac: f64,
    pub basis_fps: f32,
    /// Copied segment length range in query frames, inclusive.
    pub min_segment: usize,
    pub max_segment: usize,
    /// Range of extra Gaussian noise applied to copied frames.
    pub spatial_noise: (f64, f64),
    /// Maximum Givens rotation angle (radians) applied to copied frames.
    pub max_rotation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            min_len: 64,
            max_len: 128,
            alpha: 0.9,
            mean_shot_len: 24,
            shots: None,
            noise: 0.3,
            background: 0.7,
            scene_pool: 24,
            scene_share: 0.3,
            low_quality_frac: 0.02,
            basis_fps: 8.0,
            min_segment: 16,
            max_segment: 56,
            spatial_noise: (0.3, 1.0),
            max_rotation: 0.4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dim >= 2
            && self.min_len >= 1
            && self.min_len <= self.max_len
            && (0.0..1.0).contains(&self.alpha)
            && self.mean_shot_len >= 1
            && self.noise >= 0.0
            && (0.0..1.0).contains(&self.background)
            && (0.0..=1.0).contains(&self.scene_share)
            && (self.scene_pool > 0 || self.scene_share == 0.0)
            && (0.0..1.0).contains(&self.low_quality_frac)
            && self.basis_fps > 0.0
            && self.min_segment >= 2
            && self.min_segment <= self.max_segment
            && self.spatial_noise.0 >= 0.0
            && self.spatial_noise.0 <= self.spatial_noise.1
            && self.max_rotation >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("invalid synthetic data config"))
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let s = scale / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * s
        })
        .collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Shared background direction of a dataset.
pub fn background_direction(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    unit(gaussian(&mut rng, dim, 1.0))
}

/// Random anchor mixed with the background: `b·bg + sqrt(1-b²)·random`.
pub fn random_anchor(rng: &mut ChaCha8Rng, bg: &[f64], b: f64) -> Vec<f64> {
    let r = unit(gaussian(rng, bg.len(), 1.0));
    let w = (1.0 - b * b).sqrt();
    unit(bg.iter().zip(&r).map(|(x, y)| b * x + w * y).collect())
}

/// Frames for explicit shots `(anchor, length)`; the walk restarts at each
/// anchor.
pub fn gen_frames(shots: &[(Vec<f64>, usize)], alpha: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (anchor, len) in shots {
        let mut prev = anchor.clone();
        for _ in 0..*len {
            let n = gaussian(rng, anchor.len(), noise);
            let f: Vec<f64> = (0..anchor.len())
                .map(|k| alpha * prev[k] + (1.0 - alpha) * anchor[k] + n[k])
                .collect();
            prev = unit(f);
            out.push(prev.clone());
        }
    }
    out
}

fn to_sequence(id: &str, fps: f32, frames: &[Vec<f64>]) -> Result<FeatureSequence> {
    let dim = frames.first().map_or(0, Vec::len);
    let data = frames.iter().flatten().map(|&x| x as f32).collect();
    FeatureSequence::new(id, fps, dim, data)
}

fn shot_lengths(cfg: &SynthConfig, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cfg.shots {
        Some(k) => {
            let k = k.clamp(1, len);
            (0..k).map(|i| len * (i + 1) / k - len * i / k).collect()
        }
        None => {
            let mut out = Vec::new();
            let mut left = len;
            let m = cfg.mean_shot_len;
            while left > 0 {
                let l = rng.random_range(m / 2 + 1..=m + m / 2).min(left);
                out.push(l);
                left -= l;
            }
            out
        }
    }
}

/// Dataset-wide directions shared by all videos: the background and a pool
/// of stock scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBank {
    pub background: Vec<f64>,
    pub pool: Vec<Vec<f64>>,
}

impl SceneBank {
    pub fn new(cfg: &SynthConfig) -> Self {
        let background = background_direction(cfg.dim, cfg.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ce7_e5ce_7e5c_e7e5);
        let pool = (0..cfg.scene_pool)
            .map(|_| random_anchor(&mut rng, &background, cfg.background))
            .collect();
        Self { background, pool }
    }

    fn anchor(&self, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if !self.pool.is_empty() && rng.random_bool(cfg.scene_share) {
            self.pool[rng.random_range(0..self.pool.len())].clone()
        } else {
            random_anchor(rng, &self.background, cfg.background)
        }
    }
}

/// One synthetic video drawn from `rng`.
pub fn gen_video(cfg: &SynthConfig, id: &str, bank: &SceneBank, rng: &mut ChaCha8Rng) -> Result<FeatureSequence> {
    cfg.validate()?;
    let len = rng.random_range(cfg.min_len..=cfg.max_len);
    let shots: Vec<(Vec<f64>, usize)> = shot_lengths(cfg, len, rng)
        .into_iter()
        .map(|l| (bank.anchor(cfg, rng), l))
        .collect();
    let mut frames = gen_frames(&shots, cfg.alpha, cfg.noise, rng);
    let mut low = Vec::new();
    for (i, f) in frames.iter_mut().enumerate() {
        if rng.random_bool(cfg.low_quality_frac) {
            let n = gaussian(rng, f.len(), 3.0);
            *f = unit(f.iter().zip(&n).map(|(a, b)| a + b).collect());
            low.push(i);
        }
    }
    Ok(to_sequence(id, cfg.basis_fps, &frames)?.with_low_quality(low))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalEdit {
    /// Plain copy.
    Identity,
    /// Copy of a random sub-range covering at least 60% of the input.
    Clip,
    /// Two separated pieces of the input joined back to back.
    Concat,
    /// Keep every `k`-th frame.
    Accelerate { k: usize },
    /// Repeat every frame `k` times.
    Decelerate { k: usize },
    /// Remove each frame with probability `p`.
    Drop { p: f64 },
    /// Resample so output frame `i` shows source frame `floor(i·r)`.
    FpsChange { r: f64 },
}

impl TemporalEdit {
    pub fn tag(&self) -> String {
        match self {
            TemporalEdit::Identity => "identity".into(),
            TemporalEdit::Clip => "clip".into(),
            TemporalEdit::Concat => "concat".into(),
            TemporalEdit::Accelerate { k } => format!("accelerate({k})"),
            TemporalEdit::Decelerate { k } => format!("decelerate({k})"),
            TemporalEdit::Drop { p } => format!("drop({p:.2})"),
            TemporalEdit::FpsChange { r } => format!("fps_change({r:.2})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TemporalEdit::Accelerate { k } | TemporalEdit::Decelerate { k } => k == 2 || k == 3,
            TemporalEdit::Drop { p } => p > 0.0 && p < 0.5,
            TemporalEdit::FpsChange { r } => r > 0.0 && r.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid edit {self:?}")))
        }
    }

    /// Source frames needed for about `out` output frames.
    pub fn source_len(&self, out: usize) -> usize {
        let f = out as f64;
        let n = match *self {
            TemporalEdit::Identity | TemporalEdit::Concat => f,
            TemporalEdit::Clip => f / 0.8,
            TemporalEdit::Accelerate { k } => f * k as f64,
            TemporalEdit::Decelerate { k } => f / k as f64,
            TemporalEdit::Drop { p } => f / (1.0 - p),
            TemporalEdit::FpsChange { r } => f * r,
        };
        (n.ceil() as usize).max(2)
    }
}

/// Output of a temporal edit: per output frame, the source frame it shows,
/// and the separately annotated pieces as `(output range, source range)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalResult {
    pub mapping: Vec<usize>,
    pub pieces: Vec<(Range<usize>, Range<usize>)>,
}

/// Computes the frame mapping of `edit` over an `n`-frame input.
pub fn temporal_mapping(n: usize, edit: &TemporalEdit, rng: &mut ChaCha8Rng) -> Result<TemporalResult> {
    edit.validate()?;
    if n == 0 {
        return Err(Error::invalid("empty input to temporal edit"));
    }
    let single = |mapping: Vec<usize>, src: Range<usize>| {
        let len = mapping.len();
        TemporalResult {
            mapping,
            pieces: vec![(0..len, src)],
        }
    };
    let out = match *edit {
        TemporalEdit::Identity => single((0..n).collect(), 0..n),
        TemporalEdit::Clip => {
            let len = ((n as f64 * rng.random_range(0.6..=1.0)).round() as usize).clamp(1, n);
            let s = rng.random_range(0..=n - len);
            single((s..s + len).collect(), s..s + len)
        }
        TemporalEdit::Concat => {
            if n < 4 {
                return Err(Error::invalid("concat needs at least 4 frames"));
            }
            // two halves, the later one shown first, separated in the source
            let half = n / 2;
            let a = 0..half.max(2) - 1;
            let b = half + 1..n;
            let mapping: Vec<usize> = b.clone().chain(a.clone()).collect();
            let split = b.len();
            TemporalResult {
                pieces: vec![(0..split, b), (split..mapping.len(), a)],
                mapping,
            }
        }
        TemporalEdit::Accelerate { k } => single((0..n).step_by(k).collect(), 0..n),
        TemporalEdit::Decelerate { k } => single((0..n * k).map(|i| i / k).collect(), 0..n),
        TemporalEdit::Drop { p } => {
            let mapping: Vec<usize> = (0..n).filter(|_| !rng.random_bool(p)).collect();
            if mapping.is_empty() {
                return Err(Error::invalid("drop removed every frame"));
            }
            single(mapping, 0..n)
        }
        TemporalEdit::FpsChange { r } => {
            let mapping: Vec<usize> = (0..)
                .map(|i| (i as f64 * r).floor() as usize)
                .take_while(|&s| s < n)
                .collect();
            single(mapping, 0..n)
        }
    };
    if out.mapping.is_empty() {
        return Err(Error::invalid("temporal edit produced an empty sequence"));
    }
    Ok(out)
}

/// Applies `edit` to a sequence, returning the edited frames and the mapping.
pub fn apply_temporal(
    seq: &FeatureSequence,
    edit: &TemporalEdit,
    rng: &mut ChaCha8Rng,
) -> Result<(FeatureSequence, TemporalResult)> {
    let res = temporal_mapping(seq.len(), edit, rng)?;
    let data: Vec<f32> = res.mapping.iter().flat_map(|&i| seq.frame(i).iter().copied()).collect();
    let out = FeatureSequence::new(seq.video_id(), seq.basis_fps(), seq.dim(), data)?;
    Ok((out, res))
}

/// Feature-space stand-in for pixel edits: Gaussian noise of scale `sigma`
/// per vector, then one fixed set of Givens rotations by `angle` over
/// disjoint coordinate pairs, then renormalization.
pub fn spatial_proxy(frames: &[Vec<f64>], sigma: f64, angle: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = frames.first().map_or(0, Vec::len);
    let mut perm: Vec<usize> = (0..dim).collect();
    if angle != 0.0 {
        for i in (1..dim).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
    }
    let (s, c) = angle.sin_cos();
    frames
        .iter()
        .map(|f| {
            let mut v: Vec<f64> = if sigma > 0.0 {
                let n = gaussian(rng, dim, sigma);
                f.iter().zip(&n).map(|(a, b)| a + b).collect()
            } else {
                f.clone()
            };
            if angle != 0.0 {
                for pair in perm.chunks_exact(2) {
                    let (i, j) = (pair[0], pair[1]);
                    let (a, b) = (v[i], v[j]);
                    v[i] = c * a - s * b;
                    v[j] = s * a + c * b;
                }
            }
            unit(v)
        })
        .collect()
}

pub fn apply_spatial_proxy(
    seq: &FeatureSequence,
    sigma: f64,
    angle: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureSequence> {
    let frames: Vec<Vec<f64>> = seq.frames().map(|f| f.iter().map(|&x| x as f64).collect()).collect();
    let out = spatial_proxy(&frames, sigma, angle, rng);
    to_sequence(seq.video_id(), seq.basis_fps(), &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPair {
    pub query: FeatureSequence,
    pub reference: FeatureSequence,
    /// Copied segments in seconds; `score` is 1.
    pub segments: Vec<SegmentMatch>,
    /// Edit tag per segment.
    pub tags: Vec<String>,
    /// Per segment, `(query frame, reference frame)` correspondences.
    pub correspondences: Vec<Vec<(usize, usize)>>,
}

/// Which edits a dataset draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditMix {
    /// Candidate edits, drawn uniformly.
    pub edits: Vec<TemporalEdit>,
    /// Probability of a second copied segment in a pair.
    pub two_segment_prob: f64,
}

impl Default for EditMix {
    fn default() -> Self {
        Self {
            edits: vec![
                TemporalEdit::Clip,
                TemporalEdit::Concat,
                TemporalEdit::Accelerate { k: 2 },
                TemporalEdit::Decelerate { k: 2 },
                TemporalEdit::Drop { p: 0.3 },
                TemporalEdit::FpsChange { r: 1.5 },
            ],
            two_segment_prob: 0.25,
        }
    }
}

impl EditMix {
    pub fn only(edit: TemporalEdit) -> Self {
        Self {
            edits: vec![edit],
            two_segment_prob: 0.0,
        }
    }
}

fn to_f64_frames(seq: &FeatureSequence, range: Range<usize>) -> Vec<Vec<f64>> {
    range.map(|i| seq.frame(i).iter().map(|&x| x as f64).collect()).collect()
}

/// Places `lens` disjoint blocks inside `0..total` with at least `gap`
/// frames between neighbours, in random order. Returns block starts.
fn place_disjoint(lens: &[usize], total: usize, gap: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let used: usize = lens.iter().sum::<usize>() + gap * lens.len().saturating_sub(1);
    if used > total {
        return None;
    }
    let mut order: Vec<usize> = (0..lens.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    // split the slack into len+1 random shares
    let slack = total - used;
    let mut cuts: Vec<usize> = (0..lens.len()).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut starts = vec![0; lens.len()];
    let mut pos = 0;
    let mut prev_cut = 0;
    for (rank, &k) in order.iter().enumerate() {
        pos += cuts[rank] - prev_cut;
        prev_cut = cuts[rank];
        starts[k] = pos;
        pos += lens[k] + gap;
    }
    Some(starts)
}

/// Builds a query that hosts one copied segment per entry of `edits`, cut
/// from `reference`. The rest of the query comes from `host`.
pub fn make_pair_from(
    cfg: &SynthConfig,
    host: &FeatureSequence,
    reference: &FeatureSequence,
    edits: &[TemporalEdit],
    rng: &mut ChaCha8Rng,
) -> Result<GroundTruthPair> {
    if edits.is_empty() {
        return Err(Error::invalid("at least one copied segment is required"));
    }
    let fps = cfg.basis_fps as f64;
    let k = edits.len();
    // budget output lengths so everything fits the host
    let max_out = (host.len().saturating_sub(4 * (k - 1)) / k).min(cfg.max_segment);
    if max_out < cfg.min_segment.min(host.len()) || max_out < 2 {
        return Err(Error::invalid(format!(
            "host of {} frames cannot hold {k} segments of {} frames",
            host.len(),
            cfg.min_segment
        )));
    }
    let max_src = (reference.len().saturating_sub(4 * (k - 1)) / k).max(1);
    let mut src_lens = Vec::with_capacity(k);
    for e in edits {
        let target = rng.random_range(cfg.min_segment.min(max_out)..=max_out);
        let n = e.source_len(target).min(max_src);
        src_lens.push(n.max(2).min(reference.len()));
    }
    let src_starts = place_disjoint(&src_lens, reference.len(), 4, rng)
        .ok_or_else(|| Error::invalid("reference too short for the requested segments"))?;

    let mut edited = Vec::with_capacity(k);
    for (e, (&s, &n)) in edits.iter().zip(src_starts.iter().zip(&src_lens)) {
        let mut res = temporal_mapping(n, e, rng)?;
        if res.mapping.len() > max_out {
            // trim the tail; keep pieces consistent
            res.mapping.truncate(max_out);
            res.pieces.retain(|(o, _)| o.start < max_out);
            if let Some(last) = res.pieces.last_mut() {
                last.0.end = last.0.end.min(max_out);
                let used = &res.mapping[last.0.clone()];
                let hi = used.iter().max().copied().unwrap_or(0);
                last.1.end = last.1.end.min(hi + 1 + extra_span(e));
            }
        }
        edited.push((s, res, *e));
    }
    let out_lens: Vec<usize> = edited.iter().map(|(_, r, _)| r.mapping.len()).collect();
    let q_starts = place_disjoint(&out_lens, host.len(), 4, rng)
        .ok_or_else(|| Error::invalid("segment longer than host video"))?;

    let mut frames = to_f64_frames(host, 0..host.len());
    let mut low: Vec<usize> = host.low_quality().to_vec();
    let mut segments = Vec::new();
    let mut tags = Vec::new();
    let mut correspondences = Vec::new();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| q_starts[i]);
    for &i in &order {
        let (s, res, e) = &edited[i];
        let h = q_starts[i];
        let src: Vec<Vec<f64>> = res
            .mapping
            .iter()
            .map(|&m| reference.frame(s + m).iter().map(|&x| x as f64).collect())
            .collect();
        let sigma = rng.random_range(cfg.spatial_noise.0..=cfg.spatial_noise.1);
        let angle = rng.random_range(0.0..=cfg.max_rotation);
        let copied = spatial_proxy(&src, sigma, angle, rng);
        for (j, f) in copied.into_iter().enumerate() {
            frames[h + j] = f;
        }
        low.retain(|&f| f < h || f >= h + res.mapping.len());
        for (out_range, src_range) in &res.pieces {
            segments.push(SegmentMatch {
                q_start: (h + out_range.start) as f64 / fps,
                q_end: (h + out_range.end) as f64 / fps,
                r_start: (s + src_range.start) as f64 / fps,
                r_end: (s + src_range.end) as f64 / fps,
                score: 1.0,
            });
            tags.push(e.tag());
            correspondences.push(out_range.clone().map(|j| (h + j, s + res.mapping[j])).collect());
        }
    }
    let query = to_sequence(host.video_id(), cfg.basis_fps, &frames)?.with_low_quality(low);
    Ok(GroundTruthPair {
        query,
        reference: reference.clone(),
        segments,
        tags,
        correspondences,
    })
}

fn extra_span(e: &TemporalEdit) -> usize {
    match *e {
        TemporalEdit::Accelerate { k } => k - 1,
        TemporalEdit::FpsChange { r } if r > 1.0 => r.ceil() as usize - 1,
        _ => 0,
    }
}

/// Seed for item `index` of a run with `master` seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut b = [0u8; 16];
    b[..8].copy_from_slice(&master.to_le_bytes());
    b[8..].copy_from_slice(&index.to_le_bytes());
    let h = sha256_bytes(&b);
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Generates pair `index` of a dataset: fresh reference and host videos and
/// `1..=2` copied segments drawn from `mix`.
pub fn make_pair(cfg: &SynthConfig, mix: &EditMix, index: usize) -> Result<GroundTruthPair> {
    cfg.validate()?;
    if mix.edits.is_empty() {
        return Err(Error::invalid("edit mix is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let bank = SceneBank::new(cfg);
    let reference = gen_video(cfg, &format!("r{index:05}"), &bank, &mut rng)?;
    let host = gen_video(cfg, &format!("q{index:05}"), &bank, &mut rng)?;
    let k = if rng.random_bool(mix.two_segment_prob.clamp(0.0, 1.0)) { 2 } else { 1 };
    let edits: Vec<TemporalEdit> = (0..k).map(|_| mix.edits[rng.random_range(0..mix.edits.len())]).collect();
    make_pair_from(cfg, &host, &reference, &edits, &mut rng)
}

/// Pair generator with a fixed number of segments per pair.
pub fn make_pair_with(cfg: &SynthConfig, edits: &[TemporalEdit], index: usize) -> Result<GroundTruthPair> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let bank = SceneBank::new(cfg);
    let reference = gen_video(cfg, &format!("r{index:05}"), &bank, &mut rng)?;
    let host = gen_video(cfg, &format!("q{index:05}"), &bank, &mut rng)?;
    make_pair_from(cfg, &host, &reference, edits, &mut rng)
}

/// Generates `n` pairs, in parallel when `threads > 1`; output does not
/// depend on the thread count.
pub fn make_pairs(cfg: &SynthConfig, mix: &EditMix, range: Range<usize>, threads: usize) -> Result<Vec<GroundTruthPair>> {
    let idx: Vec<usize> = range.collect();
    par_map(&idx, threads, |&i| make_pair(cfg, mix, i)).into_iter().collect()
}

/// Distractor gallery video `index`, independent of the pair streams.
pub fn make_distractor(cfg: &SynthConfig, index: usize) -> Result<FeatureSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ 0xd157_7ac7, index as u64));
    gen_video(cfg, &format!("d{index:05}"), &SceneBank::new(cfg), &mut rng)
}

/// One line of a VCDB-style annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub query_id: String,
    pub ref_id: String,
    pub segment: SegmentMatch,
}

pub fn annotations_of(pairs: &[GroundTruthPair]) -> Vec<Annotation> {
    pairs
        .iter()
        .flat_map(|p| {
            p.segments.iter().map(|s| Annotation {
                query_id: p.query.video_id().to_string(),
                ref_id: p.reference.video_id().to_string(),
                segment: *s,
            })
        })
        .collect()
}

pub fn write_annotations<W: Write>(mut w: W, anns: &[Annotation]) -> Result<()> {
    for a in anns {
        let s = &a.segment;
        writeln!(
            w,
            "{},{},{:.3},{:.3},{:.3},{:.3}",
            a.query_id, a.ref_id, s.q_start, s.q_end, s.r_start, s.r_end
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_annotations<R: BufRead>(r: R) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::format("annotation", format!("line {}: `{line}`", no + 1));
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        out.push(Annotation {
            query_id: f[0].to_string(),
            ref_id: f[1].to_string(),
            segment: SegmentMatch {
                q_start: num(f[2])?,
                q_end: num(f[3])?,
                r_start: num(f[4])?,
                r_end: num(f[5])?,
                score: 1.0,
            },
        });
    }
    Ok(out)
}

/// Empirical similarity statistics of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    /// Mean cosine between corresponding copied frames.
    pub copy_cosine: f64,
    /// Mean cosine between random frames of unrelated videos.
    pub random_cosine: f64,
}

pub fn dataset_report(pairs: &[GroundTruthPair], seed: u64) -> SynthReport {
    use crate::features::dot;
    let mut copy = (0.0, 0usize);
    for p in pairs {
        for corr in &p.correspondences {
            for &(q, r) in corr {
                copy.0 += dot(p.query.frame(q), p.reference.frame(r)) as f64;
                copy.1 += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand = (0.0, 0usize);
    if pairs.len() >= 2 {
        for _ in 0..pairs.len() * 50 {
            let a = &pairs[rng.random_range(0..pairs.len())].reference;
            let b = &pairs[rng.random_range(0..pairs.len())].reference;
            if a.video_id() == b.video_id() {
                continue;
            }
            let i = rng.random_range(0..a.len());
            let j = rng.random_range(0..b.len());
            rand.0 += dot(a.frame(i), b.frame(j)) as f64;
            rand.1 += 1;
        }
    }
    SynthReport {
        copy_cosine: copy.0 / copy.1.max(1) as f64,
        random_cosine: rand.0 / rand.1.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SynthConfig,
    pub mix: EditMix,
    pub pairs: usize,
    #[serde(default)]
    pub distractors: Vec<String>,
    pub files: Vec<ManifestFile>,
    /// Low-quality frame lists, which the feature format does not carry.
    pub low_quality: std::collections::BTreeMap<String, Vec<usize>>,
    pub tags: Vec<Vec<String>>,
    pub report: SynthReport,
}

pub const QUERIES_FILE: &str = "queries.sgaf";
pub const REFS_FILE: &str = "refs.sgaf";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes a dataset directory: query and reference feature files, the
/// annotation file, and a manifest with file digests.
/// Writes pairs, plus unrelated gallery videos appended to the reference
/// store, as a dataset directory.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    cfg: &SynthConfig,
    mix: &EditMix,
    pairs: &[GroundTruthPair],
    distractors: &[FeatureSequence],
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let queries = FeatureStore::from_sequences(pairs.iter().map(|p| p.query.clone()))?;
    let refs = FeatureStore::from_sequences(pairs.iter().map(|p| p.reference.clone()).chain(distractors.iter().cloned()))?;
    queries.save(dir.join(QUERIES_FILE))?;
    refs.save(dir.join(REFS_FILE))?;
    write_annotations(BufWriter::new(File::create(dir.join(ANNOTATIONS_FILE))?), &annotations_of(pairs))?;
    let mut files = Vec::new();
    for name in [QUERIES_FILE, REFS_FILE, ANNOTATIONS_FILE] {
        files.push(ManifestFile {
            name: name.to_string(),
            sha256: file_sha256(dir.join(name))?,
        });
    }
    let low_quality = pairs
        .iter()
        .flat_map(|p| [&p.query, &p.reference])
        .chain(distractors)
        .filter(|s| !s.low_quality().is_empty())
        .map(|s| (s.video_id().to_string(), s.low_quality().to_vec()))
        .collect();
    let manifest = DatasetManifest {
        config: cfg.clone(),
        mix: mix.clone(),
        pairs: pairs.len(),
        distractors: distractors.iter().map(|d| d.video_id().to_string()).collect(),
        files,
        low_quality,
        tags: pairs.iter().map(|p| p.tags.clone()).collect(),
        report: dataset_report(pairs, cfg.seed),
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

/// A dataset read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub queries: FeatureStore,
    pub refs: FeatureStore,
    pub annotations: Vec<Annotation>,
}

impl LoadedDataset {
    /// Query/reference pairs in annotation order, with their segments.
    pub fn pairs(&self) -> Result<Vec<(String, String, Vec<SegmentMatch>)>> {
        let mut out: Vec<(String, String, Vec<SegmentMatch>)> = Vec::new();
        for a in &self.annotations {
            match out.last_mut() {
                Some((q, r, segs)) if *q == a.query_id && *r == a.ref_id => segs.push(a.segment),
                _ => out.push((a.query_id.clone(), a.ref_id.clone(), vec![a.segment])),
            }
        }
        for (q, r, _) in &out {
            self.queries.require(q)?;
            self.refs.require(r)?;
        }
        Ok(out)
    }

    /// Annotated pairs with their sequences. Frame correspondences are not
    /// stored on disk and come back empty.
    pub fn ground_truth_pairs(&self) -> Result<Vec<GroundTruthPair>> {
        self.pairs()?
            .into_iter()
            .enumerate()
            .map(|(i, (q, r, segments))| {
                Ok(GroundTruthPair {
                    query: self.queries.require(&q)?.clone(),
                    reference: self.refs.require(&r)?.clone(),
                    tags: self.manifest.tags.get(i).cloned().unwrap_or_default(),
                    correspondences: vec![Vec::new(); segments.len()],
                    segments,
                })
            })
            .collect()
    }
}

fn restore_low_quality(store: FeatureStore, lq: &std::collections::BTreeMap<String, Vec<usize>>) -> Result<FeatureStore> {
    FeatureStore::from_sequences(store.iter().map(|s| match lq.get(s.video_id()) {
        Some(f) => s.clone().with_low_quality(f.clone()),
        None => s.clone(),
    }))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    let manifest: DatasetManifest =
        serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    for f in &manifest.files {
        let got = file_sha256(dir.join(&f.name))?;
        if got != f.sha256 {
            return Err(Error::Verification(format!("{} digest mismatch", f.name)));
        }
    }
    let queries = restore_low_quality(crate::features::ingest(dir.join(QUERIES_FILE))?, &manifest.low_quality)?;
    let refs = restore_low_quality(crate::features::ingest(dir.join(REFS_FILE))?, &manifest.low_quality)?;
    let annotations = read_annotations(BufReader::new(File::open(dir.join(ANNOTATIONS_FILE))?))?;
    Ok(LoadedDataset {
        manifest,
        queries,
        refs,
        annotations,
    })
}

//! Detector training: tiled samples, mini-batch SGD, finite-difference
//! gradient checking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boxes::BBox;
use super::loss::{spd_loss, TrainingStats};
use super::net::{backward, forward, DetectorParams};
use crate::error::{Error, Result};
use crate::optim::{Sgd, SgdConfig};
use crate::simmap::prepare_detector_input;

/// One `G × G` training tile with its boxes in tile coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdSample {
    pub tile: Vec<f64>,
    pub boxes: Vec<BBox>,
}

/// Minimum fraction of a box that must fall inside a tile for the tile to
/// carry it as ground truth.
const MIN_VISIBLE: f64 = 0.5;

/// Boxes (map coordinates) that a tile at the given offset carries, in
/// tile coordinates.
pub(crate) fn boxes_in_tile(boxes: &[BBox], row_offset: usize, col_offset: usize, size: usize) -> Vec<BBox> {
    let g = size as f64;
    let (dx, dy) = (col_offset as f64, row_offset as f64);
    boxes
        .iter()
        .filter_map(|b| {
            let c = [
                (b[0] - dx).clamp(0.0, g),
                (b[1] - dy).clamp(0.0, g),
                (b[2] - dx).clamp(0.0, g),
                (b[3] - dy).clamp(0.0, g),
            ];
            let full = (b[2] - b[0]) * (b[3] - b[1]);
            let seen = (c[2] - c[0]) * (c[3] - c[1]);
            (full > 0.0 && seen >= MIN_VISIBLE * full).then_some(c)
        })
        .collect()
}

/// Cuts a map and its boxes (map coordinates) into detector tiles.
pub fn tile_samples(
    values: &[f64],
    rows: usize,
    cols: usize,
    boxes: &[BBox],
    size: usize,
) -> Result<Vec<SpdSample>> {
    Ok(prepare_detector_input(values, rows, cols, size)?
        .into_iter()
        .map(|t| SpdSample {
            boxes: boxes_in_tile(boxes, t.row_offset, t.col_offset, size),
            tile: t.data,
        })
        .collect())
}

/// Loss and parameter gradient for one sample.
pub fn loss_and_grad(params: &DetectorParams, sample: &SpdSample) -> Result<(TrainingStats, Vec<f64>)> {
    let cache = forward(params, &sample.tile)?;
    let (stats, g_out) = spd_loss(&cache.out, params.config.grid(), &sample.boxes, params.config.giou_weight);
    let (gp, _) = backward(params, &cache, &g_out, false);
    Ok((stats, gp))
}

pub fn sample_loss(params: &DetectorParams, sample: &SpdSample) -> Result<TrainingStats> {
    let cache = forward(params, &sample.tile)?;
    Ok(spd_loss(&cache.out, params.config.grid(), &sample.boxes, params.config.giou_weight).0)
}

/// Relative gradient error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between analytic and central-difference
/// gradients of `l_spd` over every detector parameter.
pub fn grad_check(params: &DetectorParams, sample: &SpdSample, h: f64) -> Result<f64> {
    let (_, analytic) = loss_and_grad(params, sample)?;
    let mut worst = 0.0f64;
    let mut p = params.clone();
    for k in 0..params.len() {
        let orig = p.values[k];
        p.values[k] = orig + h;
        let up = sample_loss(&p, sample)?.l_spd;
        p.values[k] = orig - h;
        let down = sample_loss(&p, sample)?.l_spd;
        p.values[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[k], numeric, 1e-6));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean sample stats per epoch.
    pub epochs: Vec<TrainingStats>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|s| s.l_spd)
    }
}

/// Mini-batch SGD over shuffled samples. Deterministic for a given
/// `cfg.seed`; aborts on a non-finite loss.
pub fn train_spd(
    samples: &[SpdSample],
    init: &DetectorParams,
    cfg: &SgdConfig,
) -> Result<(DetectorParams, TrainReport)> {
    train_spd_with(samples, init, cfg, |_, _| {})
}

/// Like [`train_spd`], calling `on_epoch(epoch, mean_stats)` after each pass.
pub fn train_spd_with(
    samples: &[SpdSample],
    init: &DetectorParams,
    cfg: &SgdConfig,
    mut on_epoch: impl FnMut(usize, &TrainingStats),
) -> Result<(DetectorParams, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut params = init.clone();
    let decay = params.decay_mask();
    let mut opt = Sgd::new(*cfg, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.max(1);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = TrainingStats::default();
        for chunk in order.chunks(batch) {
            let mut grad = vec![0.0; params.len()];
            for &i in chunk {
                let (stats, g) = loss_and_grad(&params, &samples[i])?;
                if !stats.l_spd.is_finite() {
                    return Err(Error::Divergence {
                        step: opt.steps(),
                        detail: format!("non-finite loss on sample {i}"),
                    });
                }
                sum.add(&stats);
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            opt.step(&mut params.values, &grad, &decay);
            if !params.is_finite() {
                return Err(Error::Divergence {
                    step: opt.steps(),
                    detail: "parameters became non-finite".into(),
                });
            }
        }
        let mean = sum.scaled(1.0 / samples.len() as f64);
        on_epoch(epoch, &mean);
        report.epochs.push(mean);
    }
    report.steps = opt.steps();
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::net::DetectorConfig;
    use rand::Rng;

    fn tiny_sample(seed: u64) -> SpdSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tile: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..0.3)).collect();
        let start = rng.random_range(0..6);
        let len = rng.random_range(5..10);
        for i in start..start + len {
            tile[i * 16 + i] = 0.9;
        }
        let b = [start as f64, start as f64, (start + len) as f64, (start + len) as f64];
        SpdSample { tile, boxes: vec![b] }
    }

    #[test]
    fn gradient_check_tiny_config() {
        let params = DetectorParams::init(&DetectorConfig { seed: 3, ..DetectorConfig::tiny() }).unwrap();
        for s in 0..3 {
            let err = grad_check(&params, &tiny_sample(s), 1e-5).unwrap();
            assert!(err < 1e-4, "sample {s}: {err}");
        }
    }

    #[test]
    fn zero_lr_keeps_params_and_runs_are_deterministic() {
        let init = DetectorParams::init(&DetectorConfig::tiny()).unwrap();
        let samples: Vec<SpdSample> = (0..4).map(tiny_sample).collect();
        let zero = SgdConfig {
            lr: 0.0,
            weight_decay: 0.0,
            epochs: 2,
            ..SgdConfig::default()
        };
        let (p, _) = train_spd(&samples, &init, &zero).unwrap();
        assert_eq!(p, init);
        let cfg = SgdConfig {
            epochs: 3,
            batch_size: 2,
            seed: 4,
            ..SgdConfig::default()
        };
        let (a, ra) = train_spd(&samples, &init, &cfg).unwrap();
        let (b, rb) = train_spd(&samples, &init, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.steps, 6);
        assert!(train_spd(&[], &init, &cfg).is_err());
    }

    #[test]
    fn tiling_keeps_visible_boxes() {
        let values = vec![0.0; 200 * 200];
        let s = tile_samples(&values, 200, 200, &[[10.0, 10.0, 50.0, 50.0]], 128).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0].boxes, vec![[10.0, 10.0, 50.0, 50.0]]);
        // offset 64 sees none of it
        assert!(s[4].boxes.is_empty());
    }
}

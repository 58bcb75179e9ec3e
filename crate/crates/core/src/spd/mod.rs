//! Similarity pattern detection: a small anchor-free detector that finds
//! copied-segment boxes directly on similarity maps.

pub mod boxes;
pub mod loss;
pub(crate) mod model_io;
pub mod net;
pub mod train;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::align::SegmentMatch;
use crate::error::Result;
use crate::simmap::{prepare_detector_input, SimilarityMap};

pub use boxes::{decode_cell, encode_cell, giou, iou, BBox};
pub use loss::{spd_loss, TrainingStats};
pub use model_io::{load_detector, read_detector, save_detector, write_detector, SGDM_MAGIC, SGDM_VERSION};
pub use net::{backward, forward, DetectorConfig, DetectorParams, ForwardCache, OUTPUTS, STRIDE};
pub use train::{grad_check, loss_and_grad, tile_samples, train_spd, SpdSample, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// `[x1, y1, x2, y2]` in map cells; `x` is the reference axis.
    pub bbox: BBox,
    pub score: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Turns one tile's raw predictions into detections in map coordinates.
/// Boxes are clamped to the tile, then shifted by the tile offset.
pub fn decode(
    preds: &[f64],
    n: usize,
    tile_size: usize,
    (row_offset, col_offset): (usize, usize),
    threshold: f64,
) -> Vec<Detection> {
    let plane = n * n;
    let s = STRIDE as f64;
    let g = tile_size as f64;
    let mut out = Vec::new();
    for cell in 0..plane {
        let score = sigmoid(preds[cell]);
        if score < threshold {
            continue;
        }
        let t = [1, 2, 3, 4].map(|j| preds[j * plane + cell]);
        let b = boxes::clamp_box(&decode_cell(cell % n, cell / n, &t, s), g, g);
        if b[2] <= b[0] || b[3] <= b[1] {
            continue;
        }
        let (dx, dy) = (col_offset as f64, row_offset as f64);
        out.push(Detection {
            bbox: [b[0] + dx, b[1] + dy, b[2] + dx, b[3] + dy],
            score,
        });
    }
    out
}

fn det_order(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| {
        a.bbox
            .iter()
            .zip(&b.bbox)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Greedy non-maximum suppression: highest score first, drop anything whose
/// IoU with a kept box exceeds `iou_threshold`.
pub fn nms(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    dets.sort_by(det_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Tiles a row-major value grid, runs the detector on each tile, and merges
/// the results with a global NMS. Boxes are clamped to the grid.
pub fn detect_values(
    params: &DetectorParams,
    values: &[f64],
    rows: usize,
    cols: usize,
    threshold: f64,
) -> Result<Vec<Detection>> {
    let g = params.config.input_size;
    let n = params.config.grid();
    let mut all = Vec::new();
    for tile in prepare_detector_input(values, rows, cols, g)? {
        let out = forward(params, &tile.data)?.out;
        for d in decode(&out, n, g, (tile.row_offset, tile.col_offset), threshold) {
            let b = boxes::clamp_box(&d.bbox, cols as f64, rows as f64);
            if b[2] > b[0] && b[3] > b[1] {
                all.push(Detection { bbox: b, score: d.score });
            }
        }
    }
    Ok(nms(all, params.config.nms_iou))
}

/// Detections of one query/reference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetections {
    pub detections: Vec<Detection>,
    pub matches: Vec<SegmentMatch>,
    /// Highest detection score, `0` when nothing was found.
    pub video_similarity: f64,
}

/// Converts map-cell boxes to second-based matches, mapping compacted
/// keyframe axes back to original frames.
pub fn detections_to_matches(m: &SimilarityMap, dets: &[Detection]) -> Vec<SegmentMatch> {
    let qf = m.query_fps as f64;
    let rf = m.ref_fps as f64;
    dets.iter()
        .map(|d| SegmentMatch {
            q_start: m.row_coord_to_frame(d.bbox[1]) / qf,
            q_end: m.row_end_to_frame(d.bbox[3]) / qf,
            r_start: m.col_coord_to_frame(d.bbox[0]) / rf,
            r_end: m.col_end_to_frame(d.bbox[2]) / rf,
            score: d.score,
        })
        .filter(SegmentMatch::is_valid)
        .collect()
}

pub fn pair_detections(m: &SimilarityMap, detections: Vec<Detection>) -> PairDetections {
    let matches = detections_to_matches(m, &detections);
    let video_similarity = detections.iter().map(|d| d.score).fold(0.0, f64::max);
    PairDetections {
        detections,
        matches,
        video_similarity,
    }
}

/// Runs the detector on a similarity map (negatives clamped to zero).
pub fn detect_pair(params: &DetectorParams, m: &SimilarityMap) -> Result<PairDetections> {
    detect_pair_at(params, m, params.config.score_threshold)
}

pub fn detect_pair_at(params: &DetectorParams, m: &SimilarityMap, threshold: f64) -> Result<PairDetections> {
    let dets = detect_values(params, &m.detector_values(), m.rows(), m.cols(), threshold)?;
    Ok(pair_detections(m, dets))
}

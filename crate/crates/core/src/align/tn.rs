use serde::{Deserialize, Serialize};

use super::{match_from_cells, match_order, SegmentMatch};
use crate::simmap::SimilarityMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TnParams {
    pub max_frame_gap: usize,
    pub min_sim: f64,
}

impl Default for TnParams {
    fn default() -> Self {
        Self {
            max_frame_gap: 3,
            min_sim: 0.7,
        }
    }
}

/// Temporal network: cells at or above `min_sim` are nodes weighted by
/// similarity, edges join nodes advancing 1..=gap frames on both axes. The
/// heaviest path is a match; its nodes are removed and the search repeats
/// while a path of weight `2 * min_sim` remains.
pub fn tn_align(m: &SimilarityMap, p: &TnParams) -> Vec<SegmentMatch> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut weight: Vec<Option<f64>> = m
        .dense_values()
        .into_iter()
        .map(|v| (v as f64 >= p.min_sim).then_some(v as f64))
        .collect();
    let gap = p.max_frame_gap.max(1);
    let stop = 2.0 * p.min_sim;
    let mut out = Vec::new();
    let mut best = vec![0.0f64; rows * cols];
    let mut prev = vec![usize::MAX; rows * cols];
    loop {
        let mut top: Option<(f64, usize)> = None;
        for i in 0..rows {
            for j in 0..cols {
                let k = i * cols + j;
                let Some(w) = weight[k] else { continue };
                let mut acc = 0.0;
                let mut from = usize::MAX;
                for pi in i.saturating_sub(gap)..i {
                    for pj in j.saturating_sub(gap)..j {
                        let pk = pi * cols + pj;
                        if weight[pk].is_some() && best[pk] > acc {
                            acc = best[pk];
                            from = pk;
                        }
                    }
                }
                best[k] = acc + w;
                prev[k] = from;
                if top.is_none_or(|(s, _)| best[k] > s) {
                    top = Some((best[k], k));
                }
            }
        }
        let Some((score, mut k)) = top else { break };
        if score < stop {
            break;
        }
        let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
        loop {
            let (i, j) = (k / cols, k % cols);
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
            weight[k] = None;
            if prev[k] == usize::MAX {
                break;
            }
            k = prev[k];
        }
        out.push(match_from_cells(m, (i0, i1), (j0, j1), score));
    }
    out.sort_by(match_order);
    out
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{match_order, SegmentMatch};
use crate::simmap::SimilarityMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughParams {
    /// Offset bin width in seconds.
    pub offset_bin: f64,
    pub min_votes: usize,
    pub min_sim: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            offset_bin: 1.0,
            min_votes: 3,
            min_sim: 0.7,
        }
    }
}

#[derive(Debug, Default)]
struct Bin {
    votes: usize,
    score: f64,
    q: (f64, f64),
    r: (f64, f64),
}

/// Temporal Hough voting: every cell at or above `min_sim` votes for the bin
/// of its time offset `r_time - q_time`. Each bin with enough votes becomes
/// one match spanning its voters.
pub fn hough_align(m: &SimilarityMap, p: &HoughParams) -> Vec<SegmentMatch> {
    let q_frame = 1.0 / m.query_fps as f64;
    let r_frame = 1.0 / m.ref_fps as f64;
    let mut bins: BTreeMap<i64, Bin> = BTreeMap::new();
    for (i, j, v) in m.cells() {
        let v = v as f64;
        if v < p.min_sim {
            continue;
        }
        let (qt, rt) = (m.row_time(i), m.col_time(j));
        let key = ((rt - qt) / p.offset_bin).floor() as i64;
        let b = bins.entry(key).or_insert_with(|| Bin {
            q: (f64::INFINITY, f64::NEG_INFINITY),
            r: (f64::INFINITY, f64::NEG_INFINITY),
            ..Bin::default()
        });
        b.votes += 1;
        b.score += v;
        b.q = (b.q.0.min(qt), b.q.1.max(qt));
        b.r = (b.r.0.min(rt), b.r.1.max(rt));
    }
    let mut out: Vec<SegmentMatch> = bins
        .into_values()
        .filter(|b| b.votes >= p.min_votes.max(1))
        .map(|b| SegmentMatch {
            q_start: b.q.0,
            q_end: b.q.1 + q_frame,
            r_start: b.r.0,
            r_end: b.r.1 + r_frame,
            score: b.score,
        })
        .collect();
    out.sort_by(match_order);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::testutil::{diagonal, map_with};
    use crate::simmap::FrameAxes;

    #[test]
    fn identity_copy_is_one_match() {
        let out = hough_align(&diagonal(20, 0.9), &HoughParams::default());
        assert_eq!(out.len(), 1);
        let m = out[0];
        assert_eq!((m.q_start, m.q_end, m.r_start, m.r_end), (0.0, 2.5, 0.0, 2.5));
        assert!((m.score - 18.0).abs() < 1e-5);
    }

    #[test]
    fn shifted_copy_lands_in_offset_bin() {
        let cells: Vec<_> = (0..20).map(|i| (i, i + 10, 0.9)).collect();
        let map = map_with(20, 30, &cells);
        let p = HoughParams {
            offset_bin: 0.25,
            ..HoughParams::default()
        };
        let out = hough_align(&map, &p);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].r_start - out[0].q_start, 1.25);
    }

    #[test]
    fn double_speed_scatters_votes() {
        let cells: Vec<_> = (0..16).map(|i| (2 * i, i, 0.9)).collect();
        let map = map_with(32, 16, &cells);
        let p = HoughParams {
            offset_bin: 0.125,
            min_votes: 3,
            min_sim: 0.7,
        };
        assert!(hough_align(&map, &p).is_empty());
    }

    #[test]
    fn permutation_with_axes_is_invariant() {
        let cells: Vec<_> = (0..10).map(|i| (i, i + 3, 0.8)).collect();
        let base = map_with(10, 14, &cells);
        let expected = hough_align(&base, &HoughParams::default());
        // reverse both axes but record original frame numbers
        let rows: Vec<usize> = (0..10).rev().collect();
        let cols: Vec<usize> = (0..14).rev().collect();
        let permuted_cells: Vec<_> = (0..10).map(|i| (9 - i, 13 - (i + 3), 0.8)).collect();
        let permuted = map_with(10, 14, &permuted_cells)
            .with_axes(FrameAxes { rows, cols })
            .unwrap();
        assert_eq!(hough_align(&permuted, &HoughParams::default()), expected);
    }
}

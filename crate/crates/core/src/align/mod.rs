//! Classical temporal-alignment baselines: Hough voting over time offsets,
//! longest weighted path in a temporal network, and local-alignment
//! dynamic programming. Each one extracts segments repeatedly, suppressing
//! what it already reported, so several copies per pair can surface.

mod dp;
mod hough;
mod tn;

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simmap::SimilarityMap;

pub use dp::{dp_align, dp_best_path, DpParams, DpPath};
pub use hough::{hough_align, HoughParams};
pub use tn::{tn_align, TnParams};

/// A matched query/reference segment pair in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub q_start: f64,
    pub q_end: f64,
    pub r_start: f64,
    pub r_end: f64,
    pub score: f64,
}

impl SegmentMatch {
    pub fn is_valid(&self) -> bool {
        self.q_start < self.q_end && self.r_start < self.r_end && self.score >= 0.0
    }

    pub fn q_len(&self) -> f64 {
        self.q_end - self.q_start
    }

    pub fn r_len(&self) -> f64 {
        self.r_end - self.r_start
    }
}

/// Score descending, then query start.
pub fn match_order(a: &SegmentMatch, b: &SegmentMatch) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.q_start.total_cmp(&b.q_start))
        .then(a.r_start.total_cmp(&b.r_start))
}

/// Segment covering map rows `i0..=i1` and columns `j0..=j1`, converted to
/// seconds through the map's frame axes.
pub(crate) fn match_from_cells(
    m: &SimilarityMap,
    (i0, i1): (usize, usize),
    (j0, j1): (usize, usize),
    score: f64,
) -> SegmentMatch {
    let qf = m.query_fps as f64;
    let rf = m.ref_fps as f64;
    SegmentMatch {
        q_start: m.row_coord_to_frame(i0 as f64) / qf,
        q_end: m.row_end_to_frame(i1 as f64 + 1.0) / qf,
        r_start: m.col_coord_to_frame(j0 as f64) / rf,
        r_end: m.col_end_to_frame(j1 as f64 + 1.0) / rf,
        score,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hough,
    Tn,
    Dp,
    Spd,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hough" => Ok(Method::Hough),
            "tn" => Ok(Method::Tn),
            "dp" => Ok(Method::Dp),
            "spd" => Ok(Method::Spd),
            other => Err(Error::invalid(format!("unknown alignment method `{other}`"))),
        }
    }
}

/// Parameters for all three baselines.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub hough: HoughParams,
    pub tn: TnParams,
    pub dp: DpParams,
}

/// Runs a baseline by method; `Spd` is handled by the detector module.
pub fn run_baseline(m: &SimilarityMap, method: Method, p: &BaselineParams) -> Result<Vec<SegmentMatch>> {
    match method {
        Method::Hough => Ok(hough_align(m, &p.hough)),
        Method::Tn => Ok(tn_align(m, &p.tn)),
        Method::Dp => Ok(dp_align(m, &p.dp)),
        Method::Spd => Err(Error::invalid("spd is not a baseline method")),
    }
}

/// Pair-level score for ranking: best match score divided by the query
/// length in frames, so long queries do not dominate.
pub fn normalized_video_score(matches: &[SegmentMatch], query_frames: usize) -> f64 {
    let best = matches.iter().map(|m| m.score).fold(0.0, f64::max);
    best / query_frames.max(1) as f64
}

pub fn write_matches_jsonl<W: Write>(mut w: W, matches: &[SegmentMatch]) -> Result<()> {
    for m in matches {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matches_jsonl<R: BufRead>(r: R) -> Result<Vec<SegmentMatch>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::simmap::SimilarityMap;

    /// `rows × cols` map at 8 fps with the given cells set.
    pub fn map_with(rows: usize, cols: usize, cells: &[(usize, usize, f32)]) -> SimilarityMap {
        let mut v = vec![0.0f32; rows * cols];
        for &(i, j, s) in cells {
            v[i * cols + j] = s;
        }
        SimilarityMap::from_dense("q", "r", rows, cols, (8.0, 8.0), v).unwrap()
    }

    pub fn diagonal(n: usize, value: f32) -> SimilarityMap {
        let cells: Vec<_> = (0..n).map(|i| (i, i, value)).collect();
        map_with(n, n, &cells)
    }
}

use serde::{Deserialize, Serialize};

use super::{match_from_cells, match_order, SegmentMatch};
use crate::simmap::SimilarityMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpParams {
    pub min_sim: f64,
    pub gap_penalty: f64,
    /// Maximum drift of the path's diagonal offset away from its starting
    /// offset, in frames; `None` leaves paths unconstrained.
    pub band_width: Option<usize>,
    /// Extraction stops once the best remaining block scores below this.
    pub min_score: f64,
    /// Upper bound on extracted blocks per map.
    pub max_blocks: usize,
}

impl Default for DpParams {
    fn default() -> Self {
        Self {
            min_sim: 0.7,
            gap_penalty: 0.1,
            band_width: None,
            min_score: 0.5,
            max_blocks: 16,
        }
    }
}

/// Best local-alignment path: its score and cells from start to end.
#[derive(Debug, Clone, PartialEq)]
pub struct DpPath {
    pub score: f64,
    pub cells: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Start,
    Diag,
    Up,
    Left,
}

/// Highest-scoring monotone path over `values` (row-major) where each cell
/// adds `value - min_sim` and each non-diagonal step costs `gap_penalty`.
/// Cells marked in `blocked` cannot be visited. Returns `None` when no path
/// scores above zero.
pub fn dp_best_path(
    values: &[f64],
    rows: usize,
    cols: usize,
    p: &DpParams,
    blocked: &[bool],
) -> Option<DpPath> {
    match p.band_width {
        None => unbanded(values, rows, cols, p, blocked),
        Some(b) => banded(values, rows, cols, p, blocked, b),
    }
}

fn unbanded(
    values: &[f64],
    rows: usize,
    cols: usize,
    p: &DpParams,
    blocked: &[bool],
) -> Option<DpPath> {
    let g = p.gap_penalty;
    let mut a = vec![0.0f64; rows * cols];
    let mut back = vec![Step::Start; rows * cols];
    let mut best: Option<(f64, usize)> = None;
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            if blocked[k] {
                continue;
            }
            let diag = if i > 0 && j > 0 { a[k - cols - 1] } else { 0.0 };
            let up = if i > 0 { a[k - cols] - g } else { -g };
            let left = if j > 0 { a[k - 1] - g } else { -g };
            let (mut pred, mut step) = (diag, Step::Diag);
            if up > pred {
                (pred, step) = (up, Step::Up);
            }
            if left > pred {
                (pred, step) = (left, Step::Left);
            }
            if step == Step::Diag && diag == 0.0 {
                step = Step::Start;
            }
            let v = pred + (values[k] - p.min_sim);
            if v > 0.0 {
                a[k] = v;
                back[k] = step;
                if best.is_none_or(|(s, _)| v > s) {
                    best = Some((v, k));
                }
            }
        }
    }
    let (score, mut k) = best?;
    let mut cells = Vec::new();
    loop {
        cells.push((k / cols, k % cols));
        match back[k] {
            Step::Start => break,
            Step::Diag => k -= cols + 1,
            Step::Up => k -= cols,
            Step::Left => k -= 1,
        }
    }
    cells.reverse();
    Some(DpPath { score, cells })
}

/// Offset-tracking variant: state `(i, j, d)` where `d` is the drift of
/// `j - i` from the start cell, kept within `±band`.
fn banded(
    values: &[f64],
    rows: usize,
    cols: usize,
    p: &DpParams,
    blocked: &[bool],
    band: usize,
) -> Option<DpPath> {
    let g = p.gap_penalty;
    let width = 2 * band + 1;
    let center = band;
    let idx = |i: usize, j: usize, d: usize| (i * cols + j) * width + d;
    let mut a = vec![f64::NEG_INFINITY; rows * cols * width];
    let mut back = vec![Step::Start; rows * cols * width];
    let mut best: Option<(f64, usize)> = None;
    for i in 0..rows {
        for j in 0..cols {
            if blocked[i * cols + j] {
                continue;
            }
            let x = values[i * cols + j] - p.min_sim;
            for d in 0..width {
                let mut pred = f64::NEG_INFINITY;
                let mut step = Step::Start;
                if d == center {
                    pred = 0.0;
                }
                if i > 0 && j > 0 {
                    let v = a[idx(i - 1, j - 1, d)];
                    if v > pred {
                        pred = v;
                        step = Step::Diag;
                    }
                }
                // stepping down a row lowers j - i, so the predecessor sat one drift higher
                if i > 0 && d + 1 < width {
                    let v = a[idx(i - 1, j, d + 1)] - g;
                    if v > pred {
                        pred = v;
                        step = Step::Up;
                    }
                }
                if j > 0 && d > 0 {
                    let v = a[idx(i, j - 1, d - 1)] - g;
                    if v > pred {
                        pred = v;
                        step = Step::Left;
                    }
                }
                if pred == f64::NEG_INFINITY {
                    continue;
                }
                let v = pred + x;
                let k = idx(i, j, d);
                a[k] = v;
                back[k] = step;
                if v > 0.0 && best.is_none_or(|(s, _)| v > s) {
                    best = Some((v, k));
                }
            }
        }
    }
    let (score, mut k) = best?;
    let mut cells = Vec::new();
    loop {
        let cell = k / width;
        let d = k % width;
        let (i, j) = (cell / cols, cell % cols);
        cells.push((i, j));
        k = match back[k] {
            Step::Start => break,
            Step::Diag => idx(i - 1, j - 1, d),
            Step::Up => idx(i - 1, j, d + 1),
            Step::Left => idx(i, j - 1, d - 1),
        };
    }
    cells.reverse();
    Some(DpPath { score, cells })
}

/// Repeated best-block extraction; each reported path's cells are blocked
/// before the next search.
pub fn dp_align(m: &SimilarityMap, p: &DpParams) -> Vec<SegmentMatch> {
    let (rows, cols) = (m.rows(), m.cols());
    let values: Vec<f64> = m.dense_values().into_iter().map(f64::from).collect();
    let mut blocked = vec![false; rows * cols];
    let mut out = Vec::new();
    while out.len() < p.max_blocks {
        let Some(path) = dp_best_path(&values, rows, cols, p, &blocked) else { break };
        if path.score < p.min_score {
            break;
        }
        let i0 = path.cells.iter().map(|c| c.0).min().unwrap();
        let i1 = path.cells.iter().map(|c| c.0).max().unwrap();
        let j0 = path.cells.iter().map(|c| c.1).min().unwrap();
        let j1 = path.cells.iter().map(|c| c.1).max().unwrap();
        for &(i, j) in &path.cells {
            blocked[i * cols + j] = true;
        }
        out.push(match_from_cells(m, (i0, i1), (j0, j1), path.score));
    }
    out.sort_by(match_order);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::testutil::{diagonal, map_with};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Depth-first enumeration of every monotone path from every start,
    /// accumulating in the same order as the recurrence.
    fn exhaustive(values: &[f64], rows: usize, cols: usize, p: &DpParams) -> f64 {
        fn walk(
            values: &[f64],
            rows: usize,
            cols: usize,
            p: &DpParams,
            (i, j): (usize, usize),
            drift: i64,
            s: f64,
            best: &mut f64,
        ) {
            if s > *best {
                *best = s;
            }
            let ok = |d: i64| p.band_width.is_none_or(|b| d.unsigned_abs() as usize <= b);
            if i + 1 < rows && j + 1 < cols {
                let x = values[(i + 1) * cols + j + 1] - p.min_sim;
                walk(values, rows, cols, p, (i + 1, j + 1), drift, s + x, best);
            }
            if i + 1 < rows && ok(drift - 1) {
                let x = values[(i + 1) * cols + j] - p.min_sim;
                walk(values, rows, cols, p, (i + 1, j), drift - 1, s - p.gap_penalty + x, best);
            }
            if j + 1 < cols && ok(drift + 1) {
                let x = values[i * cols + j + 1] - p.min_sim;
                walk(values, rows, cols, p, (i, j + 1), drift + 1, s - p.gap_penalty + x, best);
            }
        }
        let mut best = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let x = 0.0 + (values[i * cols + j] - p.min_sim);
                walk(values, rows, cols, p, (i, j), 0, x, &mut best);
            }
        }
        best
    }

    fn path_score(values: &[f64], cols: usize, p: &DpParams, cells: &[(usize, usize)]) -> f64 {
        let mut s = 0.0 + (values[cells[0].0 * cols + cells[0].1] - p.min_sim);
        for w in cells.windows(2) {
            let (a, b) = (w[0], w[1]);
            let x = values[b.0 * cols + b.1] - p.min_sim;
            s = if b.0 == a.0 + 1 && b.1 == a.1 + 1 { s + x } else { s - p.gap_penalty + x };
        }
        s
    }

    #[test]
    fn identity_traceback_is_the_diagonal() {
        let m = diagonal(10, 0.9);
        let p = DpParams {
            min_sim: 0.5,
            gap_penalty: 0.1,
            ..DpParams::default()
        };
        let values: Vec<f64> = m.dense_values().into_iter().map(f64::from).collect();
        let path = dp_best_path(&values, 10, 10, &p, &[false; 100]).unwrap();
        assert_eq!(path.cells, (0..10).map(|i| (i, i)).collect::<Vec<_>>());
        let out = dp_align(&m, &p);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].q_start, out[0].q_end, out[0].r_end), (0.0, 1.25, 1.25));
    }

    #[test]
    fn zero_map_is_empty() {
        assert!(dp_align(&map_with(6, 6, &[]), &DpParams::default()).is_empty());
    }

    #[test]
    fn matches_exhaustive_on_small_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 0..150 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(1..=6);
            let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..1.0f32) as f64).collect();
            let p = DpParams {
                min_sim: 0.5,
                gap_penalty: rng.random_range(0.0..0.3),
                band_width: [None, Some(0), Some(1), Some(2)][t % 4],
                ..DpParams::default()
            };
            let oracle = exhaustive(&values, rows, cols, &p);
            let got = dp_best_path(&values, rows, cols, &p, &vec![false; rows * cols]);
            match got {
                None => assert_eq!(oracle, 0.0),
                Some(path) => {
                    assert_eq!(path.score, oracle, "{rows}x{cols} {p:?}");
                    assert_eq!(path_score(&values, cols, &p, &path.cells), path.score);
                }
            }
        }
    }

    #[test]
    fn suppression_finds_second_block() {
        let mut cells: Vec<_> = (0..6).map(|i| (i, i + 8, 0.95)).collect();
        cells.extend((0..6).map(|i| (i + 8, i, 0.9)));
        let out = dp_align(&map_with(14, 14, &cells), &DpParams::default());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].r_start, 1.0);
        assert_eq!(out[1].q_start, 1.0);
    }
}

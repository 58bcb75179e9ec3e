//! Frame-to-frame similarity maps: dense and sparse storage, keyframe
//! masking, keyframe submatrices, and fixed-size detector tiles.
//!
//! Rows index query frames, columns index reference frames.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{dot, FeatureSequence};
use crate::keyframe::KeyframeScores;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub row: u32,
    pub col: u32,
    pub value: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapData {
    /// Row-major `rows × cols`.
    Dense(Vec<f32>),
    /// Sorted by `(row, col)`, unique; absent cells are zero.
    Sparse(Vec<SparseEntry>),
}

/// Original frame index of every row and column of a compacted map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAxes {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub query_id: String,
    pub ref_id: String,
    rows: usize,
    cols: usize,
    pub query_fps: f32,
    pub ref_fps: f32,
    data: MapData,
    axes: Option<FrameAxes>,
}

impl SimilarityMap {
    pub fn from_dense(
        query_id: impl Into<String>,
        ref_id: impl Into<String>,
        rows: usize,
        cols: usize,
        fps: (f32, f32),
        values: Vec<f32>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: values.len(),
                context: "dense map values".into(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("similarity {v} outside [-1, 1]")));
        }
        Ok(Self {
            query_id: query_id.into(),
            ref_id: ref_id.into(),
            rows,
            cols,
            query_fps: fps.0,
            ref_fps: fps.1,
            data: MapData::Dense(values),
            axes: None,
        })
    }

    /// Builds a sparse map; duplicate cells keep the maximum value.
    pub fn from_sparse(
        query_id: impl Into<String>,
        ref_id: impl Into<String>,
        rows: usize,
        cols: usize,
        fps: (f32, f32),
        mut entries: Vec<SparseEntry>,
    ) -> Result<Self> {
        for e in &entries {
            if e.row as usize >= rows || e.col as usize >= cols {
                return Err(Error::OutOfRange {
                    index: (e.row as usize).max(e.col as usize),
                    len: rows.min(cols),
                    context: "sparse map entry",
                });
            }
            if !(-1.0..=1.0).contains(&e.value) {
                return Err(Error::invalid(format!("similarity {} outside [-1, 1]", e.value)));
            }
        }
        entries.sort_by(|a, b| {
            (a.row, a.col)
                .cmp(&(b.row, b.col))
                .then(b.value.total_cmp(&a.value))
        });
        entries.dedup_by(|next, kept| next.row == kept.row && next.col == kept.col);
        Ok(Self {
            query_id: query_id.into(),
            ref_id: ref_id.into(),
            rows,
            cols,
            query_fps: fps.0,
            ref_fps: fps.1,
            data: MapData::Sparse(entries),
            axes: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &MapData {
        &self.data
    }

    pub fn axes(&self) -> Option<&FrameAxes> {
        self.axes.as_ref()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.data, MapData::Sparse(_))
    }

    pub fn with_axes(mut self, axes: FrameAxes) -> Result<Self> {
        if axes.rows.len() != self.rows || axes.cols.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.rows,
                found: axes.rows.len(),
                context: "frame axes".into(),
            });
        }
        self.axes = Some(axes);
        Ok(self)
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        match &self.data {
            MapData::Dense(v) => v[i * self.cols + j],
            MapData::Sparse(e) => e
                .binary_search_by(|x| (x.row as usize, x.col as usize).cmp(&(i, j)))
                .map_or(0.0, |k| e[k].value),
        }
    }

    /// Row-major values with absent sparse cells as zero.
    pub fn dense_values(&self) -> Vec<f32> {
        match &self.data {
            MapData::Dense(v) => v.clone(),
            MapData::Sparse(entries) => {
                let mut out = vec![0.0; self.rows * self.cols];
                for e in entries {
                    out[e.row as usize * self.cols + e.col as usize] = e.value;
                }
                out
            }
        }
    }

    pub fn densify(&self) -> Self {
        Self {
            data: MapData::Dense(self.dense_values()),
            ..self.clone()
        }
    }

    /// Stored cells `(row, col, value)`; every cell for dense maps.
    pub fn cells(&self) -> Box<dyn Iterator<Item = (usize, usize, f32)> + '_> {
        match &self.data {
            MapData::Dense(v) => {
                let cols = self.cols;
                Box::new(v.iter().enumerate().map(move |(k, &x)| (k / cols, k % cols, x)))
            }
            MapData::Sparse(e) => {
                Box::new(e.iter().map(|x| (x.row as usize, x.col as usize, x.value)))
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let data = match &self.data {
            MapData::Dense(v) => {
                let mut t = vec![0.0; v.len()];
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        t[j * self.rows + i] = v[i * self.cols + j];
                    }
                }
                MapData::Dense(t)
            }
            MapData::Sparse(e) => {
                let mut t: Vec<SparseEntry> = e
                    .iter()
                    .map(|x| SparseEntry {
                        row: x.col,
                        col: x.row,
                        value: x.value,
                    })
                    .collect();
                t.sort_by_key(|x| (x.row, x.col));
                MapData::Sparse(t)
            }
        };
        Self {
            query_id: self.ref_id.clone(),
            ref_id: self.query_id.clone(),
            rows: self.cols,
            cols: self.rows,
            query_fps: self.ref_fps,
            ref_fps: self.query_fps,
            data,
            axes: self.axes.as_ref().map(|a| FrameAxes {
                rows: a.cols.clone(),
                cols: a.rows.clone(),
            }),
        }
    }

    /// Original frame index of row `i`.
    pub fn row_frame(&self, i: usize) -> usize {
        self.axes.as_ref().map_or(i, |a| a.rows[i])
    }

    pub fn col_frame(&self, j: usize) -> usize {
        self.axes.as_ref().map_or(j, |a| a.cols[j])
    }

    pub fn row_time(&self, i: usize) -> f64 {
        self.row_frame(i) as f64 / self.query_fps as f64
    }

    pub fn col_time(&self, j: usize) -> f64 {
        self.col_frame(j) as f64 / self.ref_fps as f64
    }

    /// Maps a continuous row coordinate of this map to the original query
    /// frame axis. Cell `k` covers `[frame(k), frame(k) + 1]`.
    pub fn row_coord_to_frame(&self, y: f64) -> f64 {
        match &self.axes {
            None => y,
            Some(a) => axis_coord(&a.rows, y),
        }
    }

    pub fn col_coord_to_frame(&self, x: f64) -> f64 {
        match &self.axes {
            None => x,
            Some(a) => axis_coord(&a.cols, x),
        }
    }

    /// Like [`Self::row_coord_to_frame`] for an exclusive end coordinate: an
    /// integer `y` closes the cell before it rather than opening the next.
    pub fn row_end_to_frame(&self, y: f64) -> f64 {
        match &self.axes {
            None => y,
            Some(a) => axis_end(&a.rows, y),
        }
    }

    pub fn col_end_to_frame(&self, x: f64) -> f64 {
        match &self.axes {
            None => x,
            Some(a) => axis_end(&a.cols, x),
        }
    }

    /// Dense values with negatives clamped to zero, as fed to the detector.
    pub fn detector_values(&self) -> Vec<f64> {
        self.dense_values()
            .into_iter()
            .map(|v| (v as f64).max(0.0))
            .collect()
    }

    /// Copy with negative similarities clamped to zero.
    pub fn clamped_nonnegative(&self) -> Self {
        let data = match &self.data {
            MapData::Dense(v) => MapData::Dense(v.iter().map(|x| x.max(0.0)).collect()),
            MapData::Sparse(e) => MapData::Sparse(
                e.iter()
                    .map(|x| SparseEntry {
                        value: x.value.max(0.0),
                        ..*x
                    })
                    .collect(),
            ),
        };
        Self {
            data,
            ..self.clone()
        }
    }

    pub fn max_value(&self) -> f32 {
        self.cells().map(|(_, _, v)| v).fold(0.0, f32::max)
    }
}

fn axis_coord(frames: &[usize], p: f64) -> f64 {
    if frames.is_empty() {
        return p;
    }
    let p = p.clamp(0.0, frames.len() as f64);
    let k = (p.floor() as usize).min(frames.len() - 1);
    frames[k] as f64 + (p - k as f64)
}

fn axis_end(frames: &[usize], p: f64) -> f64 {
    if frames.is_empty() {
        return p;
    }
    let p = p.clamp(0.0, frames.len() as f64);
    let k = (p.ceil() as usize).saturating_sub(1).min(frames.len() - 1);
    frames[k] as f64 + (p - k as f64)
}

/// Dense cosine map of two sequences: `values[i][j] = cos(a_i, b_j)`.
pub fn dense_map(a: &FeatureSequence, b: &FeatureSequence) -> Result<SimilarityMap> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
            context: format!("dense_map {} vs {}", a.video_id(), b.video_id()),
        });
    }
    let mut values = Vec::with_capacity(a.len() * b.len());
    for fa in a.frames() {
        for fb in b.frames() {
            values.push(dot(fa, fb).clamp(-1.0, 1.0));
        }
    }
    SimilarityMap::from_dense(
        a.video_id(),
        b.video_id(),
        a.len(),
        b.len(),
        (a.basis_fps(), b.basis_fps()),
        values,
    )
}

/// A map weighted by the outer product of two keyframe score vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMap {
    pub base: SimilarityMap,
    pub row_scores: Vec<f64>,
    pub col_scores: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn apply_keyframe_mask(
    s: &SimilarityMap,
    p1: &KeyframeScores,
    p2: &KeyframeScores,
) -> Result<MaskedMap> {
    mask_with_scores(s, &p1.scores, &p2.scores)
}

pub fn mask_with_scores(s: &SimilarityMap, p1: &[f64], p2: &[f64]) -> Result<MaskedMap> {
    if p1.len() != s.rows() {
        return Err(Error::LengthMismatch {
            expected: s.rows(),
            found: p1.len(),
            context: "row keyframe scores".into(),
        });
    }
    if p2.len() != s.cols() {
        return Err(Error::LengthMismatch {
            expected: s.cols(),
            found: p2.len(),
            context: "column keyframe scores".into(),
        });
    }
    let base = s.dense_values();
    let cols = s.cols();
    let values = base
        .iter()
        .enumerate()
        .map(|(k, &v)| p1[k / cols] * p2[k % cols] * v as f64)
        .collect();
    Ok(MaskedMap {
        base: s.clone(),
        row_scores: p1.to_vec(),
        col_scores: p2.to_vec(),
        values,
    })
}

impl MaskedMap {
    pub fn rows(&self) -> usize {
        self.base.rows()
    }

    pub fn cols(&self) -> usize {
        self.base.cols()
    }

    /// Pulls a gradient with respect to the masked values back onto the two
    /// score vectors.
    pub fn grad_scores(&self, grad_values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (rows, cols) = (self.rows(), self.cols());
        let base = self.base.dense_values();
        let mut g1 = vec![0.0; rows];
        let mut g2 = vec![0.0; cols];
        for i in 0..rows {
            for j in 0..cols {
                let g = grad_values[i * cols + j] * base[i * cols + j] as f64;
                g1[i] += g * self.col_scores[j];
                g2[j] += g * self.row_scores[i];
            }
        }
        (g1, g2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmatrixMode {
    /// Keep the shape, zero every cell outside keyframe rows × columns.
    ZeroFill,
    /// Compact to keyframe rows × columns and record the original frames.
    Drop,
}

pub fn keyframe_submatrix(
    s: &SimilarityMap,
    k1: &[usize],
    k2: &[usize],
    mode: SubmatrixMode,
) -> Result<SimilarityMap> {
    if k1.is_empty() {
        return Err(Error::EmptyKeyframes("query rows"));
    }
    if k2.is_empty() {
        return Err(Error::EmptyKeyframes("reference columns"));
    }
    let mut rows_set = k1.to_vec();
    rows_set.sort_unstable();
    rows_set.dedup();
    let mut cols_set = k2.to_vec();
    cols_set.sort_unstable();
    cols_set.dedup();
    if let Some(&i) = rows_set.last().filter(|&&i| i >= s.rows()) {
        return Err(Error::OutOfRange {
            index: i,
            len: s.rows(),
            context: "keyframe row",
        });
    }
    if let Some(&j) = cols_set.last().filter(|&&j| j >= s.cols()) {
        return Err(Error::OutOfRange {
            index: j,
            len: s.cols(),
            context: "keyframe column",
        });
    }
    let fps = (s.query_fps, s.ref_fps);
    match mode {
        SubmatrixMode::ZeroFill => {
            let mut row_mask = vec![false; s.rows()];
            rows_set.iter().for_each(|&i| row_mask[i] = true);
            let mut col_mask = vec![false; s.cols()];
            cols_set.iter().for_each(|&j| col_mask[j] = true);
            let out = match s.data() {
                MapData::Dense(v) => {
                    let cols = s.cols();
                    let values = v
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| if row_mask[k / cols] && col_mask[k % cols] { x } else { 0.0 })
                        .collect();
                    SimilarityMap::from_dense(&s.query_id, &s.ref_id, s.rows(), s.cols(), fps, values)?
                }
                MapData::Sparse(e) => {
                    let kept = e
                        .iter()
                        .filter(|x| row_mask[x.row as usize] && col_mask[x.col as usize])
                        .copied()
                        .collect();
                    SimilarityMap::from_sparse(&s.query_id, &s.ref_id, s.rows(), s.cols(), fps, kept)?
                }
            };
            match s.axes() {
                Some(a) => out.with_axes(a.clone()),
                None => Ok(out),
            }
        }
        SubmatrixMode::Drop => {
            let mut values = Vec::with_capacity(rows_set.len() * cols_set.len());
            for &i in &rows_set {
                for &j in &cols_set {
                    values.push(s.get(i, j));
                }
            }
            let axes = FrameAxes {
                rows: rows_set.iter().map(|&i| s.row_frame(i)).collect(),
                cols: cols_set.iter().map(|&j| s.col_frame(j)).collect(),
            };
            SimilarityMap::from_dense(
                &s.query_id,
                &s.ref_id,
                rows_set.len(),
                cols_set.len(),
                fps,
                values,
            )?
            .with_axes(axes)
        }
    }
}

/// One `size × size` detector tile cut from a map.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub data: Vec<f64>,
    pub size: usize,
    pub row_offset: usize,
    pub col_offset: usize,
}

/// Window starts along one axis: stride `size / 2`, final window clamped to
/// the end, a single window for short axes.
pub fn tile_offsets(len: usize, size: usize) -> Vec<usize> {
    if len <= size {
        return vec![0];
    }
    let stride = (size / 2).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + size < len {
        out.push(start);
        start += stride;
    }
    out.push(len - size);
    out
}

/// Cuts a row-major `rows × cols` map into overlapping `size × size` tiles,
/// zero-padding bottom and right when the map is smaller.
pub fn prepare_detector_input(
    values: &[f64],
    rows: usize,
    cols: usize,
    size: usize,
) -> Result<Vec<Tile>> {
    if size == 0 {
        return Err(Error::invalid("detector input size must be positive"));
    }
    if values.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            found: values.len(),
            context: "detector input".into(),
        });
    }
    let mut tiles = Vec::new();
    for &r0 in &tile_offsets(rows, size) {
        for &c0 in &tile_offsets(cols, size) {
            let mut data = vec![0.0; size * size];
            let h = size.min(rows - r0);
            let w = size.min(cols - c0);
            for y in 0..h {
                let src = &values[(r0 + y) * cols + c0..(r0 + y) * cols + c0 + w];
                data[y * size..y * size + w].copy_from_slice(src);
            }
            tiles.push(Tile {
                data,
                size,
                row_offset: r0,
                col_offset: c0,
            });
        }
    }
    Ok(tiles)
}

/// Binary PGM (P5) rendering of `[0, 1]` values; negatives clip to black.
pub fn pgm_bytes(values: &[f64], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_gray(v)));
    out
}

pub fn write_pgm(map: &SimilarityMap, path: impl AsRef<Path>) -> Result<()> {
    let bytes = pgm_bytes(&map.detector_values(), map.rows(), map.cols());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub(crate) fn to_gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(id: &str, n: usize, dim: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureSequence::new(id, 8.0, dim, data).unwrap()
    }

    #[test]
    fn self_map_has_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_seq("a", 12, 8, &mut rng);
        let m = dense_map(&a, &a).unwrap();
        for i in 0..12 {
            assert!((m.get(i, i) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_map_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_seq("a", 3, 6, &mut rng);
        let b = random_seq("b", 4, 6, &mut rng);
        let m = dense_map(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let (fa, fb) = (a.frame(i), b.frame(j));
                let mut num = 0.0f64;
                let mut na = 0.0f64;
                let mut nb = 0.0f64;
                for k in 0..6 {
                    num += fa[k] as f64 * fb[k] as f64;
                    na += (fa[k] as f64).powi(2);
                    nb += (fb[k] as f64).powi(2);
                }
                let expected = num / (na.sqrt() * nb.sqrt());
                assert!((m.get(i, j) as f64 - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn orthogonal_constant_sequences_give_zero_map() {
        let a = FeatureSequence::from_rows("a", 8.0, &vec![vec![1.0, 0.0]; 5]).unwrap();
        let b = FeatureSequence::from_rows("b", 8.0, &vec![vec![0.0, 1.0]; 7]).unwrap();
        assert!(dense_map(&a, &b).unwrap().dense_values().iter().all(|&v| v == 0.0));
        let c = FeatureSequence::from_rows("c", 8.0, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(dense_map(&a, &c).is_err());
    }

    #[test]
    fn transpose_equals_swapped_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_seq("a", 5, 8, &mut rng);
        let b = random_seq("b", 7, 8, &mut rng);
        let ab = dense_map(&a, &b).unwrap();
        let ba = dense_map(&b, &a).unwrap();
        assert_eq!(ab.transpose(), ba);
    }

    #[test]
    fn mask_identity_and_annihilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_seq("a", 4, 8, &mut rng);
        let b = random_seq("b", 5, 8, &mut rng);
        let s = dense_map(&a, &b).unwrap();
        let ones = mask_with_scores(&s, &[1.0; 4], &[1.0; 5]).unwrap();
        let base: Vec<f64> = s.dense_values().iter().map(|&v| v as f64).collect();
        assert_eq!(ones.values, base);
        let mut p1 = vec![1.0; 4];
        p1[2] = 0.0;
        let m = mask_with_scores(&s, &p1, &[1.0; 5]).unwrap();
        assert!(m.values[10..15].iter().all(|&v| v == 0.0));
        assert!(mask_with_scores(&s, &[1.0; 3], &[1.0; 5]).is_err());
    }

    #[test]
    fn mask_random_scores_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_seq("a", 4, 8, &mut rng);
        let b = random_seq("b", 3, 8, &mut rng);
        let s = dense_map(&a, &b).unwrap();
        let p1: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let p2: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let m = mask_with_scores(&s, &p1, &p2).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let expected = p1[i] * p2[j] * s.get(i, j) as f64;
                assert!((m.values[i * 3 + j] - expected).abs() < 1e-7);
            }
        }
        // downstream scalar L = sum(c_ij * values_ij)
        let c: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (g1, g2) = m.grad_scores(&c);
        for i in 0..4 {
            let expected: f64 = (0..3).map(|j| c[i * 3 + j] * p2[j] * s.get(i, j) as f64).sum();
            assert!((g1[i] - expected).abs() < 1e-12);
        }
        for j in 0..3 {
            let expected: f64 = (0..4).map(|i| c[i * 3 + j] * p1[i] * s.get(i, j) as f64).sum();
            assert!((g2[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_and_dense_agree_after_masking() {
        let entries = vec![
            SparseEntry { row: 2, col: 1, value: 0.5 },
            SparseEntry { row: 0, col: 0, value: 0.9 },
            SparseEntry { row: 2, col: 1, value: 0.7 },
        ];
        let sparse = SimilarityMap::from_sparse("q", "r", 3, 3, (8.0, 8.0), entries).unwrap();
        assert_eq!(sparse.get(2, 1), 0.7);
        let dense = sparse.densify();
        let p1 = [0.2, 0.5, 0.9];
        let p2 = [1.0, 0.3, 0.6];
        assert_eq!(
            mask_with_scores(&sparse, &p1, &p2).unwrap().values,
            mask_with_scores(&dense, &p1, &p2).unwrap().values
        );
        assert_eq!(sparse.detector_values(), dense.detector_values());
    }

    #[test]
    fn submatrix_zero_fill_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_seq("a", 4, 8, &mut rng);
        let s = dense_map(&a, &a).unwrap();
        let all: Vec<usize> = (0..4).collect();
        assert_eq!(keyframe_submatrix(&s, &all, &all, SubmatrixMode::ZeroFill).unwrap(), s);
        let b = random_seq("b", 2, 8, &mut rng);
        let s2 = dense_map(&b, &b).unwrap();
        let z = keyframe_submatrix(&s2, &[0], &[0], SubmatrixMode::ZeroFill).unwrap();
        assert_eq!(z.dense_values()[1..], [0.0, 0.0, 0.0]);
        assert_eq!(z.get(0, 0), s2.get(0, 0));
        assert!(matches!(
            keyframe_submatrix(&s2, &[], &[0], SubmatrixMode::Drop),
            Err(Error::EmptyKeyframes(_))
        ));
        assert!(keyframe_submatrix(&s2, &[5], &[0], SubmatrixMode::Drop).is_err());
    }

    /// Bounding box of cells at or above `thr`, in (possibly compacted) map
    /// coordinates `[x1, y1, x2, y2]`.
    fn support_box(m: &SimilarityMap, thr: f32) -> Option<[f64; 4]> {
        let mut b: Option<[f64; 4]> = None;
        for (i, j, v) in m.cells() {
            if v >= thr {
                let (x, y) = (j as f64, i as f64);
                b = Some(match b {
                    None => [x, y, x + 1.0, y + 1.0],
                    Some(o) => [o[0].min(x), o[1].min(y), o[2].max(x + 1.0), o[3].max(y + 1.0)],
                });
            }
        }
        b
    }

    #[test]
    fn drop_mode_back_projection_matches_zero_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(4..20);
            let mut values = vec![0.0f32; n * n];
            let (lo, hi) = (rng.random_range(0..n / 2), rng.random_range(n / 2..n));
            for i in lo..=hi {
                values[i * n + i] = 0.9;
            }
            let s = SimilarityMap::from_dense("q", "r", n, n, (8.0, 8.0), values).unwrap();
            let k1: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).chain([lo]).collect();
            let k2: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).chain([lo]).collect();
            let zero = keyframe_submatrix(&s, &k1, &k2, SubmatrixMode::ZeroFill).unwrap();
            let dropped = keyframe_submatrix(&s, &k1, &k2, SubmatrixMode::Drop).unwrap();
            let (Some(zb), Some(db)) = (support_box(&zero, 0.5), support_box(&dropped, 0.5)) else {
                assert_eq!(support_box(&zero, 0.5).is_some(), support_box(&dropped, 0.5).is_some());
                continue;
            };
            let mapped = [
                dropped.col_coord_to_frame(db[0]),
                dropped.row_coord_to_frame(db[1]),
                dropped.col_end_to_frame(db[2]),
                dropped.row_end_to_frame(db[3]),
            ];
            for k in 0..4 {
                assert!((mapped[k] - zb[k]).abs() <= 1.0, "{mapped:?} vs {zb:?}");
            }
        }
    }

    #[test]
    fn tiling_examples() {
        assert_eq!(tile_offsets(128, 128), vec![0]);
        assert_eq!(tile_offsets(16, 128), vec![0]);
        assert_eq!(tile_offsets(200, 128), vec![0, 64, 72]);
        let values = vec![0.5; 16 * 16];
        let tiles = prepare_detector_input(&values, 16, 16, 128).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0].data[15], 0.5);
        assert_eq!(tiles[0].data[16], 0.0);
        assert_eq!(tiles[0].data[16 * 128], 0.0);
    }

    #[test]
    fn tiles_cover_every_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let rows = rng.random_range(1..400);
            let cols = rng.random_range(1..400);
            let size = [16, 32, 64, 128][rng.random_range(0..4)];
            let values = vec![1.0; rows * cols];
            let tiles = prepare_detector_input(&values, rows, cols, size).unwrap();
            let mut covered = vec![false; rows * cols];
            for t in &tiles {
                for y in 0..size.min(rows - t.row_offset) {
                    for x in 0..size.min(cols - t.col_offset) {
                        assert_eq!(t.data[y * size + x], 1.0);
                        covered[(t.row_offset + y) * cols + t.col_offset + x] = true;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c));
            let offs = tile_offsets(rows, size);
            for w in offs.windows(2) {
                assert!(w[1] - w[0] <= size / 2);
            }
        }
    }

    #[test]
    fn pgm_header_and_scaling() {
        let bytes = pgm_bytes(&[0.0, 0.5, 1.0, -0.3], 2, 2);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255, 0]);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{dot, FeatureStore};

use super::{top_hits, Hit, IndexRows, KeyframeSets, VectorIndex};

/// Inverted-file index with a spherical k-means coarse quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    rows: IndexRows,
    k_c: usize,
    centroids: Vec<f32>,
    lists: Vec<Vec<u32>>,
    trained: bool,
    /// Probe count used through the [`VectorIndex`] trait.
    pub nprobe: usize,
}

impl IvfIndex {
    /// Untrained index over `rows`; call [`IvfIndex::train`] before searching.
    pub fn new(rows: IndexRows, k_c: usize) -> Result<Self> {
        if k_c == 0 || k_c > rows.len() {
            return Err(Error::invalid(format!(
                "centroid count {k_c} must be in 1..={}",
                rows.len()
            )));
        }
        Ok(Self {
            rows,
            k_c,
            centroids: Vec::new(),
            lists: Vec::new(),
            trained: false,
            nprobe: 1,
        })
    }

    pub fn build(
        store: &FeatureStore,
        keys: Option<&KeyframeSets>,
        k_c: usize,
        iters: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut idx = Self::new(IndexRows::gather(store, keys)?, k_c)?;
        idx.train(iters, seed);
        Ok(idx)
    }

    pub(crate) fn from_parts(
        rows: IndexRows,
        centroids: Vec<f32>,
        lists: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let k_c = lists.len();
        if centroids.len() != k_c * rows.dim {
            return Err(Error::format("SGIX", "centroid block size"));
        }
        let mut seen = vec![false; rows.len()];
        for &r in lists.iter().flatten() {
            match seen.get_mut(r as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::format("SGIX", "posting lists are not a partition")),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::format("SGIX", "posting lists are not a partition"));
        }
        Ok(Self {
            rows,
            k_c,
            centroids,
            lists,
            trained: true,
            nprobe: 1,
        })
    }

    pub fn rows(&self) -> &IndexRows {
        &self.rows
    }

    pub fn k_c(&self) -> usize {
        self.k_c
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn with_nprobe(mut self, nprobe: usize) -> Self {
        self.nprobe = nprobe;
        self
    }

    fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.rows.dim..(c + 1) * self.rows.dim]
    }

    /// Seeded k-means++ initialisation followed by Lloyd iterations on the
    /// unit sphere. Stops early once assignments are stable.
    pub fn train(&mut self, iters: usize, seed: u64) {
        let dim = self.rows.dim;
        let n = self.rows.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = vec![false; n];
        let first = rng.random_range(0..n);
        chosen[first] = true;
        let mut centroids = self.rows.row(first).to_vec();
        let mut d2: Vec<f64> = (0..n)
            .map(|r| sq_dist(self.rows.row(r), self.rows.row(first)))
            .collect();
        for _ in 1..self.k_c {
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random_range(0.0..total);
                let mut pick = None;
                for (r, &d) in d2.iter().enumerate() {
                    if d > 0.0 && !chosen[r] {
                        if u < d {
                            pick = Some(r);
                            break;
                        }
                        u -= d;
                    }
                }
                // rounding can walk past the last positive weight
                pick.or_else(|| (0..n).rev().find(|&r| d2[r] > 0.0 && !chosen[r]))
            } else {
                None
            };
            let pick = pick.unwrap_or_else(|| (0..n).find(|&r| !chosen[r]).expect("k_c <= rows"));
            chosen[pick] = true;
            let c = self.rows.row(pick);
            centroids.extend_from_slice(c);
            for (r, d) in d2.iter_mut().enumerate() {
                *d = d.min(sq_dist(self.rows.row(r), c));
            }
        }
        self.centroids = centroids;

        let mut assign = vec![usize::MAX; n];
        for _ in 0..iters.max(1) {
            let next: Vec<usize> = (0..n).map(|r| self.nearest_centroid(self.rows.row(r))).collect();
            let stable = next == assign;
            assign = next;
            if stable {
                break;
            }
            let mut sums = vec![0.0f64; self.k_c * dim];
            for (r, &c) in assign.iter().enumerate() {
                for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(self.rows.row(r)) {
                    *s += x as f64;
                }
            }
            for c in 0..self.k_c {
                let s = &sums[c * dim..(c + 1) * dim];
                let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (dst, &x) in self.centroids[c * dim..(c + 1) * dim].iter_mut().zip(s) {
                        *dst = (x / norm) as f32;
                    }
                }
            }
        }
        let assign: Vec<usize> = (0..n).map(|r| self.nearest_centroid(self.rows.row(r))).collect();
        self.lists = vec![Vec::new(); self.k_c];
        for (r, &c) in assign.iter().enumerate() {
            self.lists[c].push(r as u32);
        }
        self.trained = true;
    }

    fn nearest_centroid(&self, v: &[f32]) -> usize {
        let mut best = 0;
        let mut best_s = f32::NEG_INFINITY;
        for c in 0..self.k_c {
            let s = dot(v, self.centroid(c));
            if s > best_s {
                best_s = s;
                best = c;
            }
        }
        best
    }

    /// Exact top-N over the rows of the `nprobe` nearest posting lists.
    pub fn search_nprobe(&self, q: &[f32], top_n: usize, nprobe: usize) -> Result<Vec<Hit>> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.rows.check_query(q)?;
        if nprobe == 0 || nprobe > self.k_c {
            return Err(Error::invalid(format!("nprobe {nprobe} must be in 1..={}", self.k_c)));
        }
        let mut order: Vec<(f32, usize)> = (0..self.k_c).map(|c| (dot(q, self.centroid(c)), c)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let hits = order[..nprobe]
            .iter()
            .flat_map(|&(_, c)| self.lists[c].iter())
            .map(|&r| {
                let r = r as usize;
                self.rows.hit(r, dot(q, self.rows.row(r)))
            })
            .collect();
        Ok(top_hits(hits, top_n))
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

impl VectorIndex for IvfIndex {
    fn dim(&self) -> usize {
        self.rows.dim
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn search(&self, q: &[f32], top_n: usize) -> Result<Vec<Hit>> {
        self.search_nprobe(q, top_n, self.nprobe.clamp(1, self.k_c))
    }
}

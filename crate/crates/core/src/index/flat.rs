use crate::error::Result;
use crate::features::{dot, FeatureStore};

use super::{top_hits, Hit, IndexRows, KeyframeSets, VectorIndex};

/// Exhaustive inner-product index.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    rows: IndexRows,
}

impl FlatIndex {
    pub fn build(store: &FeatureStore, keys: Option<&KeyframeSets>) -> Result<Self> {
        Ok(Self {
            rows: IndexRows::gather(store, keys)?,
        })
    }

    pub fn from_rows(rows: IndexRows) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &IndexRows {
        &self.rows
    }
}

impl VectorIndex for FlatIndex {
    fn dim(&self) -> usize {
        self.rows.dim
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn search(&self, q: &[f32], top_n: usize) -> Result<Vec<Hit>> {
        self.rows.check_query(q)?;
        let hits = (0..self.rows.len())
            .map(|r| self.rows.hit(r, dot(q, self.rows.row(r))))
            .collect();
        Ok(top_hits(hits, top_n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::features::FeatureSequence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(videos: usize, frames: usize, dim: usize, seed: u64) -> FeatureStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureStore::from_sequences((0..videos).map(|v| {
            let data = (0..frames * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            FeatureSequence::new(format!("v{v}"), 8.0, dim, data).unwrap()
        }))
        .unwrap()
    }

    #[test]
    fn builds_expected_rows() {
        let s = store(3, 10, 4, 1);
        let all = FlatIndex::build(&s, None).unwrap();
        assert_eq!(all.len(), 30);
        let keys: KeyframeSets = ["v0", "v1", "v2"]
            .iter()
            .map(|id| (id.to_string(), vec![7, 2]))
            .collect();
        let idx = FlatIndex::build(&s, Some(&keys)).unwrap();
        assert_eq!(idx.len(), 6);
        let refs: Vec<(String, usize)> = idx
            .rows()
            .refs
            .iter()
            .map(|r| (r.video_id.clone(), r.frame_index))
            .collect();
        assert_eq!(refs[0], ("v0".to_string(), 2));
        assert_eq!(refs[5], ("v2".to_string(), 7));
        assert_eq!(idx.rows().row(1), s.get("v0").unwrap().frame(7));
        assert_eq!(FlatIndex::build(&s, Some(&keys)).unwrap(), idx);
        let mut bad = keys.clone();
        bad.insert("nope".into(), vec![0]);
        assert!(matches!(FlatIndex::build(&s, Some(&bad)), Err(Error::UnknownVideo(_))));
    }

    #[test]
    fn indexed_vector_ranks_first() {
        let s = store(2, 20, 16, 2);
        let idx = FlatIndex::build(&s, None).unwrap();
        let q = s.get("v1").unwrap().frame(5);
        let hits = idx.search(q, 3).unwrap();
        assert_eq!(hits[0].frame.video_id, "v1");
        assert_eq!(hits[0].frame.frame_index, 5);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        assert_eq!(idx.search(q, 1000).unwrap().len(), 40);
    }

    #[test]
    fn errors_on_empty_or_wrong_dim() {
        let empty = FlatIndex::build(&FeatureStore::new(), None).unwrap();
        assert!(matches!(empty.search(&[1.0], 1), Err(Error::EmptyIndex)));
        let idx = FlatIndex::build(&store(1, 2, 4, 3), None).unwrap();
        assert!(matches!(idx.search(&[1.0, 0.0], 1), Err(Error::DimMismatch { .. })));
    }
}

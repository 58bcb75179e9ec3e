use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FeatureStore};
use crate::simmap::{SimilarityMap, SparseEntry};

use super::{Hit, VectorIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub query_video_id: String,
    pub keyframe_indices: Vec<usize>,
    pub top_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupOptions {
    /// Hits scoring below this are dropped before grouping.
    pub score_floor: f32,
    pub allow_self: bool,
}

impl Default for GroupOptions {
    fn default() -> Self {
        Self {
            score_floor: 0.5,
            allow_self: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub ref_video_id: String,
    /// `(query frame index, hit)` in query-frame then rank order.
    pub hits: Vec<(usize, Hit)>,
}

/// Searches every query keyframe and buckets the hits by reference video.
/// Groups come back sorted by reference id.
pub fn plan_and_group(
    plan: &QueryPlan,
    store: &FeatureStore,
    index: &dyn VectorIndex,
    opts: &GroupOptions,
) -> Result<Vec<CandidateGroup>> {
    if plan.keyframe_indices.is_empty() {
        return Err(Error::EmptyKeyframes("query plan"));
    }
    let query = store.require(&plan.query_video_id)?;
    let mut frames = plan.keyframe_indices.clone();
    frames.sort_unstable();
    frames.dedup();
    let mut buckets: BTreeMap<String, Vec<(usize, Hit)>> = BTreeMap::new();
    for &i in &frames {
        if i >= query.len() {
            return Err(Error::OutOfRange {
                index: i,
                len: query.len(),
                context: "query keyframe",
            });
        }
        for hit in index.search(query.frame(i), plan.top_n)? {
            if hit.score < opts.score_floor {
                continue;
            }
            if !opts.allow_self && hit.frame.video_id == plan.query_video_id {
                continue;
            }
            buckets.entry(hit.frame.video_id.clone()).or_default().push((i, hit));
        }
    }
    Ok(buckets
        .into_iter()
        .map(|(ref_video_id, hits)| CandidateGroup { ref_video_id, hits })
        .collect())
}

/// Sparse query × reference map holding the group's hit scores.
pub fn sparse_map_from_group(
    group: &CandidateGroup,
    query: &FeatureSequence,
    reference: &FeatureSequence,
) -> Result<SimilarityMap> {
    if reference.video_id() != group.ref_video_id {
        return Err(Error::invalid(format!(
            "group is for `{}`, got `{}`",
            group.ref_video_id,
            reference.video_id()
        )));
    }
    let entries = group
        .hits
        .iter()
        .map(|(qi, h)| SparseEntry {
            row: *qi as u32,
            col: h.frame.frame_index as u32,
            value: h.score.clamp(-1.0, 1.0),
        })
        .collect();
    SimilarityMap::from_sparse(
        query.video_id(),
        reference.video_id(),
        query.len(),
        reference.len(),
        (query.basis_fps(), reference.basis_fps()),
        entries,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{FlatIndex, FrameRef};
    use crate::simmap::dense_map;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(seed: u64) -> FeatureStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureStore::from_sequences((0..5).map(|v| {
            let data = (0..12 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
            FeatureSequence::new(format!("v{v}"), 8.0, 8, data).unwrap()
        }))
        .unwrap()
    }

    #[test]
    fn groups_match_bucketing_oracle() {
        let s = random_store(1);
        let idx = FlatIndex::build(&s, None).unwrap();
        let plan = QueryPlan {
            query_video_id: "v2".into(),
            keyframe_indices: vec![9, 0, 3, 3, 11],
            top_n: 7,
        };
        let opts = GroupOptions {
            score_floor: 0.1,
            allow_self: false,
        };
        let groups = plan_and_group(&plan, &s, &idx, &opts).unwrap();
        let mut oracle: BTreeMap<String, usize> = BTreeMap::new();
        for i in [0, 3, 9, 11] {
            for h in idx.search(s.get("v2").unwrap().frame(i), 7).unwrap() {
                if h.score >= 0.1 && h.frame.video_id != "v2" {
                    *oracle.entry(h.frame.video_id).or_default() += 1;
                }
            }
        }
        let got: BTreeMap<String, usize> = groups
            .iter()
            .map(|g| (g.ref_video_id.clone(), g.hits.len()))
            .collect();
        assert_eq!(got, oracle);
        assert!(groups.iter().all(|g| g.hits.iter().all(|(_, h)| h.frame.video_id == g.ref_video_id)));
    }

    #[test]
    fn self_retrieval_gives_diagonal() {
        let s = random_store(2);
        let idx = FlatIndex::build(&s, None).unwrap();
        let plan = QueryPlan {
            query_video_id: "v1".into(),
            keyframe_indices: (0..12).collect(),
            top_n: 1,
        };
        let opts = GroupOptions {
            score_floor: 0.5,
            allow_self: true,
        };
        let groups = plan_and_group(&plan, &s, &idx, &opts).unwrap();
        assert_eq!(groups.len(), 1);
        let q = s.get("v1").unwrap();
        let m = sparse_map_from_group(&groups[0], q, q).unwrap();
        for i in 0..12 {
            assert!((m.get(i, i) - 1.0).abs() < 1e-6);
        }
        let excluded = plan_and_group(&plan, &s, &idx, &GroupOptions::default()).unwrap();
        assert!(excluded.is_empty());
    }

    #[test]
    fn duplicate_cells_keep_max() {
        let s = random_store(3);
        let hit = |f: usize, score: f32| Hit {
            frame: FrameRef {
                video_id: "v0".into(),
                frame_index: f,
                timestamp: f as f64 / 8.0,
            },
            score,
        };
        let g = CandidateGroup {
            ref_video_id: "v0".into(),
            hits: vec![(3, hit(7, 0.8)), (3, hit(7, 0.9)), (1, hit(2, 0.6))],
        };
        let q = s.get("v1").unwrap();
        let m = sparse_map_from_group(&g, q, s.get("v0").unwrap()).unwrap();
        assert_eq!(m.get(3, 7), 0.9);
        assert_eq!(m.get(1, 2), 0.6);
        assert_eq!(m.cells().count(), 2);
    }

    #[test]
    fn sparse_map_is_contained_in_dense() {
        let s = random_store(4);
        let idx = FlatIndex::build(&s, None).unwrap();
        let plan = QueryPlan {
            query_video_id: "v0".into(),
            keyframe_indices: (0..12).collect(),
            top_n: 10,
        };
        let opts = GroupOptions {
            score_floor: -1.0,
            allow_self: false,
        };
        let q = s.get("v0").unwrap();
        for g in plan_and_group(&plan, &s, &idx, &opts).unwrap() {
            let r = s.get(&g.ref_video_id).unwrap();
            let sparse = sparse_map_from_group(&g, q, r).unwrap();
            let dense = dense_map(q, r).unwrap();
            for (i, j, v) in sparse.cells() {
                assert_eq!(v, dense.get(i, j));
            }
        }
    }
}

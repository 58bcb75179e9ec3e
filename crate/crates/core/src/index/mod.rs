//! Top-N search over keyframe embeddings and candidate-pair assembly.
//!
//! Two index kinds share the same row layout: [`FlatIndex`] scans every row,
//! [`IvfIndex`] restricts the scan to the posting lists of the nearest
//! coarse centroids. Both return hits in the same total order, so a full
//! probe of the IVF index reproduces the flat result exactly.

mod flat;
mod group;
mod io;
mod ivf;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureStore;

pub use flat::FlatIndex;
pub use group::{plan_and_group, sparse_map_from_group, CandidateGroup, GroupOptions, QueryPlan};
pub use io::{load_index, save_index, AnyIndex, SGIX_MAGIC, SGIX_VERSION};
pub use ivf::IvfIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: usize,
    /// Seconds.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub frame: FrameRef,
    pub score: f32,
}

/// Score descending, then video id and frame index ascending.
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.frame.video_id.cmp(&b.frame.video_id))
        .then_with(|| a.frame.frame_index.cmp(&b.frame.frame_index))
}

/// Selected frames per video id. `None` in builders means every frame.
pub type KeyframeSets = BTreeMap<String, Vec<usize>>;

pub trait VectorIndex: Send + Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn search(&self, q: &[f32], top_n: usize) -> Result<Vec<Hit>>;
}

/// Contiguous row storage shared by both index kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRows {
    pub dim: usize,
    pub vectors: Vec<f32>,
    pub refs: Vec<FrameRef>,
}

impl IndexRows {
    /// Gathers rows in video-id order, frames ascending within a video.
    pub fn gather(store: &FeatureStore, keys: Option<&KeyframeSets>) -> Result<Self> {
        let dim = store.dim().unwrap_or(0);
        if let Some(keys) = keys {
            for (id, frames) in keys {
                let seq = store.require(id)?;
                if frames.is_empty() {
                    return Err(Error::EmptyKeyframes("index keyframe set"));
                }
                if let Some(&f) = frames.iter().find(|&&f| f >= seq.len()) {
                    return Err(Error::OutOfRange {
                        index: f,
                        len: seq.len(),
                        context: "index keyframe",
                    });
                }
            }
        }
        let mut vectors = Vec::new();
        let mut refs = Vec::new();
        for seq in store.iter() {
            let frames: Vec<usize> = match keys {
                None => (0..seq.len()).collect(),
                Some(k) => match k.get(seq.video_id()) {
                    None => continue,
                    Some(f) => {
                        let mut f = f.clone();
                        f.sort_unstable();
                        f.dedup();
                        f
                    }
                },
            };
            for i in frames {
                vectors.extend_from_slice(seq.frame(i));
                refs.push(FrameRef {
                    video_id: seq.video_id().to_string(),
                    frame_index: i,
                    timestamp: seq.timestamp(i),
                });
            }
        }
        Ok(Self { dim, vectors, refs })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub(crate) fn check_query(&self, q: &[f32]) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if q.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: q.len(),
                context: "index query".into(),
            });
        }
        Ok(())
    }

    pub(crate) fn hit(&self, r: usize, score: f32) -> Hit {
        Hit {
            frame: self.refs[r].clone(),
            score,
        }
    }
}

/// Keeps the `top_n` best hits in [`hit_order`].
pub(crate) fn top_hits(mut hits: Vec<Hit>, top_n: usize) -> Vec<Hit> {
    if top_n < hits.len() {
        if top_n == 0 {
            return Vec::new();
        }
        hits.select_nth_unstable_by(top_n - 1, hit_order);
        hits.truncate(top_n);
    }
    hits.sort_by(hit_order);
    hits
}

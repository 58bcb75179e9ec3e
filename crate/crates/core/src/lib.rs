//! Segment-level video alignment over frame-feature similarity maps.
//!
//! Features are L2-normalized per-frame embeddings. Query and reference
//! videos are compared through cosine similarity maps, optionally thinned by
//! learned keyframe scores, and copied segments are recovered either with
//! classic temporal-alignment baselines or with a small convolutional
//! detector that regresses boxes directly on the map.

mod binio;
pub mod align;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod hashing;
pub mod index;
pub mod keyframe;
pub mod optim;
pub mod parallel;
pub mod pipeline;
pub mod simmap;
pub mod spd;
pub mod ssan;
pub mod synth;

pub use error::{Error, Result};
pub use features::{cosine_sim, FeatureSequence, FeatureStore};
pub use simmap::{dense_map, SimilarityMap};

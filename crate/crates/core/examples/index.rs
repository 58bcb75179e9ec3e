//! Frame index: flat and inverted-file search over gallery keyframes, with
//! IVF recall against the exhaustive result as the probe count grows.
//!
//! ```text
//! cargo run --release --example index
//! ```

use std::collections::BTreeSet;

use segalign::index::{FlatIndex, IvfIndex, VectorIndex};
use segalign::synth::{make_distractor, SynthConfig};
use segalign::FeatureStore;

fn main() -> anyhow::Result<()> {
    let cfg = SynthConfig::default();
    let gallery = FeatureStore::from_sequences((0..40).map(|i| make_distractor(&cfg, i)).collect::<Result<Vec<_>, _>>()?)?;
    let probe = make_distractor(&cfg, 1000)?;
    let queries: Vec<&[f32]> = (0..probe.len()).step_by(5).map(|i| probe.frame(i)).collect();
    println!("{} gallery frames, {} queries", gallery.total_frames(), queries.len());

    let flat = FlatIndex::build(&gallery, None)?;
    let ivf = IvfIndex::build(&gallery, None, 16, 20, 7)?;
    let truth: Vec<BTreeSet<_>> = queries
        .iter()
        .map(|q| Ok(flat.search(q, 20)?.into_iter().map(|h| (h.frame.video_id, h.frame.frame_index)).collect()))
        .collect::<segalign::Result<_>>()?;

    for nprobe in [1, 2, 4, 8, 16] {
        let start = std::time::Instant::now();
        let mut found = 0;
        for (q, t) in queries.iter().zip(&truth) {
            found += ivf
                .search_nprobe(q, 20, nprobe)?
                .iter()
                .filter(|h| t.contains(&(h.frame.video_id.clone(), h.frame.frame_index)))
                .count();
        }
        let recall = found as f64 / (20 * queries.len()) as f64;
        println!("nprobe {nprobe:>2}: recall@20 {recall:.3} in {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
    }

    let top = flat.search(queries[0], 3)?;
    for h in top {
        println!("{} frame {} at {:.2}s score {:.3}", h.frame.video_id, h.frame.frame_index, h.frame.timestamp, h.score);
    }
    Ok(())
}

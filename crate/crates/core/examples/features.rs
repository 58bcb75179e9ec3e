//! Frame embeddings: build sequences, round-trip them through the SGAF
//! container and compare frames by cosine similarity.
//!
//! ```text
//! cargo run --release --example features
//! ```

use segalign::{cosine_sim, FeatureSequence, FeatureStore};

fn main() -> anyhow::Result<()> {
    // two 3-frame clips in 4 dimensions; rows are L2-normalized on entry
    let a = FeatureSequence::from_rows(
        "clip_a",
        8.0,
        &[vec![1.0, 0.0, 0.0, 0.0], vec![0.9, 0.1, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
    )?;
    let b = FeatureSequence::from_rows(
        "clip_b",
        8.0,
        &[vec![0.0, 1.0, 0.1, 0.0], vec![0.0, 0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 0.1]],
    )?;
    for i in 0..a.len() {
        let sims: Vec<String> = (0..b.len())
            .map(|j| Ok(format!("{:+.3}", cosine_sim(a.frame(i), b.frame(j))?)))
            .collect::<anyhow::Result<_>>()?;
        println!("a[{i}] @ {:.3}s vs b: {}", a.timestamp(i), sims.join(" "));
    }

    let store = FeatureStore::from_sequences([a, b])?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("clips.sgaf");
    store.save(&path)?;
    let back = segalign::features::ingest(&path)?;
    println!(
        "{} videos, {} frames, dim {:?}; round trip equal: {}",
        back.len(),
        back.total_frames(),
        back.dim(),
        back == store
    );
    Ok(())
}

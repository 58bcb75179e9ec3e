//! Synthetic dataset directory: copy pairs under mixed temporal edits plus
//! distractor videos, written as SGAF features, annotation CSV and a
//! digest-checked manifest, then loaded back.
//!
//! ```text
//! cargo run --release --example synth_dataset -- [out_dir]
//! ```

use std::path::PathBuf;

use segalign::synth::{load_dataset, make_distractor, make_pairs, write_dataset, EditMix, SynthConfig};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("segalign_synth"));
    let cfg = SynthConfig::default();
    let mix = EditMix::default();
    let pairs = make_pairs(&cfg, &mix, 0..8, 1)?;
    let distractors = (0..4).map(|i| make_distractor(&cfg, i)).collect::<Result<Vec<_>, _>>()?;
    let manifest = write_dataset(&out, &cfg, &mix, &pairs, &distractors)?;
    println!(
        "{} pairs, {} distractors; copy cosine {:.3}, unrelated cosine {:.3}",
        manifest.pairs,
        manifest.distractors.len(),
        manifest.report.copy_cosine,
        manifest.report.random_cosine
    );
    for f in &manifest.files {
        println!("{:<16} {}", f.name, &f.sha256[..16]);
    }

    let data = load_dataset(&out)?;
    for (a, tags) in data.annotations.iter().zip(manifest.tags.iter().flatten()) {
        let s = a.segment;
        println!(
            "{} -> {}: q {:.2}-{:.2}s r {:.2}-{:.2}s [{tags}]",
            a.query_id, a.ref_id, s.q_start, s.q_end, s.r_start, s.r_end
        );
    }
    println!("loaded {} queries, {} gallery videos from {}", data.queries.len(), data.refs.len(), out.display());
    Ok(())
}

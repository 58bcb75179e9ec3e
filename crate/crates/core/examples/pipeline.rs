//! Full retrieval run: synthetic gallery, keyframes, index, candidate
//! search, alignment and evaluation, followed by verification of the
//! artifact hash chain.
//!
//! ```text
//! cargo run --release --example pipeline -- [out_dir] [hough|tn|dp|spd]
//! ```

use std::path::PathBuf;

use segalign::align::Method;
use segalign::config::RunConfig;
use segalign::pipeline::{run_pipeline, verify_run, RunInputs};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("segalign_run"));
    let method: Method = args.next().as_deref().unwrap_or("dp").parse()?;
    let cfg = RunConfig { method, ..RunConfig::default() };

    let report = run_pipeline(&cfg, &RunInputs::default(), &out)?;
    println!(
        "{} queries against {} gallery videos ({} frames, {} indexed, ratio {:.3})",
        report.queries, report.gallery_videos, report.gallery_frames, report.indexed_frames, report.compression_ratio
    );
    println!("{} candidate pairs, {} matches", report.candidate_pairs, report.matches);
    let e = &report.eval;
    println!(
        "segment f1 {:.4} (best {:.4}), mAP {}",
        e.f1,
        e.best_f1.unwrap_or(0.0),
        e.map.map_or("n/a".into(), |m| format!("{m:.4}"))
    );
    for t in &report.timings {
        println!("{:<10} {:>6.2}s", t.stage, t.seconds);
    }

    let v = verify_run(&out)?;
    println!("verified {} artifacts under config {}", v.artifacts, &v.config_hash[..12]);
    Ok(())
}

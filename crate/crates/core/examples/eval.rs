//! Evaluation: per-second segment F1 at a fixed threshold, the threshold
//! sweep, and video-level mAP from normalized pair scores.
//!
//! ```text
//! cargo run --release --example eval
//! ```

use std::collections::{BTreeMap, BTreeSet};

use segalign::align::{normalized_video_score, run_baseline, BaselineParams, Method};
use segalign::eval::{map_eval, rank_by_score, segment_f1, sweep_f1, PairSegments, Protocol};
use segalign::synth::{make_pairs, EditMix, SynthConfig};
use segalign::dense_map;

fn main() -> anyhow::Result<()> {
    let pairs = make_pairs(&SynthConfig::default(), &EditMix::default(), 0..12, 1)?;
    let params = BaselineParams::default();
    let protocol = Protocol::default();

    let mut gts = PairSegments::new();
    let mut preds = PairSegments::new();
    let mut scores: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    // every query against every reference, so ranking has negatives
    for q in &pairs {
        for r in &pairs {
            let m = dense_map(&q.query, &r.reference)?;
            let found = run_baseline(&m, Method::Dp, &params)?;
            let key = (q.query.video_id().to_string(), r.reference.video_id().to_string());
            scores
                .entry(key.0.clone())
                .or_default()
                .push((key.1.clone(), normalized_video_score(&found, q.query.len())));
            preds.insert(key, found);
        }
        gts.insert((q.query.video_id().to_string(), q.reference.video_id().to_string()), q.segments.clone());
    }

    let fixed = segment_f1(&preds, &gts, 0.0, &protocol);
    println!("dp at threshold 0: p {:.4} r {:.4} f1 {:.4}", fixed.precision, fixed.recall, fixed.f1);
    let (swept, curve) = sweep_f1(&preds, &gts, &protocol);
    println!(
        "sweep over {} thresholds: best f1 {:.4} at {:.3}",
        curve.len(),
        swept.best_f1.unwrap_or(0.0),
        swept.best_threshold.unwrap_or(f64::NAN)
    );

    let rankings = scores.into_iter().map(|(q, s)| (q, rank_by_score(s))).collect();
    let relevant: BTreeMap<String, BTreeSet<String>> = pairs
        .iter()
        .map(|p| (p.query.video_id().to_string(), BTreeSet::from([p.reference.video_id().to_string()])))
        .collect();
    let m = map_eval(&rankings, &relevant);
    println!("mAP {:.4} over {} queries", m.map, m.queries);
    Ok(())
}

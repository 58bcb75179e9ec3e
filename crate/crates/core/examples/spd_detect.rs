//! Pattern detector: train a small detector on synthetic dense maps, save it
//! as SGDM, reload it and detect copied segments on held-out pairs.
//!
//! ```text
//! cargo run --release --example spd_detect -- [train_pairs] [epochs]
//! ```

use segalign::eval::Protocol;
use segalign::experiment::{calibrate_threshold, spd_samples};
use segalign::optim::SgdConfig;
use segalign::spd::train::train_spd_with;
use segalign::spd::{detect_pair, load_detector, save_detector, DetectorConfig, DetectorParams};
use segalign::synth::{make_pairs, EditMix, SynthConfig};
use segalign::dense_map;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);
    let synth = SynthConfig::default();
    let mix = EditMix::default();

    let cfg = DetectorConfig::default();
    let train = make_pairs(&synth, &mix, 0..n, 1)?;
    let samples = spd_samples(&train, cfg.input_size, 1)?;
    println!("{} training tiles from {n} pairs", samples.len());
    let init = DetectorParams::init(&cfg)?;
    let sgd = SgdConfig { epochs, ..SgdConfig::default() };
    let (det, _) = train_spd_with(&samples, &init, &sgd, |e, s| {
        println!("epoch {e}: bce {:.4} giou {:.4}", s.l_bce, s.l_giou);
    })?;

    let mut det = det;
    let val = make_pairs(&synth, &mix, 400_000..400_020, 1)?;
    det.config.score_threshold = calibrate_threshold(&det, &val, 0.02, &Protocol::default(), 1)?;
    println!("calibrated threshold {:.3}", det.config.score_threshold);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("detector.sgdm");
    println!("saved {} parameters, sha256 {}", det.len(), save_detector(&det, &path)?);
    let det = load_detector(&path)?;

    for p in make_pairs(&synth, &mix, 100_000..100_005, 1)? {
        let m = dense_map(&p.query, &p.reference)?;
        let found = detect_pair(&det, &m)?.matches;
        let gt = p.segments[0];
        println!(
            "{}: truth q {:.1}-{:.1}s r {:.1}-{:.1}s ({})",
            p.query.video_id(),
            gt.q_start,
            gt.q_end,
            gt.r_start,
            gt.r_end,
            p.tags[0]
        );
        for s in found.iter().take(2) {
            println!("    found q {:.1}-{:.1}s r {:.1}-{:.1}s score {:.2}", s.q_start, s.q_end, s.r_start, s.r_end, s.score);
        }
    }
    Ok(())
}

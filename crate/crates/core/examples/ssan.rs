//! Joint keyframe scorer and detector: start from a briefly trained detector
//! and a teacher-fitted scorer, fine-tune through the keyframe mask and
//! compare the masked detections to the unmasked ones. The hard mask zeroes
//! most of the map, so a detector trained on dense maps usually finds little
//! behind it; the desk experiment compares soft-masked maps instead.
//!
//! ```text
//! cargo run --release --example ssan -- [detector.sgdm]
//! ```

use segalign::eval::Protocol;
use segalign::experiment::{calibrate_threshold, spd_samples, ssan_samples};
use segalign::keyframe::{train_scorer, ScorerExample, ScorerParams, TeacherParams};
use segalign::optim::SgdConfig;
use segalign::spd::{detect_pair, load_detector, train_spd, DetectorConfig, DetectorParams};
use segalign::ssan::{ssan_forward, train_ssan_with, SsanConfig, SsanParams};
use segalign::synth::{make_pairs, EditMix, SynthConfig};
use segalign::dense_map;

fn main() -> anyhow::Result<()> {
    let synth = SynthConfig::default();
    let train = make_pairs(&synth, &EditMix::default(), 0..40, 1)?;
    let teacher = TeacherParams::default();

    let detector = match std::env::args().nth(1) {
        Some(path) => load_detector(path)?,
        None => {
            let cfg = DetectorConfig::default();
            let tiles = spd_samples(&make_pairs(&synth, &EditMix::default(), 0..120, 1)?, cfg.input_size, 1)?;
            train_spd(&tiles, &DetectorParams::init(&cfg)?, &SgdConfig { epochs: 20, ..SgdConfig::default() })?.0
        }
    };

    let examples: Vec<ScorerExample> = train
        .iter()
        .flat_map(|p| [ScorerExample::from_teacher(&p.query, &teacher), ScorerExample::from_teacher(&p.reference, &teacher)])
        .collect();
    let scorer = train_scorer(&examples, ScorerParams::default(), &SgdConfig { lr: 0.5, epochs: 400, weight_decay: 0.0, ..SgdConfig::default() })?;

    let cfg = SsanConfig::default();
    let samples = ssan_samples(&train, &teacher, 1)?;
    let sgd = SgdConfig { lr: 0.005, epochs: 3, ..SgdConfig::default() };
    let (mut joint, _) = train_ssan_with(&samples, &SsanParams { scorer, detector }, &sgd, &cfg, |e, s| {
        println!("epoch {e}: spd {:.4} ske {:.4} compression {:.3}", s.stats.l_spd, s.stats.l_ske, s.compression_ratio);
    })?;
    let val = make_pairs(&synth, &EditMix::default(), 400_000..400_020, 1)?;
    joint.detector.config.score_threshold = calibrate_threshold(&joint.detector, &val, 0.02, &Protocol::default(), 1)?;

    for p in make_pairs(&synth, &EditMix::default(), 100_000..100_004, 1)? {
        let m = dense_map(&p.query, &p.reference)?;
        let masked = ssan_forward(&joint, &p.query, &p.reference, &m, &cfg)?;
        let plain = detect_pair(&joint.detector, &m)?;
        let kept = masked.row_scores.iter().filter(|&&s| s >= cfg.keyframe_threshold).count();
        println!(
            "{}: {kept}/{} query keyframes, {} masked vs {} unmasked detections",
            p.query.video_id(),
            p.query.len(),
            masked.detections.matches.len(),
            plain.matches.len()
        );
    }
    Ok(())
}

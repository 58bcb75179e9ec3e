//! End-to-end desk experiment on synthetic pairs: dense detector against
//! the classical aligners, keyframe compression, joint training and the
//! two-segment check.
//!
//! ```text
//! cargo run --release --example desk_experiment -- [out_dir]
//! ```

use std::path::PathBuf;

use segalign::experiment::{run_desk, DeskConfig, MethodScore};

fn row(label: &str, s: &MethodScore) {
    println!(
        "{label:<22} f1 {:.4}  best {:.4} @ {:.3}  ratio {:.3}",
        s.f1, s.best_f1, s.best_threshold, s.compression_ratio
    );
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let cfg = DeskConfig::default();
    let (report, models) = run_desk(&cfg, &mut |line| eprintln!("{line}"))?;

    println!("operating threshold {:.3}", report.operating_threshold);
    row("spd", &report.spd);
    row("dp", &report.dp);
    row("hough", &report.hough);
    row("tn", &report.tn);
    row("accel spd", &report.accel_spd);
    row("accel hough", &report.accel_hough);
    row("accel dp", &report.accel_dp);
    row("teacher (untuned)", &report.teacher_untuned);
    row("teacher", &report.teacher);
    row("ssan joint", &report.ssan_joint);
    row("ssan frozen", &report.ssan_frozen);
    row("ssan joint hard", &report.ssan_joint_hard);
    row("ssan frozen hard", &report.ssan_frozen_hard);
    let m = &report.multi;
    println!("two-segment pairs {}/{} matched, {} with two or more matches", m.matched, m.pairs, m.two_or_more);
    for (stage, t) in &report.timings {
        println!("{stage:<14} {t:>7.1}s");
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("desk_report.json"), serde_json::to_string_pretty(&report)?)?;
        segalign::spd::save_detector(&models.detector, dir.join("detector.sgdm"))?;
        segalign::ssan::save_ssan(&models.ssan_joint, dir.join("ssan.sgsm"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

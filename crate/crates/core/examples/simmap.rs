//! Similarity maps of a synthetic copy pair: dense map, a keyframe-compacted
//! submatrix and grayscale PGM dumps of both.
//!
//! ```text
//! cargo run --release --example simmap -- [out_dir]
//! ```

use std::path::PathBuf;

use segalign::simmap::{keyframe_submatrix, write_pgm, SubmatrixMode};
use segalign::synth::{make_pair_with, SynthConfig, TemporalEdit};
use segalign::dense_map;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let pair = make_pair_with(&SynthConfig::default(), &[TemporalEdit::Accelerate { k: 2 }], 0)?;
    let m = dense_map(&pair.query, &pair.reference)?;
    println!("{} x {} map, max similarity {:.3}", m.rows(), m.cols(), m.max_value());
    for s in &pair.segments {
        println!("copied: q {:.2}-{:.2}s  r {:.2}-{:.2}s", s.q_start, s.q_end, s.r_start, s.r_end);
    }

    let rows: Vec<usize> = (0..m.rows()).step_by(4).collect();
    let cols: Vec<usize> = (0..m.cols()).step_by(4).collect();
    let sub = keyframe_submatrix(&m, &rows, &cols, SubmatrixMode::Drop)?;
    println!("every 4th frame: {} x {}", sub.rows(), sub.cols());

    std::fs::create_dir_all(&out)?;
    write_pgm(&m, out.join("dense.pgm"))?;
    write_pgm(&sub, out.join("compacted.pgm"))?;
    println!("wrote dense.pgm and compacted.pgm to {}", out.display());
    Ok(())
}

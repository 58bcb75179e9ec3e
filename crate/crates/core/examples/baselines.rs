//! Classical aligners on one synthetic pair per temporal edit: temporal
//! Hough voting, the temporal network and the diagonal-block DP.
//!
//! ```text
//! cargo run --release --example baselines
//! ```

use segalign::align::{run_baseline, BaselineParams, Method};
use segalign::dense_map;
use segalign::synth::{make_pair_with, SynthConfig, TemporalEdit};

fn main() -> anyhow::Result<()> {
    let edits = [
        TemporalEdit::Clip,
        TemporalEdit::Accelerate { k: 2 },
        TemporalEdit::Decelerate { k: 2 },
        TemporalEdit::Drop { p: 0.3 },
    ];
    let params = BaselineParams::default();
    for (i, edit) in edits.iter().enumerate() {
        let pair = make_pair_with(&SynthConfig::default(), &[*edit], i)?;
        let gt = pair.segments[0];
        println!(
            "{edit:?}: truth q {:.2}-{:.2}s r {:.2}-{:.2}s",
            gt.q_start, gt.q_end, gt.r_start, gt.r_end
        );
        let m = dense_map(&pair.query, &pair.reference)?;
        for method in [Method::Hough, Method::Tn, Method::Dp] {
            let found = run_baseline(&m, method, &params)?;
            match found.first() {
                Some(s) => println!(
                    "  {method:?}: {} matches, best q {:.2}-{:.2}s r {:.2}-{:.2}s score {:.2}",
                    found.len(),
                    s.q_start,
                    s.q_end,
                    s.r_start,
                    s.r_end,
                    s.score
                ),
                None => println!("  {method:?}: no match"),
            }
        }
    }
    Ok(())
}

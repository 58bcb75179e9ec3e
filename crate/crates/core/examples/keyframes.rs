//! Keyframe selection: teacher labels, a scorer fitted to them, and the
//! compression each achieves with the sparse-uniform interval.
//!
//! ```text
//! cargo run --release --example keyframes
//! ```

use segalign::keyframe::{
    compression_ratio, labels_to_indices, score_frames, select_keyframes, sparse_uniform_interpolate,
    teacher_select, train_scorer, ScorerExample, ScorerParams, TeacherParams,
};
use segalign::optim::SgdConfig;
use segalign::synth::{make_pairs, EditMix, SynthConfig};

fn main() -> anyhow::Result<()> {
    let pairs = make_pairs(&SynthConfig::default(), &EditMix::default(), 0..20, 1)?;
    let videos: Vec<_> = pairs.iter().flat_map(|p| [&p.query, &p.reference]).collect();
    let teacher = TeacherParams::default();

    let examples: Vec<ScorerExample> = videos.iter().map(|v| ScorerExample::from_teacher(v, &teacher)).collect();
    let sgd = SgdConfig { lr: 0.5, epochs: 400, weight_decay: 0.0, ..SgdConfig::default() };
    let scorer = train_scorer(&examples, ScorerParams::default(), &sgd)?;
    println!("scorer weights {:.3?} bias {:.3}", scorer.weights, scorer.bias);

    let (mut t_kept, mut s_kept, mut total) = (0, 0, 0);
    for v in &videos {
        let labels = sparse_uniform_interpolate(&teacher_select(v, &teacher), 8);
        t_kept += labels_to_indices(&labels).len();
        s_kept += select_keyframes(&score_frames(v, &scorer).scores, 0.5, Some(8)).len();
        total += v.len();
    }
    println!("teacher keeps {:.3} of frames", compression_ratio(t_kept, total));
    println!("scorer keeps {:.3} of frames", compression_ratio(s_kept, total));

    let v = videos[0];
    let picked = select_keyframes(&score_frames(v, &scorer).scores, 0.5, Some(8));
    println!("{}: {} of {} frames, first few {:?}", v.video_id(), picked.len(), v.len(), &picked[..picked.len().min(10)]);
    Ok(())
}

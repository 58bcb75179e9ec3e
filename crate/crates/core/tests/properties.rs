use proptest::prelude::*;

use segalign::align::{dp_best_path, DpParams, SegmentMatch};
use segalign::eval::{segment_f1, PairSegments, Protocol};
use segalign::index::{hit_order, FlatIndex, IvfIndex, VectorIndex};
use segalign::keyframe::{select_keyframes, sparse_uniform_interpolate};
use segalign::simmap::{keyframe_submatrix, SparseEntry, SubmatrixMode};
use segalign::spd::{giou, iou, BBox};
use segalign::ssan::{effective_scores, masked_values};
use segalign::{FeatureSequence, FeatureStore, SimilarityMap};

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
}

fn store(data: &[Vec<f32>], frames: usize, dim: usize) -> FeatureStore {
    FeatureStore::from_sequences(
        data.iter()
            .enumerate()
            .map(|(v, d)| FeatureSequence::new(format!("v{v}"), 8.0, dim, d[..frames * dim].to_vec()).unwrap()),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn giou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let g = giou(&a, &b);
        prop_assert!((g - giou(&b, &a)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&g));
        prop_assert!(g <= iou(&a, &b) + 1e-12);
    }

    #[test]
    fn search_returns_sorted_prefix(
        data in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 40), 3),
        q in prop::collection::vec(-1.0f32..1.0, 4),
        top in 1usize..15,
    ) {
        let s = store(&data, 10, 4);
        let hits = FlatIndex::build(&s, None).unwrap().search(&q, top).unwrap();
        prop_assert_eq!(hits.len(), top.min(30));
        prop_assert!(hits.windows(2).all(|w| hit_order(&w[0], &w[1]).is_lt()));
        let more = FlatIndex::build(&s, None).unwrap().search(&q, 30).unwrap();
        prop_assert_eq!(&more[..hits.len()], &hits[..]);
    }

    #[test]
    fn full_probe_ivf_equals_flat(
        data in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 48), 4),
        q in prop::collection::vec(-1.0f32..1.0, 4),
        k_c in 1usize..6,
        seed in 0u64..100,
    ) {
        let s = store(&data, 12, 4);
        let flat = FlatIndex::build(&s, None).unwrap().search(&q, 10).unwrap();
        let ivf = IvfIndex::build(&s, None, k_c, 10, seed).unwrap();
        prop_assert_eq!(ivf.search_nprobe(&q, 10, k_c).unwrap(), flat);
    }

    #[test]
    fn interpolation_fills_every_window(labels in prop::collection::vec(any::<bool>(), 0..80), interval in 1usize..12) {
        let out = sparse_uniform_interpolate(&labels, interval);
        prop_assert!(labels.iter().zip(&out).all(|(a, b)| !a || *b));
        for w in out.chunks(interval) {
            prop_assert!(w.iter().any(|&b| b));
        }
    }

    #[test]
    fn selection_is_sorted_and_nonempty(scores in prop::collection::vec(0.0..1.0f64, 1..60), t in 0.0..1.0f64) {
        let keys = select_keyframes(&scores, t, Some(8));
        prop_assert!(!keys.is_empty());
        prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(scores.iter().enumerate().all(|(i, &s)| s < t || keys.contains(&i)));
    }

    #[test]
    fn effective_scores_dominate_raw(scores in prop::collection::vec(0.0..1.0f64, 1..40), interval in prop::option::of(1usize..6)) {
        let (e, pass) = effective_scores(&scores, interval);
        for i in 0..scores.len() {
            prop_assert!(e[i] >= scores[i]);
            prop_assert!((0.0..=1.0).contains(&e[i]));
            if interval.is_some_and(|k| i % k == 0) {
                prop_assert_eq!(e[i], 1.0);
                prop_assert!(!pass[i]);
            }
        }
    }

    #[test]
    fn masking_never_raises_values(
        base in prop::collection::vec(0.0..1.0f64, 12),
        p1 in prop::collection::vec(0.0..1.0f64, 3),
        p2 in prop::collection::vec(0.0..1.0f64, 4),
    ) {
        let m = masked_values(&base, &p1, &p2);
        prop_assert!(m.iter().zip(&base).all(|(a, b)| a <= b));
        let ones = masked_values(&base, &[1.0; 3], &[1.0; 4]);
        prop_assert_eq!(ones, base);
    }

    #[test]
    fn dp_path_is_monotone_and_banded(
        values in prop::collection::vec(0.0..1.0f64, 64),
        band in prop::option::of(0usize..3),
        gap in 0.0..0.3f64,
    ) {
        let p = DpParams { min_sim: 0.5, gap_penalty: gap, band_width: band, ..DpParams::default() };
        if let Some(path) = dp_best_path(&values, 8, 8, &p, &[false; 64]) {
            prop_assert!(path.score > 0.0);
            let (i0, j0) = path.cells[0];
            for w in path.cells.windows(2) {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(matches!((di, dj), (1, 1) | (1, 0) | (0, 1)));
            }
            if let Some(b) = band {
                for &(i, j) in &path.cells {
                    let drift = (j as i64 - i as i64) - (j0 as i64 - i0 as i64);
                    prop_assert!(drift.unsigned_abs() as usize <= b);
                }
            }
            // recomputed along the path
            let mut s = 0.0;
            for (k, &(i, j)) in path.cells.iter().enumerate() {
                if k > 0 && (i - path.cells[k - 1].0) + (j - path.cells[k - 1].1) == 1 {
                    s -= gap;
                }
                s += values[i * 8 + j] - 0.5;
            }
            prop_assert!((s - path.score).abs() < 1e-9);
        }
    }

    #[test]
    fn perfect_predictions_score_one(
        q in 0.0..30.0f64, qlen in 2.0..20.0f64, r in 0.0..30.0f64, rlen in 2.0..20.0f64,
    ) {
        let seg = SegmentMatch { q_start: q, q_end: q + qlen, r_start: r, r_end: r + rlen, score: 1.0 };
        let gts: PairSegments = [(("a".to_string(), "b".to_string()), vec![seg])].into_iter().collect();
        let rep = segment_f1(&gts, &gts, 0.0, &Protocol::default());
        prop_assert!((rep.f1 - 1.0).abs() < 1e-12);
        let empty = PairSegments::new();
        prop_assert_eq!(segment_f1(&empty, &gts, 0.0, &Protocol::default()).f1, 0.0);
    }

    #[test]
    fn transpose_is_an_involution(cells in prop::collection::vec((0u32..6, 0u32..9, -1.0f32..1.0), 0..30)) {
        let entries = cells.iter().map(|&(row, col, value)| SparseEntry { row, col, value }).collect();
        let m = SimilarityMap::from_sparse("q", "r", 6, 9, (8.0, 8.0), entries).unwrap();
        prop_assert_eq!(m.transpose().transpose(), m.clone());
        prop_assert_eq!(m.densify().transpose().dense_values().len(), 54);
    }
}

#[test]
fn submatrix_keeps_selected_cells() {
    let values: Vec<f32> = (0..20).map(|v| v as f32 / 20.0).collect();
    let m = SimilarityMap::from_dense("q", "r", 4, 5, (8.0, 8.0), values).unwrap();
    let sub = keyframe_submatrix(&m, &[0, 2], &[1, 4], SubmatrixMode::Drop).unwrap();
    assert_eq!((sub.rows(), sub.cols()), (2, 2));
    assert_eq!(sub.dense_values(), vec![m.get(0, 1), m.get(0, 4), m.get(2, 1), m.get(2, 4)]);
}

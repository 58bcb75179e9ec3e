//! Objectness BCE plus GIoU regression on the raw grid predictions.

use serde::{Deserialize, Serialize};

use super::boxes::{decode_cell, decode_cell_backward, giou_with_grad, BBox};
use super::net::OUTPUTS;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingStats {
    pub l_bce: f64,
    pub l_giou: f64,
    pub l_spd: f64,
    pub l_ske: f64,
    pub l_ssan: f64,
}

impl TrainingStats {
    pub fn add(&mut self, o: &TrainingStats) {
        self.l_bce += o.l_bce;
        self.l_giou += o.l_giou;
        self.l_spd += o.l_spd;
        self.l_ske += o.l_ske;
        self.l_ssan += o.l_ssan;
    }

    pub fn scaled(&self, f: f64) -> TrainingStats {
        TrainingStats {
            l_bce: self.l_bce * f,
            l_giou: self.l_giou * f,
            l_spd: self.l_spd * f,
            l_ske: self.l_ske * f,
            l_ssan: self.l_ssan * f,
        }
    }
}

/// Cell-to-ground-truth assignment on an `n × n` grid with stride `s`.
///
/// A cell is positive for a box when the cell center lies within one stride
/// of the box center on both axes, which is exactly the region the decoder
/// can reach. Cells claimed by several boxes go to the nearest center, ties
/// to the lower box index.
pub fn assign_cells(gt: &[BBox], n: usize, s: f64) -> Vec<Option<usize>> {
    let mut out = vec![None; n * n];
    let mut best = vec![f64::INFINITY; n * n];
    for (k, b) in gt.iter().enumerate() {
        let cx = (b[0] + b[2]) / 2.0;
        let cy = (b[1] + b[3]) / 2.0;
        for v in 0..n {
            let dy = (v as f64 + 0.5) * s - cy;
            if dy.abs() >= s {
                continue;
            }
            for u in 0..n {
                let dx = (u as f64 + 0.5) * s - cx;
                if dx.abs() >= s {
                    continue;
                }
                let d = dx * dx + dy * dy;
                let cell = v * n + u;
                if d < best[cell] {
                    best[cell] = d;
                    out[cell] = Some(k);
                }
            }
        }
    }
    out
}

/// Numerically stable binary cross-entropy on a logit.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}

/// Loss on one tile's predictions `[5][n][n]` and its gradient with respect
/// to those predictions.
pub fn spd_loss(preds: &[f64], n: usize, gt: &[BBox], giou_weight: f64) -> (TrainingStats, Vec<f64>) {
    let s = super::net::STRIDE as f64;
    let plane = n * n;
    debug_assert_eq!(preds.len(), OUTPUTS * plane);
    let assign = assign_cells(gt, n, s);
    let mut grad = vec![0.0; preds.len()];

    let mut bce = 0.0;
    for cell in 0..plane {
        let z = preds[cell];
        let t = if assign[cell].is_some() { 1.0 } else { 0.0 };
        bce += bce_with_logit(z, t);
        let p = 1.0 / (1.0 + (-z).exp());
        grad[cell] = (p - t) / plane as f64;
    }
    let l_bce = bce / plane as f64;

    let positives = assign.iter().filter(|a| a.is_some()).count();
    let mut l_giou = 0.0;
    if positives > 0 {
        let scale = giou_weight / positives as f64;
        let mut total = 0.0;
        for (cell, a) in assign.iter().enumerate() {
            let Some(k) = a else { continue };
            let (u, v) = (cell % n, cell / n);
            let t = [
                preds[plane + cell],
                preds[2 * plane + cell],
                preds[3 * plane + cell],
                preds[4 * plane + cell],
            ];
            let b = decode_cell(u, v, &t, s);
            let (g, dg) = giou_with_grad(&b, &gt[*k]);
            total += 1.0 - g;
            let g_box = [-scale * dg[0], -scale * dg[1], -scale * dg[2], -scale * dg[3]];
            let gt_ = decode_cell_backward(&t, s, &g_box);
            for j in 0..4 {
                grad[(j + 1) * plane + cell] = gt_[j];
            }
        }
        l_giou = scale * total;
    }
    let l_spd = l_bce + l_giou;
    (
        TrainingStats {
            l_bce,
            l_giou,
            l_spd,
            l_ske: 0.0,
            l_ssan: l_spd,
        },
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::boxes::{encode_cell, giou};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn saturated_negatives_cost_nothing() {
        let n = 4;
        let mut preds = vec![0.0; OUTPUTS * n * n];
        preds[..n * n].iter_mut().for_each(|z| *z = -20.0);
        let (s, _) = spd_loss(&preds, n, &[], 1.0);
        assert!(s.l_spd < 1e-8);
        assert_eq!(s.l_giou, 0.0);
    }

    #[test]
    fn perfect_whole_tile_box() {
        let n = 4;
        let gt = [0.0, 0.0, 32.0, 32.0];
        let assign = assign_cells(&[gt], n, 8.0);
        assert_eq!(assign.iter().filter(|a| a.is_some()).count(), 4);
        let mut preds = vec![0.0; OUTPUTS * n * n];
        for cell in 0..n * n {
            preds[cell] = if assign[cell].is_some() { 20.0 } else { -20.0 };
            if assign[cell].is_some() {
                let t = encode_cell(cell % n, cell / n, &gt, 8.0).unwrap();
                for j in 0..4 {
                    preds[(j + 1) * n * n + cell] = t[j];
                }
            }
        }
        let (s, _) = spd_loss(&preds, n, &[gt], 1.0);
        assert!(s.l_giou <= 1e-6);
        assert_eq!(s.l_spd, s.l_bce + s.l_giou);
    }

    #[test]
    fn nearest_center_wins_conflicts() {
        let a = [0.0, 0.0, 16.0, 16.0];
        let b = [0.0, 0.0, 18.0, 18.0];
        let assign = assign_cells(&[a, b], 4, 8.0);
        // cell (1,1) center (12,12): a center (8,8) d²=32, b center (9,9) d²=18
        assert_eq!(assign[5], Some(1));
        let same = assign_cells(&[a, a], 4, 8.0);
        assert!(same.iter().flatten().all(|&k| k == 0));
    }

    /// Loss recomputed cell by cell from definitions.
    fn oracle(preds: &[f64], n: usize, gt: &[BBox], w: f64) -> (f64, f64) {
        let plane = n * n;
        let assign = assign_cells(gt, n, 8.0);
        let mut bce = 0.0;
        let mut gi = 0.0;
        let mut pos = 0;
        for cell in 0..plane {
            let p = 1.0 / (1.0 + (-preds[cell]).exp());
            match assign[cell] {
                Some(k) => {
                    bce -= p.ln();
                    pos += 1;
                    let t = [1, 2, 3, 4].map(|j| preds[j * plane + cell]);
                    gi += 1.0 - giou(&decode_cell(cell % n, cell / n, &t, 8.0), &gt[k]);
                }
                None => bce -= (1.0 - p).ln(),
            }
        }
        (bce / plane as f64, if pos > 0 { w * gi / pos as f64 } else { 0.0 })
    }

    #[test]
    fn matches_scalar_oracle_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let n = 4;
            let preds: Vec<f64> = (0..OUTPUTS * n * n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let gt: Vec<BBox> = (0..rng.random_range(0..3))
                .map(|_| {
                    let (x, y) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
                    [x, y, x + rng.random_range(2.0..12.0), y + rng.random_range(2.0..12.0)]
                })
                .collect();
            let (s, grad) = spd_loss(&preds, n, &gt, 0.7);
            let (ob, og) = oracle(&preds, n, &gt, 0.7);
            assert!((s.l_bce - ob).abs() < 1e-8 && (s.l_giou - og).abs() < 1e-8);
            let f = |p: &[f64]| spd_loss(p, n, &gt, 0.7).0.l_spd;
            for k in 0..preds.len() {
                let mut a = preds.clone();
                a[k] += 1e-6;
                let mut b = preds.clone();
                b[k] -= 1e-6;
                let num = (f(&a) - f(&b)) / 2e-6;
                assert!((num - grad[k]).abs() < 1e-6, "{k}: {num} vs {}", grad[k]);
            }
        }
    }

    #[test]
    fn no_positives_means_dead_box_branch() {
        let preds = vec![0.3; OUTPUTS * 16];
        let (_, grad) = spd_loss(&preds, 4, &[], 1.0);
        assert!(grad[16..].iter().all(|&g| g == 0.0));
    }
}

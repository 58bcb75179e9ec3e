//! Box geometry: cell decoding, its inverse, IoU, and GIoU with gradient.
//!
//! Boxes are `[x1, y1, x2, y2]` in map cells, `x` along the reference axis
//! and `y` along the query axis.

pub type BBox = [f64; 4];

pub fn area(b: &BBox) -> f64 {
    (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Generalized IoU. A zero union gives IoU 0; a zero enclosing area gives
/// no enclosure penalty.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    giou_with_grad(a, b).0
}

/// GIoU and its gradient with respect to the first box.
pub fn giou_with_grad(a: &BBox, b: &BBox) -> (f64, BBox) {
    let aw = (a[2] - a[0]).max(0.0);
    let ah = (a[3] - a[1]).max(0.0);
    let area_a = aw * ah;
    let area_b = area(b);

    let ix1 = a[0].max(b[0]);
    let iy1 = a[1].max(b[1]);
    let ix2 = a[2].min(b[2]);
    let iy2 = a[3].min(b[3]);
    let iw = (ix2 - ix1).max(0.0);
    let ih = (iy2 - iy1).max(0.0);
    let inter = iw * ih;
    let union = area_a + area_b - inter;

    let cw = a[2].max(b[2]) - a[0].min(b[0]);
    let ch = a[3].max(b[3]) - a[1].min(b[1]);
    let enclose = cw * ch;

    let iou = if union > 0.0 { inter / union } else { 0.0 };
    let penalty = if enclose > 0.0 { (enclose - union) / enclose } else { 0.0 };
    let value = iou - penalty;

    // d value / d (inter, area_a, enclose)
    let (mut d_inter, mut d_area) = (0.0, 0.0);
    if union > 0.0 {
        d_inter = (union + inter) / (union * union);
        d_area = -inter / (union * union);
    }
    let mut d_enc = 0.0;
    if enclose > 0.0 {
        d_inter -= 1.0 / enclose;
        d_area += 1.0 / enclose;
        d_enc = -union / (enclose * enclose);
    }

    let mut g = [0.0; 4];
    // area of the first box
    if a[2] > a[0] && a[3] > a[1] {
        g[0] -= d_area * ah;
        g[2] += d_area * ah;
        g[1] -= d_area * aw;
        g[3] += d_area * aw;
    }
    // intersection
    if iw > 0.0 && ih > 0.0 {
        if a[0] > b[0] {
            g[0] -= d_inter * ih;
        }
        if a[2] < b[2] {
            g[2] += d_inter * ih;
        }
        if a[1] > b[1] {
            g[1] -= d_inter * iw;
        }
        if a[3] < b[3] {
            g[3] += d_inter * iw;
        }
    }
    // enclosing box
    if a[0] < b[0] {
        g[0] -= d_enc * ch;
    }
    if a[2] > b[2] {
        g[2] += d_enc * ch;
    }
    if a[1] < b[1] {
        g[1] -= d_enc * cw;
    }
    if a[3] > b[3] {
        g[3] += d_enc * cw;
    }
    (value, g)
}

/// Decodes box parameters `t = [tx, ty, tw, th]` at grid cell `(u, v)`
/// (column, row) with stride `s`. No clamping.
pub fn decode_cell(u: usize, v: usize, t: &[f64; 4], s: f64) -> BBox {
    let cx = (u as f64 + 0.5 + t[0].tanh()) * s;
    let cy = (v as f64 + 0.5 + t[1].tanh()) * s;
    let w = s * t[2].exp();
    let h = s * t[3].exp();
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

/// Chain rule through [`decode_cell`]: maps a gradient on the box corners
/// to a gradient on `t`.
pub fn decode_cell_backward(t: &[f64; 4], s: f64, g_box: &BBox) -> [f64; 4] {
    let dcx = s * (1.0 - t[0].tanh().powi(2));
    let dcy = s * (1.0 - t[1].tanh().powi(2));
    let w = s * t[2].exp();
    let h = s * t[3].exp();
    [
        (g_box[0] + g_box[2]) * dcx,
        (g_box[1] + g_box[3]) * dcy,
        (g_box[2] - g_box[0]) * w / 2.0,
        (g_box[3] - g_box[1]) * h / 2.0,
    ]
}

/// Inverse of [`decode_cell`]; `None` when the box center is a full stride
/// or more from the cell center, or the box is empty.
pub fn encode_cell(u: usize, v: usize, b: &BBox, s: f64) -> Option<[f64; 4]> {
    let w = b[2] - b[0];
    let h = b[3] - b[1];
    if w <= 0.0 || h <= 0.0 {
        return None;
    }
    let ox = (b[0] + b[2]) / (2.0 * s) - u as f64 - 0.5;
    let oy = (b[1] + b[3]) / (2.0 * s) - v as f64 - 0.5;
    if ox.abs() >= 1.0 || oy.abs() >= 1.0 {
        return None;
    }
    Some([ox.atanh(), oy.atanh(), (w / s).ln(), (h / s).ln()])
}

/// Clamps a box into `[0, w] × [0, h]`.
pub fn clamp_box(b: &BBox, w: f64, h: f64) -> BBox {
    [
        b[0].clamp(0.0, w),
        b[1].clamp(0.0, h),
        b[2].clamp(0.0, w),
        b[3].clamp(0.0, h),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn giou_analytic_cases() {
        let a = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(giou(&a, &a), 1.0);
        assert!((giou(&a, &[2.0, 2.0, 3.0, 3.0]) + 7.0 / 9.0).abs() < 1e-12);
        let v = giou(&[0.0, 0.0, 2.0, 2.0], &[1.0, 1.0, 3.0, 3.0]);
        assert!((v + 5.0 / 63.0).abs() < 1e-12);
    }

    #[test]
    fn giou_degenerate_boxes_are_defined() {
        let p = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(giou(&p, &p), 0.0);
        let v = giou(&p, &[0.0, 0.0, 2.0, 2.0]);
        assert!(v.is_finite() && v <= 0.0);
    }

    #[test]
    fn giou_bounds_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_box = || {
            let x: f64 = rng.random_range(0.0..10.0);
            let y: f64 = rng.random_range(0.0..10.0);
            [x, y, x + rng.random_range(0.1..5.0), y + rng.random_range(0.1..5.0)]
        };
        for _ in 0..1000 {
            let (a, b) = (rand_box(), rand_box());
            let g = giou(&a, &b);
            assert_eq!(g, giou(&b, &a));
            assert!(g <= iou(&a, &b) + 1e-15 && g > -1.0 && g <= 1.0);
        }
    }

    #[test]
    fn giou_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
            let a = {
                let (x, y) = (r(0.0, 6.0), r(0.0, 6.0));
                [x, y, x + r(0.5, 4.0), y + r(0.5, 4.0)]
            };
            let b = {
                let (x, y) = (r(0.0, 6.0), r(0.0, 6.0));
                [x, y, x + r(0.5, 4.0), y + r(0.5, 4.0)]
            };
            let (_, g) = giou_with_grad(&a, &b);
            let h = 1e-6;
            for k in 0..4 {
                let mut p = a;
                p[k] += h;
                let mut m = a;
                m[k] -= h;
                let num = (giou(&p, &b) - giou(&m, &b)) / (2.0 * h);
                assert!((num - g[k]).abs() < 1e-6, "coord {k}: {num} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn decode_neutral_and_analytic() {
        assert_eq!(decode_cell(0, 0, &[0.0; 4], 8.0), [0.0, 0.0, 8.0, 8.0]);
        let b = decode_cell(2, 1, &[0.0, 0.0, 2f64.ln(), 0.0], 8.0);
        assert!((b[2] - b[0] - 16.0).abs() < 1e-12);
        assert_eq!((b[1], b[3]), (8.0, 16.0));
    }

    #[test]
    fn encode_inverts_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..3.0),
                rng.random_range(-2.0..3.0),
            ];
            let (u, v) = (rng.random_range(0..16), rng.random_range(0..16));
            let back = encode_cell(u, v, &decode_cell(u, v, &t, 8.0), 8.0).unwrap();
            for k in 0..4 {
                assert!((back[k] - t[k]).abs() < 1e-6, "{t:?} vs {back:?}");
            }
        }
        assert!(encode_cell(0, 0, &[20.0, 0.0, 30.0, 8.0], 8.0).is_none());
    }

    #[test]
    fn decode_backward_matches_finite_differences() {
        let t = [0.3, -0.7, 0.5, 1.2];
        let gb = [0.4, -1.1, 0.9, 0.2];
        let f = |t: &[f64; 4]| {
            let b = decode_cell(3, 2, t, 8.0);
            (0..4).map(|k| b[k] * gb[k]).sum::<f64>()
        };
        let g = decode_cell_backward(&t, 8.0, &gb);
        for k in 0..4 {
            let mut p = t;
            p[k] += 1e-6;
            let mut m = t;
            m[k] -= 1e-6;
            assert!(((f(&p) - f(&m)) / 2e-6 - g[k]).abs() < 1e-5);
        }
    }
}

//! Segment-level F1 under a per-second protocol, video-level mAP,
//! precision/recall sweeps, and annotated map images.
//!
//! Per-second protocol: a segment covers the cells `(k, j)` where `k` is a
//! query second whose center lies inside the segment and `j` is the
//! reference second its linear time mapping reaches at that center. Two
//! cells agree when they share `k` and their reference seconds differ by at
//! most one. Predicted cells are pooled per pair (overlapping predictions
//! count once); precision is the share of predicted cells agreeing with some
//! ground-truth cell and recall is the share of ground-truth cells agreeing
//! with some predicted cell.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::SegmentMatch;
use crate::error::Result;
use crate::simmap::SimilarityMap;
use crate::synth::Annotation;

/// `(query_id, ref_id)`.
pub type PairKey = (String, String);
pub type PairSegments = BTreeMap<PairKey, Vec<SegmentMatch>>;

/// A match tagged with its pair, one JSON object per line in match files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMatch {
    pub query_id: String,
    pub ref_id: String,
    #[serde(flatten)]
    pub segment: SegmentMatch,
}

pub fn group_matches(matches: &[PairMatch]) -> PairSegments {
    let mut out = PairSegments::new();
    for m in matches {
        out.entry((m.query_id.clone(), m.ref_id.clone()))
            .or_default()
            .push(m.segment);
    }
    out
}

pub fn group_annotations(anns: &[Annotation]) -> PairSegments {
    let mut out = PairSegments::new();
    for a in anns {
        out.entry((a.query_id.clone(), a.ref_id.clone()))
            .or_default()
            .push(a.segment);
    }
    out
}

pub fn flatten_matches(preds: &PairSegments) -> Vec<PairMatch> {
    preds
        .iter()
        .flat_map(|((q, r), segs)| {
            segs.iter().map(|s| PairMatch {
                query_id: q.clone(),
                ref_id: r.clone(),
                segment: *s,
            })
        })
        .collect()
}

pub fn write_pair_matches<W: Write>(mut w: W, matches: &[PairMatch]) -> Result<()> {
    for m in matches {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pair_matches<R: BufRead>(r: R) -> Result<Vec<PairMatch>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Discretization unit of the per-second protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    /// Cell length in seconds.
    pub unit: f64,
    /// Reference-axis tolerance in cells.
    pub ref_tolerance: i64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            unit: 1.0,
            ref_tolerance: 1,
        }
    }
}

/// Protocol cells `(query cell, reference cell)` of one segment. A segment
/// shorter than a cell still covers the cell holding its midpoint.
pub fn segment_cells(s: &SegmentMatch, p: &Protocol) -> Vec<(i64, i64)> {
    if !s.is_valid() {
        return Vec::new();
    }
    let u = p.unit;
    let slope = s.r_len() / s.q_len();
    let ref_cell = |t: f64| {
        let r = (s.r_start + (t - s.q_start) * slope).clamp(s.r_start, s.r_end);
        (r / u).floor() as i64
    };
    let first = (s.q_start / u - 0.5).ceil() as i64;
    let last = (s.q_end / u - 0.5).floor() as i64;
    if first > last {
        let mid = 0.5 * (s.q_start + s.q_end);
        return vec![((mid / u).floor() as i64, ref_cell(mid))];
    }
    (first..=last).map(|k| (k, ref_cell((k as f64 + 0.5) * u))).collect()
}

fn cell_set<'a>(segs: impl IntoIterator<Item = &'a SegmentMatch>, p: &Protocol) -> BTreeSet<(i64, i64)> {
    segs.into_iter().flat_map(|s| segment_cells(s, p)).collect()
}

fn agrees(cell: (i64, i64), set: &BTreeSet<(i64, i64)>, tol: i64) -> bool {
    set.range((cell.0, cell.1 - tol)..=(cell.0, cell.1 + tol)).next().is_some()
}

pub fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub query_id: String,
    pub ref_id: String,
    pub pred_cells: usize,
    pub correct_cells: usize,
    pub gt_cells: usize,
    pub recalled_cells: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Pooled over all pairs.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of per-pair F1 over pairs with ground truth.
    pub macro_f1: f64,
    pub score_threshold: f64,
    pub per_pair: Vec<PairScore>,
    pub map: Option<f64>,
    pub map_queries: usize,
    pub map_skipped: usize,
    pub pr_points: Vec<PrPoint>,
    pub best_threshold: Option<f64>,
    pub best_f1: Option<f64>,
    pub compression_ratio: Option<f64>,
}

/// Segment F1 for predictions with `score >= threshold`.
pub fn segment_f1(preds: &PairSegments, gts: &PairSegments, threshold: f64, p: &Protocol) -> EvalReport {
    let keys: BTreeSet<&PairKey> = preds.keys().chain(gts.keys()).collect();
    let mut per_pair = Vec::new();
    let (mut pc, mut cc, mut gc, mut rc) = (0, 0, 0, 0);
    let mut macro_sum = 0.0;
    let mut macro_n = 0usize;
    for key in keys {
        let pred = cell_set(
            preds.get(key).into_iter().flatten().filter(|s| s.score >= threshold),
            p,
        );
        let gt = cell_set(gts.get(key).into_iter().flatten(), p);
        let correct = pred.iter().filter(|&&c| agrees(c, &gt, p.ref_tolerance)).count();
        let recalled = gt.iter().filter(|&&c| agrees(c, &pred, p.ref_tolerance)).count();
        let precision = ratio(correct, pred.len());
        let recall = ratio(recalled, gt.len());
        let f1 = f1_of(precision, recall);
        if !gt.is_empty() {
            macro_sum += f1;
            macro_n += 1;
        }
        pc += pred.len();
        cc += correct;
        gc += gt.len();
        rc += recalled;
        per_pair.push(PairScore {
            query_id: key.0.clone(),
            ref_id: key.1.clone(),
            pred_cells: pred.len(),
            correct_cells: correct,
            gt_cells: gt.len(),
            recalled_cells: recalled,
            precision,
            recall,
            f1,
        });
    }
    let precision = ratio(cc, pc);
    let recall = ratio(rc, gc);
    EvalReport {
        precision,
        recall,
        f1: f1_of(precision, recall),
        macro_f1: if macro_n == 0 { 0.0 } else { macro_sum / macro_n as f64 },
        score_threshold: threshold,
        per_pair,
        ..EvalReport::default()
    }
}

/// Best pooled F1 over all score thresholds and the precision/recall curve.
/// Points run from the highest threshold down; the first point sits just
/// above the top score, where nothing is predicted.
pub fn sweep_f1(preds: &PairSegments, gts: &PairSegments, p: &Protocol) -> (EvalReport, Vec<PrPoint>) {
    // effective score of a predicted cell: best prediction covering it
    let mut pred_cells: Vec<(f64, bool)> = Vec::new();
    let mut gt_cells: Vec<f64> = Vec::new();
    let keys: BTreeSet<&PairKey> = preds.keys().chain(gts.keys()).collect();
    for key in keys {
        let mut best: HashMap<(i64, i64), f64> = HashMap::new();
        for s in preds.get(key).into_iter().flatten() {
            for c in segment_cells(s, p) {
                let e = best.entry(c).or_insert(f64::NEG_INFINITY);
                *e = e.max(s.score);
            }
        }
        let gt = cell_set(gts.get(key).into_iter().flatten(), p);
        let by_cell: BTreeMap<(i64, i64), f64> = best.into_iter().collect();
        for (&c, &score) in &by_cell {
            pred_cells.push((score, agrees(c, &gt, p.ref_tolerance)));
        }
        let tol = p.ref_tolerance;
        for &(k, j) in &gt {
            let s = by_cell
                .range((k, j - tol)..=(k, j + tol))
                .map(|(_, &s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            gt_cells.push(s);
        }
    }
    let mut thresholds: Vec<f64> = pred_cells.iter().map(|c| c.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    pred_cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut gt_sorted = gt_cells.clone();
    gt_sorted.sort_by(|a, b| b.total_cmp(a));

    let total_gt = gt_cells.len();
    let mut curve = vec![PrPoint {
        threshold: thresholds.first().map_or(f64::MAX, |&t| t.next_up()),
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    }];
    let (mut pi, mut gi, mut npred, mut ncorrect) = (0, 0, 0usize, 0usize);
    for &t in &thresholds {
        while pi < pred_cells.len() && pred_cells[pi].0 >= t {
            npred += 1;
            ncorrect += pred_cells[pi].1 as usize;
            pi += 1;
        }
        while gi < gt_sorted.len() && gt_sorted[gi] >= t {
            gi += 1;
        }
        let precision = ratio(ncorrect, npred);
        let recall = ratio(gi, total_gt);
        curve.push(PrPoint {
            threshold: t,
            precision,
            recall,
            f1: f1_of(precision, recall),
        });
    }
    // first maximum in descending-threshold order
    let best = curve
        .iter()
        .skip(1)
        .fold(None::<&PrPoint>, |acc, pt| match acc {
            Some(b) if b.f1 >= pt.f1 => Some(b),
            _ => Some(pt),
        })
        .copied();
    let threshold = best.map_or(f64::INFINITY, |b| b.threshold);
    let mut report = segment_f1(preds, gts, threshold, p);
    if best.is_none() {
        report.score_threshold = curve[0].threshold;
    }
    report.best_threshold = best.map(|b| b.threshold);
    report.best_f1 = Some(best.map_or(0.0, |b| b.f1));
    report.pr_points = curve.clone();
    (report, curve)
}

/// Uninterpolated average precision of one ranked list: precision at the
/// rank of every relevant item, summed and divided by the number of
/// relevant items (missing items contribute zero).
pub fn average_precision(ranked: &[String], relevant: &BTreeSet<String>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    let mut seen = BTreeSet::new();
    for (rank, id) in ranked.iter().enumerate() {
        if relevant.contains(id) && seen.insert(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub map: f64,
    pub queries: usize,
    /// Queries without relevant items, left out of the mean.
    pub skipped: usize,
}

/// Sorts `(id, score)` by score descending, ties by id.
pub fn rank_by_score(mut items: Vec<(String, f64)>) -> Vec<String> {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.into_iter().map(|(id, _)| id).collect()
}

pub fn map_eval(rankings: &BTreeMap<String, Vec<String>>, relevant: &BTreeMap<String, BTreeSet<String>>) -> MapResult {
    let empty = BTreeSet::new();
    let mut sum = 0.0;
    let (mut n, mut skipped) = (0, 0);
    let queries: BTreeSet<&String> = rankings.keys().chain(relevant.keys()).collect();
    for q in queries {
        let ranked = rankings.get(q).map_or(&[][..], Vec::as_slice);
        match average_precision(ranked, relevant.get(q).unwrap_or(&empty)) {
            Some(ap) => {
                sum += ap;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    MapResult {
        map: if n == 0 { 0.0 } else { sum / n as f64 },
        queries: n,
        skipped,
    }
}

const GREEN: [u8; 3] = [0, 255, 0];
const RED: [u8; 3] = [255, 0, 0];

fn outline(pix: &mut [u8], w: usize, h: usize, b: &[f64; 4], color: [u8; 3]) {
    if w == 0 || h == 0 || !(b[2] > b[0] && b[3] > b[1]) {
        return;
    }
    let lo = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n);
    let hi = |v: f64, n: usize| ((v.ceil() as i64 - 1).max(-1)).min(n as i64 - 1);
    let (x0, y0) = (lo(b[0], w), lo(b[1], h));
    let (x1, y1) = (hi(b[2], w), hi(b[3], h));
    if x1 < 0 || y1 < 0 || x0 >= w || y0 >= h {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    let mut put = |x: usize, y: usize| pix[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&color);
    // edges only drawn when the box side lies inside the image
    let (l, r) = (b[0] >= 0.0, b[2] <= w as f64);
    let (t, btm) = (b[1] >= 0.0, b[3] <= h as f64);
    for x in x0..=x1 {
        if t {
            put(x, y0);
        }
        if btm {
            put(x, y1);
        }
    }
    for y in y0..=y1 {
        if l {
            put(x0, y);
        }
        if r {
            put(x1, y);
        }
    }
}

/// Binary PPM of a map (grayscale, 0 black to 1 white, negatives black)
/// with ground-truth boxes in green and predictions in red. Boxes are in
/// map cells, `x` along the reference axis.
pub fn map_image_bytes(m: &SimilarityMap, gt: &[[f64; 4]], pred: &[[f64; 4]]) -> Vec<u8> {
    let (w, h) = (m.cols(), m.rows());
    let mut pix = Vec::with_capacity(w * h * 3);
    for v in m.dense_values() {
        let g = crate::simmap::to_gray(v as f64);
        pix.extend_from_slice(&[g, g, g]);
    }
    for b in gt {
        outline(&mut pix, w, h, b, GREEN);
    }
    for b in pred {
        outline(&mut pix, w, h, b, RED);
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pix);
    out
}

/// Map-cell box of a second-based segment on `m`'s axes (dense maps only).
pub fn segment_box(m: &SimilarityMap, s: &SegmentMatch) -> [f64; 4] {
    let (qf, rf) = (m.query_fps as f64, m.ref_fps as f64);
    [s.r_start * rf, s.q_start * qf, s.r_end * rf, s.q_end * qf]
}

pub fn dump_map_image(m: &SimilarityMap, gt: &[[f64; 4]], pred: &[[f64; 4]], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&map_image_bytes(m, gt, pred))?;
    w.flush()?;
    Ok(())
}

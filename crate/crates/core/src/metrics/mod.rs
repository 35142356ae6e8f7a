//! Detection scoring: IoU matching, precision/recall, 11-point interpolated
//! AP and mAP.

mod eval;
mod io;

pub use eval::{evaluate, ClassReport, EvalReport, ThresholdPolicy, DEFAULT_IOU_THRESHOLD};
pub use io::{label_stems, load_detections, load_ground_truth, parse_detections, parse_ground_truth};

use crate::error::{Error, Result};

/// Axis-aligned box in normalised centre format.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn from_xyxy(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox {
            cx: (x1 + x2) / 2.0,
            cy: (y1 + y2) / 2.0,
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    pub fn xyxy(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    /// Clips the box edges to the unit square.
    pub fn clipped(&self) -> Self {
        let (x1, y1, x2, y2) = self.xyxy();
        if x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0 {
            return *self;
        }
        BBox::from_xyxy(x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0), x2.clamp(0.0, 1.0), y2.clamp(0.0, 1.0))
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtBox {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub confidence: f64,
    pub bbox: BBox,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.xyxy();
    let (bx1, by1, bx2, by2) = b.xyxy();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchResult {
    /// Per detection, in input order.
    pub det_tp: Vec<bool>,
    /// Per ground-truth box, in input order.
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.det_tp.iter().filter(|&&t| t).count()
    }

    pub fn fp(&self) -> usize {
        self.det_tp.len() - self.tp()
    }

    pub fn fn_count(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }
}

/// Order in which detections are matched: confidence descending, input order
/// on ties.
pub fn ranking(confidences: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    order
}

/// Greedy matching of one image's detections against its ground truth, for
/// a single class. Each detection claims the unmatched GT with the highest
/// IoU (lowest index on ties) if that IoU reaches `iou_thr`.
pub fn match_detections(dets: &[BBox], confidences: &[f64], gts: &[BBox], iou_thr: f64) -> MatchResult {
    assert_eq!(dets.len(), confidences.len(), "one confidence per detection");
    let mut det_tp = vec![false; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for d in ranking(confidences) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] {
                continue;
            }
            let v = iou(&dets[d], gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= iou_thr {
                gt_matched[g] = true;
                det_tp[d] = true;
            }
        }
    }
    MatchResult { det_tp, gt_matched }
}

/// `(TP / (TP + FP), TP / (TP + FN))`, each 0 when its denominator is 0.
pub fn precision_recall(tp: usize, fp: usize, fn_count: usize) -> (f64, f64) {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    (ratio(tp, tp + fp), ratio(tp, tp + fn_count))
}

/// Precision/recall after each detection of a confidence-ranked TP/FP list.
pub fn pr_curve(ranked_tp: &[bool], n_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0;
    ranked_tp
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += usize::from(hit);
            let fp = i + 1 - tp;
            precision_recall(tp, fp, n_gt - tp)
        })
        .collect()
}

/// 11-point interpolated average precision of a confidence-ranked TP/FP list.
///
/// For each recall level `r = i/10`, takes the highest precision reached at
/// any rank whose recall is at least `r`. Recall comparisons use integer
/// arithmetic (`10·tp ≥ i·n_gt`), so levels such as 0.3 are hit exactly.
pub fn ap_11point(ranked_tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    // best[i]: max precision among ranks with recall ≥ i/10
    let mut best = [0.0f64; 11];
    let mut tp = 0usize;
    for (rank, &hit) in ranked_tp.iter().enumerate() {
        tp += usize::from(hit);
        let precision = tp as f64 / (rank + 1) as f64;
        for (i, b) in best.iter_mut().enumerate() {
            if 10 * tp >= i * n_gt && precision > *b {
                *b = precision;
            }
        }
    }
    best.iter().sum::<f64>() / 11.0
}

pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::invalid("mean_ap", "no classes to average"));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

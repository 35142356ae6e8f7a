use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;

use super::{ap_11point, match_detections, mean_ap, pr_curve, precision_recall, BBox, Detection, GtBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// How the single reported precision/recall pair is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdPolicy {
    /// Confidence threshold maximising F1 over all classes' pooled counts.
    MaxF1,
    Fixed(f64),
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "max-f1" {
            return Ok(ThresholdPolicy::MaxF1);
        }
        if let Some(t) = s.strip_prefix("fixed:") {
            let t: f64 = t
                .parse()
                .map_err(|_| Error::invalid("threshold policy", format!("bad threshold in {s:?}")))?;
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid("threshold policy", format!("threshold {t} outside [0, 1]")));
            }
            return Ok(ThresholdPolicy::Fixed(t));
        }
        Err(Error::invalid(
            "threshold policy",
            format!("unknown policy {s:?} (expected `max-f1` or `fixed:<t>`)"),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub n_gt: usize,
    /// Counts at the report's confidence threshold.
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
    /// Over all detections, independent of the threshold.
    pub ap: f64,
    /// `(precision, recall)` after each ranked detection.
    pub pr_curve: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    /// `None` when there are no detections to threshold.
    pub conf_threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    /// Mean AP over classes that have ground truth.
    pub map: f64,
    pub classes: Vec<ClassReport>,
}

struct ClassRanking {
    class_id: usize,
    n_gt: usize,
    /// `(confidence, tp)` in rank order.
    ranked: Vec<(f64, bool)>,
}

fn rank_class(class_id: usize, dets: &[&Detection], det_idx: &[usize], gts: &[&GtBox], iou_thr: f64) -> ClassRanking {
    let mut per_image: BTreeMap<&str, (Vec<usize>, Vec<BBox>)> = BTreeMap::new();
    for (k, d) in dets.iter().enumerate() {
        per_image.entry(d.image_id.as_str()).or_default().0.push(k);
    }
    for g in gts {
        per_image.entry(g.image_id.as_str()).or_default().1.push(g.bbox);
    }
    let mut flagged: Vec<(f64, usize, bool)> = Vec::with_capacity(dets.len());
    for (ks, gt_boxes) in per_image.values() {
        let boxes: Vec<BBox> = ks.iter().map(|&k| dets[k].bbox).collect();
        let confs: Vec<f64> = ks.iter().map(|&k| dets[k].confidence).collect();
        let m = match_detections(&boxes, &confs, gt_boxes, iou_thr);
        for (j, &k) in ks.iter().enumerate() {
            flagged.push((dets[k].confidence, det_idx[k], m.det_tp[j]));
        }
    }
    flagged.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    ClassRanking {
        class_id,
        n_gt: gts.len(),
        ranked: flagged.into_iter().map(|(c, _, t)| (c, t)).collect(),
    }
}

fn counts_at(r: &ClassRanking, thr: f64) -> (usize, usize, usize) {
    let kept = r.ranked.iter().take_while(|(c, _)| *c >= thr);
    let (mut tp, mut fp) = (0, 0);
    for (_, hit) in kept {
        if *hit {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    (tp, fp, r.n_gt - tp)
}

fn pooled_f1(rankings: &[ClassRanking], thr: f64) -> f64 {
    let (mut tp, mut fp, mut fn_count) = (0, 0, 0);
    for r in rankings {
        let c = counts_at(r, thr);
        tp += c.0;
        fp += c.1;
        fn_count += c.2;
    }
    let (p, r) = precision_recall(tp, fp, fn_count);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Scores `dets` against `gts`.
///
/// Detections are matched per image and class in confidence order. AP uses
/// every detection; the reported per-class and pooled precision/recall use
/// only detections at or above the threshold picked by `policy`.
pub fn evaluate(dets: &[Detection], gts: &[GtBox], iou_thr: f64, policy: ThresholdPolicy) -> Result<EvalReport> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::invalid("evaluate", format!("IoU threshold {iou_thr} outside (0, 1]")));
    }
    if let Some(d) = dets.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
        return Err(Error::invalid(
            "evaluate",
            format!("confidence {} on image {} outside [0, 1]", d.confidence, d.image_id),
        ));
    }
    if gts.is_empty() {
        return Err(Error::invalid("evaluate", "no ground-truth boxes"));
    }
    let mut by_class: BTreeMap<usize, (Vec<&Detection>, Vec<usize>, Vec<&GtBox>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        let e = by_class.entry(d.class_id).or_default();
        e.0.push(d);
        e.1.push(i);
    }
    for g in gts {
        by_class.entry(g.class_id).or_default().2.push(g);
    }
    let groups: Vec<(usize, _)> = by_class.into_iter().collect();
    let rankings: Vec<ClassRanking> = par::map_slice(&groups, |(c, (d, idx, g))| rank_class(*c, d, idx, g, iou_thr));

    let conf_threshold = match policy {
        ThresholdPolicy::Fixed(t) => Some(t),
        ThresholdPolicy::MaxF1 => {
            let mut candidates: Vec<f64> = dets.iter().map(|d| d.confidence).collect();
            candidates.sort_by(|a, b| b.total_cmp(a));
            candidates.dedup();
            let mut best: Option<(f64, f64)> = None;
            for t in candidates {
                let f1 = pooled_f1(&rankings, t);
                // strict: ties keep the higher threshold
                if best.is_none_or(|(_, b)| f1 > b) {
                    best = Some((t, f1));
                }
            }
            best.map(|(t, _)| t)
        }
    };
    let thr = conf_threshold.unwrap_or(f64::INFINITY);

    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    let mut classes = Vec::with_capacity(rankings.len());
    for r in &rankings {
        let (tp, fp, fn_count) = counts_at(r, thr);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_count;
        let (precision, recall) = precision_recall(tp, fp, fn_count);
        let flags: Vec<bool> = r.ranked.iter().map(|&(_, t)| t).collect();
        classes.push(ClassReport {
            class_id: r.class_id,
            n_gt: r.n_gt,
            tp,
            fp,
            fn_count,
            precision,
            recall,
            ap: ap_11point(&flags, r.n_gt),
            pr_curve: pr_curve(&flags, r.n_gt),
        });
    }
    let aps: Vec<f64> = classes.iter().filter(|c| c.n_gt > 0).map(|c| c.ap).collect();
    let (precision, recall) = precision_recall(tp_all, fp_all, fn_all);
    Ok(EvalReport {
        iou_threshold: iou_thr,
        conf_threshold,
        precision,
        recall,
        map: mean_ap(&aps)?,
        classes,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,tp,fp,fn,precision,recall,ap\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                c.class_id, c.tp, c.fp, c.fn_count, c.precision, c.recall, c.ap
            );
        }
        let _ = writeln!(out, "mAP,{:.6}", self.map);
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| class | TP | FP | FN | P | R | AP |\n|---|---|---|---|---|---|---|\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} |",
                c.class_id, c.tp, c.fp, c.fn_count, c.precision, c.recall, c.ap
            );
        }
        let thr = self.conf_threshold.map_or("n/a".to_string(), |t| format!("{t:.4}"));
        let _ = writeln!(
            out,
            "\nP = {:.4}, R = {:.4} at confidence ≥ {thr}; mAP@{} = {:.4}",
            self.precision, self.recall, self.iou_threshold, self.map
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(img: &str, class_id: usize, b: BBox) -> GtBox {
        GtBox {
            image_id: img.into(),
            class_id,
            bbox: b,
        }
    }

    fn det(img: &str, class_id: usize, confidence: f64, b: BBox) -> Detection {
        Detection {
            image_id: img.into(),
            class_id,
            confidence,
            bbox: b,
        }
    }

    #[test]
    fn perfect_detector() {
        let a = BBox::new(0.3, 0.3, 0.2, 0.2);
        let b = BBox::new(0.7, 0.6, 0.1, 0.3);
        let gts = vec![gt("x", 0, a), gt("x", 1, b), gt("y", 0, b)];
        let dets: Vec<Detection> = gts.iter().map(|g| det(&g.image_id, g.class_id, 0.9, g.bbox)).collect();
        let r = evaluate(&dets, &gts, 0.5, ThresholdPolicy::MaxF1).unwrap();
        assert_eq!((r.precision, r.recall, r.map), (1.0, 1.0, 1.0));
        for c in &r.classes {
            assert_eq!(c.tp + c.fn_count, c.n_gt);
        }
    }

    #[test]
    fn empty_detections() {
        let gts = vec![gt("x", 0, BBox::new(0.5, 0.5, 0.2, 0.2))];
        let r = evaluate(&[], &gts, 0.5, ThresholdPolicy::MaxF1).unwrap();
        assert_eq!((r.precision, r.recall, r.map), (0.0, 0.0, 0.0));
        assert_eq!(r.conf_threshold, None);
    }

    #[test]
    fn policies_parse() {
        assert_eq!("max-f1".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::MaxF1);
        assert_eq!("fixed:0.25".parse::<ThresholdPolicy>().unwrap(), ThresholdPolicy::Fixed(0.25));
        assert!("fixed:2".parse::<ThresholdPolicy>().is_err());
        assert!("best".parse::<ThresholdPolicy>().is_err());
    }

    #[test]
    fn fixed_threshold_drops_low_confidence() {
        let a = BBox::new(0.3, 0.3, 0.2, 0.2);
        let gts = vec![gt("x", 0, a), gt("y", 0, a)];
        let dets = vec![det("x", 0, 0.9, a), det("y", 0, 0.2, a)];
        let r = evaluate(&dets, &gts, 0.5, ThresholdPolicy::Fixed(0.5)).unwrap();
        assert_eq!((r.classes[0].tp, r.classes[0].fn_count), (1, 1));
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn csv_layout() {
        let a = BBox::new(0.3, 0.3, 0.2, 0.2);
        let r = evaluate(&[det("x", 0, 0.9, a)], &[gt("x", 0, a)], 0.5, ThresholdPolicy::MaxF1).unwrap();
        assert_eq!(r.to_csv(), "class,tp,fp,fn,precision,recall,ap\n0,1,0,0,1.000000,1.000000,1.000000\nmAP,1.000000\n");
    }
}

//! Detection extraction and per-category greedy non-maximum suppression.
//! The inference score is sigmoid(cls) * sigmoid(obj) — except when the
//! model trained without an objectness factor, whose head then carries no
//! signal and is skipped. No weighting module runs at test time.

use crate::assign::{DensePredictions, ObjectnessMode};
use crate::geometry::{iou, ltrb_decode, BoundingBox, LocationSet};

#[derive(Debug, Clone)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub category: usize,
    pub score: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Turns dense predictions into scored detections, dropping scores below
/// `score_threshold` and any degenerate decode.
pub fn detect(
    preds: &DensePredictions,
    locations: &LocationSet,
    score_threshold: f64,
    objectness: ObjectnessMode,
) -> Vec<Detection> {
    let k = preds.categories();
    let cls = preds.cls_logits.values();
    let obj = preds.obj_logits.values();
    let ltrb = preds.ltrb.values();
    let mut out = Vec::new();
    for i in 0..locations.len() {
        let obj_score = match objectness {
            ObjectnessMode::None => 1.0,
            _ => sigmoid(obj[i]),
        };
        let row = &ltrb[i * 4..(i + 1) * 4];
        for c in 0..k {
            let score = sigmoid(cls[i * k + c]) * obj_score;
            if score < score_threshold {
                continue;
            }
            if let Ok(bbox) = ltrb_decode(
                locations.x(i),
                locations.y(i),
                row[0],
                row[1],
                row[2],
                row[3],
            ) {
                out.push(Detection {
                    bbox,
                    category: c,
                    score,
                });
            }
        }
    }
    out
}

/// Greedy descending-score suppression per category: a detection is removed
/// when its IoU with an already-kept detection of the same category exceeds
/// `iou_threshold`. Ties in score break by input order, so the result is
/// deterministic.
pub fn nms(mut detections: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut kept: Vec<Detection> = Vec::new();
    for &idx in &order {
        let cand = &detections[idx];
        let suppressed = kept
            .iter()
            .any(|k| k.category == cand.category && iou(&k.bbox, &cand.bbox) > iou_threshold);
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    detections.clear();
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, category: usize, score: f64) -> Detection {
        Detection {
            bbox: BoundingBox::new(x1, y1, x2, y2).unwrap(),
            category,
            score,
        }
    }

    #[test]
    fn overlapping_same_category_suppressed() {
        // shift y by 30/17: inter/union = (10 - y)/(10 + y) = 0.7 exactly
        let y = 30.0 / 17.0;
        let a = det(0.0, 0.0, 10.0, 10.0, 0, 0.9);
        let b = det(0.0, y, 10.0, 10.0 + y, 0, 0.8);
        assert!((iou(&a.bbox, &b.bbox) - 0.7).abs() < 1e-12);
        let kept = nms(vec![a, b], 0.6);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn identical_boxes_different_categories_both_kept() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0, 0.9);
        let b = det(0.0, 0.0, 10.0, 10.0, 1, 0.8);
        assert_eq!(nms(vec![a, b], 0.6).len(), 2);
    }

    #[test]
    fn empty_input_empty_output() {
        assert!(nms(Vec::new(), 0.6).is_empty());
    }

    #[test]
    fn below_threshold_iou_survives() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0, 0.9);
        let b = det(8.0, 8.0, 18.0, 18.0, 0, 0.8);
        assert!(iou(&a.bbox, &b.bbox) < 0.6);
        assert_eq!(nms(vec![a, b], 0.6).len(), 2);
    }
}

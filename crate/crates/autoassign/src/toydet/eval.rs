//! Average precision at IoU 0.5: score-ranked greedy one-to-one matching
//! per category, all-point interpolated area under the exact PR staircase.

use crate::assign::GtObject;
use crate::geometry::iou;

use super::nms::Detection;

/// Detections and ground truth of one scene.
#[derive(Debug, Clone, Default)]
pub struct SceneEval {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GtObject>,
}

#[derive(Debug, Clone)]
pub struct CategoryEval {
    pub category: usize,
    pub ap: f64,
    pub gt_count: usize,
    pub detection_count: usize,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    /// Mean AP50 over categories that have at least one ground truth.
    pub mean_ap50: f64,
    pub per_category: Vec<CategoryEval>,
    /// Categories with zero ground truths, excluded from the mean.
    pub excluded_categories: Vec<usize>,
    pub total_ground_truth: usize,
    pub total_detections: usize,
}

/// Evaluates AP per category over a set of scenes at the given IoU match
/// threshold (0.5 for AP50).
pub fn evaluate_ap(scenes: &[SceneEval], categories: usize, iou_threshold: f64) -> EvalResult {
    let mut per_category = Vec::new();
    let mut excluded = Vec::new();
    let mut ap_sum = 0.0;
    let mut ap_count = 0usize;
    let mut total_gt = 0usize;
    let mut total_det = 0usize;

    for category in 0..categories {
        let gt_count: usize = scenes
            .iter()
            .map(|s| {
                s.ground_truth
                    .iter()
                    .filter(|g| g.category == category)
                    .count()
            })
            .sum();
        total_gt += gt_count;

        // (scene, det index, score), globally ranked
        let mut ranked: Vec<(usize, usize, f64)> = Vec::new();
        for (si, scene) in scenes.iter().enumerate() {
            for (di, d) in scene.detections.iter().enumerate() {
                if d.category == category {
                    ranked.push((si, di, d.score));
                }
            }
        }
        ranked.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        total_det += ranked.len();

        if gt_count == 0 {
            excluded.push(category);
            per_category.push(CategoryEval {
                category,
                ap: 0.0,
                gt_count,
                detection_count: ranked.len(),
                precision: Vec::new(),
                recall: Vec::new(),
            });
            continue;
        }

        // greedy one-to-one matching, highest score first
        let mut matched: Vec<Vec<bool>> = scenes
            .iter()
            .map(|s| vec![false; s.ground_truth.len()])
            .collect();
        let mut tp = Vec::with_capacity(ranked.len());
        for &(si, di, _) in &ranked {
            let det = &scenes[si].detections[di];
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in scenes[si].ground_truth.iter().enumerate() {
                if gt.category != category || matched[si][gi] {
                    continue;
                }
                let overlap = iou(&det.bbox, &gt.bbox);
                if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
            match best {
                Some((gi, _)) => {
                    matched[si][gi] = true;
                    tp.push(true);
                }
                None => tp.push(false),
            }
        }

        let mut precision = Vec::with_capacity(tp.len());
        let mut recall = Vec::with_capacity(tp.len());
        let mut hits = 0usize;
        for (i, &is_tp) in tp.iter().enumerate() {
            if is_tp {
                hits += 1;
            }
            precision.push(hits as f64 / (i + 1) as f64);
            recall.push(hits as f64 / gt_count as f64);
        }

        let ap = all_point_ap(&precision, &recall);
        ap_sum += ap;
        ap_count += 1;
        per_category.push(CategoryEval {
            category,
            ap,
            gt_count,
            detection_count: tp.len(),
            precision,
            recall,
        });
    }

    EvalResult {
        mean_ap50: if ap_count > 0 {
            ap_sum / ap_count as f64
        } else {
            0.0
        },
        per_category,
        excluded_categories: excluded,
        total_ground_truth: total_gt,
        total_detections: total_det,
    }
}

/// Area under the exact precision-recall staircase with right-max
/// interpolation.
fn all_point_ap(precision: &[f64], recall: &[f64]) -> f64 {
    if precision.is_empty() {
        return 0.0;
    }
    let mut interp = precision.to_vec();
    for i in (0..interp.len() - 1).rev() {
        interp[i] = interp[i].max(interp[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &r) in interp.iter().zip(recall) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

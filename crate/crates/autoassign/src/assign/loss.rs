//! The joint loss: per-object positive terms over weighted confidences and
//! a focal background term over every (location, category) cell.
//!
//! Gradient flows through everything on the positive path — confidence
//! weighting, the center prior, and the normalizing denominator. The
//! negative weights are computed from detached values and never push
//! gradient into the regression head.

use crate::diffcore::{DiffArray, DiffResult};
use crate::geometry::{center_offsets, giou_loss_diff, inside_mask, BoundingBox, LocationSet};

use super::baseline::FixedAssignment;
use super::config::{AssignConfig, ObjectnessMode};
use super::prior::BoundPrior;
use super::report::{ObjectReport, WeightEntry, WeightReport};
use super::weights::{
    center_weight, cls_confidence, confidence_weight, joint_confidence, loc_confidence,
    negative_weight_map, positive_weights, NegativeWeightMap,
};
use super::{AssignError, UniformWeightMode};

/// One annotated object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtObject {
    pub bbox: BoundingBox,
    pub category: usize,
}

/// Per-location predictions in the location set's order.
#[derive(Debug, Clone)]
pub struct DensePredictions {
    /// `(L, K)` classification logits.
    pub cls_logits: DiffArray,
    /// `(L, 1)` objectness logits.
    pub obj_logits: DiffArray,
    /// `(L, 4)` strictly positive left/top/right/bottom offsets in pixels.
    pub ltrb: DiffArray,
}

impl DensePredictions {
    pub fn categories(&self) -> usize {
        self.cls_logits.shape()[1]
    }

    // negated comparison is deliberate: NaN offsets must fail validation
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, locations: &LocationSet) -> Result<(), AssignError> {
        let l = locations.len();
        let check = |name: &'static str, shape: &[usize], want: &[usize]| {
            if shape != want {
                Err(AssignError::PredictionShape {
                    field: name,
                    got: shape.to_vec(),
                    expected: want.to_vec(),
                })
            } else {
                Ok(())
            }
        };
        let k = if self.cls_logits.shape().len() == 2 {
            self.cls_logits.shape()[1]
        } else {
            1
        };
        check("cls_logits", self.cls_logits.shape(), &[l, k])?;
        check("obj_logits", self.obj_logits.shape(), &[l, 1])?;
        check("ltrb", self.ltrb.shape(), &[l, 4])?;
        if self.ltrb.values().iter().any(|&v| !(v > 0.0)) {
            return Err(AssignError::InvalidPredictions {
                detail: "ltrb offsets must be strictly positive".into(),
            });
        }
        Ok(())
    }
}

/// How positive/negative weights are produced.
#[derive(Debug, Clone)]
pub enum AssignStrategy {
    /// The differentiable weighting mechanism.
    Learned,
    /// A fixed baseline assignment (uniform in-box, center sampling, ...).
    Fixed(FixedAssignment),
}

/// Scalar snapshots of one loss evaluation.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub positive_term: f64,
    pub negative_term: f64,
    /// Auxiliary objectness supervision; zero except in explicit mode,
    /// where `total = positive + negative + objectness`.
    pub objectness_term: f64,
    /// Positive confidence (sum of w+ P+) per retained object.
    pub object_confidence: Vec<f64>,
}

/// Loss (tracked scalar) plus detached diagnostics.
#[derive(Debug)]
pub struct AssignOutcome {
    pub loss: DiffArray,
    pub breakdown: LossBreakdown,
    pub report: WeightReport,
}

/// Evaluates the joint loss for one scene.
///
/// Every object must have a non-empty in-box set under the learned strategy;
/// callers filter unassignable objects first. `frozen_negatives` substitutes
/// a precomputed negative map, which pins the detached quantities during
/// finite-difference checks; training passes `None`.
pub fn autoassign_loss(
    preds: &DensePredictions,
    objects: &[GtObject],
    locations: &LocationSet,
    prior: &BoundPrior,
    cfg: &AssignConfig,
    strategy: &AssignStrategy,
    frozen_negatives: Option<&NegativeWeightMap>,
) -> Result<AssignOutcome, AssignError> {
    cfg.validate()?;
    preds.validate(locations)?;
    let categories = preds.categories();
    let count = locations.len();

    for obj in objects {
        if obj.category >= categories {
            return Err(AssignError::CategoryOutOfRange {
                category: obj.category,
                categories,
            });
        }
    }
    if let AssignStrategy::Fixed(fixed) = strategy {
        if fixed.positives.len() != objects.len() {
            return Err(AssignError::FixedAssignmentMismatch {
                objects: objects.len(),
                entries: fixed.positives.len(),
            });
        }
    }

    let object_pairs: Vec<(BoundingBox, usize)> =
        objects.iter().map(|o| (o.bbox, o.category)).collect();
    let in_box: Vec<Vec<usize>> = objects
        .iter()
        .map(|o| inside_mask(locations, &o.bbox, cfg.inside_rule))
        .collect();
    if matches!(strategy, AssignStrategy::Learned) {
        if let Some(empty) = in_box.iter().position(|s| s.is_empty()) {
            return Err(AssignError::EmptyInBoxSet { object: empty });
        }
    }

    // Negative weights come from detached prediction values.
    let computed_negatives = negative_weight_map(
        preds.ltrb.values(),
        locations,
        &object_pairs,
        &in_box,
        categories,
        cfg.iou_clamp_epsilon,
    );
    let negatives: NegativeWeightMap = match (strategy, frozen_negatives) {
        (AssignStrategy::Learned, Some(frozen)) => frozen.clone(),
        (AssignStrategy::Learned, None) => computed_negatives,
        (AssignStrategy::Fixed(fixed), _) => {
            let mut map = NegativeWeightMap::uniform(count, categories);
            map.max_iou = computed_negatives.max_iou;
            for &(i, c) in &fixed.suppress {
                map.per_class[i * categories + c] = 0.0;
                map.per_location[i] = 0.0;
            }
            map
        }
    };

    // ── positive term ───────────────────────────────────────────────────
    let mut log_sum: Option<DiffArray> = None;
    let mut object_confidence = Vec::new();
    let mut object_reports = Vec::new();

    for (n, obj) in objects.iter().enumerate() {
        let set: &[usize] = match strategy {
            AssignStrategy::Learned => &in_box[n],
            AssignStrategy::Fixed(fixed) => &fixed.positives[n],
        };
        if set.is_empty() {
            continue; // counted by the fixed strategy as skipped
        }

        let cls_rows = preds.cls_logits.gather_rows(set)?;
        let obj_rows = preds.obj_logits.gather_rows(set)?;
        let cls_conf = cls_confidence(&cls_rows, &obj_rows, obj.category, cfg.objectness_mode)?;

        let xs: Vec<f64> = set.iter().map(|&i| locations.x(i)).collect();
        let ys: Vec<f64> = set.iter().map(|&i| locations.y(i)).collect();
        let ltrb_rows = preds.ltrb.gather_rows(set)?;
        let loc_loss = giou_loss_diff(&ltrb_rows, &xs, &ys, &obj.bbox)?;
        let loc_conf = loc_confidence(&loc_loss, cfg.lambda);

        let (pos_conf, _neg_conf) = joint_confidence(&cls_conf, &loc_conf, cfg.confidence_mode)?;

        let (w_pos, g, c) = match strategy {
            AssignStrategy::Learned => {
                let d = center_offsets(locations, set, &obj.bbox);
                let g = center_weight(&d, obj.category, prior)?;
                let c = confidence_weight(&pos_conf, cfg.tau);
                (positive_weights(&c, &g)?, g, c)
            }
            AssignStrategy::Fixed(fixed) => {
                let w = match fixed.uniform {
                    UniformWeightMode::Mean => 1.0 / set.len() as f64,
                    UniformWeightMode::One => 1.0,
                };
                let ones = DiffArray::ones(vec![set.len()])?;
                (
                    DiffArray::constant(vec![set.len()], vec![w; set.len()])?,
                    ones.clone(),
                    ones,
                )
            }
        };

        let confidence = w_pos.mul(&pos_conf)?.sum();
        object_confidence.push(confidence.item());
        let log_term = confidence
            .clamp(cfg.probability_floor, f64::INFINITY)?
            .log()?;
        log_sum = Some(match log_sum {
            None => log_term,
            Some(acc) => acc.add(&log_term)?,
        });

        let entries = set
            .iter()
            .enumerate()
            .map(|(k, &i)| WeightEntry {
                location: i,
                g: g.values()[k],
                c: c.values()[k],
                p_pos: pos_conf.values()[k],
                w_pos: w_pos.values()[k],
            })
            .collect();
        object_reports.push(ObjectReport {
            object: n,
            category: obj.category,
            entries,
        });
    }

    let positive = match log_sum {
        Some(acc) => acc.mul_scalar(-cfg.focal_alpha),
        None => DiffArray::scalar(0.0),
    };

    // ── negative term ───────────────────────────────────────────────────
    let negative = negative_term(preds, &negatives, cfg, count, categories)?;

    // ── auxiliary objectness supervision ────────────────────────────────
    let objectness = match cfg.objectness_mode {
        ObjectnessMode::Explicit => {
            let mut target = vec![0.0f64; count];
            for set in &in_box {
                for &i in set {
                    target[i] = 1.0;
                }
            }
            explicit_objectness_loss(&preds.obj_logits, &target, cfg.probability_floor)?
        }
        _ => DiffArray::scalar(0.0),
    };

    let total = positive.add(&negative)?.add(&objectness)?;
    let breakdown = LossBreakdown {
        total: total.item(),
        positive_term: positive.item(),
        negative_term: negative.item(),
        objectness_term: objectness.item(),
        object_confidence,
    };
    for (term, value) in [
        ("positive", breakdown.positive_term),
        ("negative", breakdown.negative_term),
        ("objectness", breakdown.objectness_term),
    ] {
        if !value.is_finite() {
            return Err(AssignError::NonFiniteLoss { term });
        }
    }

    let report = WeightReport {
        objects: object_reports,
        w_neg: negatives.per_location,
        max_iou: negatives.max_iou,
    };
    Ok(AssignOutcome {
        loss: total,
        breakdown,
        report,
    })
}

/// Focal background term over every (location, category) cell:
/// `-(1 - alpha) * sum (w p)^gamma * log(1 - clamp(w p))`.
fn negative_term(
    preds: &DensePredictions,
    negatives: &NegativeWeightMap,
    cfg: &AssignConfig,
    count: usize,
    categories: usize,
) -> DiffResult<DiffArray> {
    let neg_conf = match cfg.objectness_mode {
        ObjectnessMode::None => preds.cls_logits.sigmoid(),
        _ => preds
            .cls_logits
            .sigmoid()
            .mul(&preds.obj_logits.sigmoid())?,
    };
    let w_neg = DiffArray::constant(vec![count, categories], negatives.per_class.clone())?;
    let weighted = neg_conf.mul(&w_neg)?;
    let focal = weighted.powf(cfg.focal_gamma)?;
    let log_term = weighted
        .clamp(0.0, 1.0 - cfg.probability_floor)?
        .neg()
        .add_scalar(1.0)
        .log()?;
    Ok(focal
        .mul(&log_term)?
        .sum()
        .mul_scalar(-(1.0 - cfg.focal_alpha)))
}

/// Binary cross-entropy on the objectness logits with in-box targets,
/// weight 1.0. Mean-reduced over locations so the auxiliary term stays
/// commensurate with the joint loss instead of scaling with grid size.
fn explicit_objectness_loss(
    obj_logits: &DiffArray,
    target: &[f64],
    floor: f64,
) -> DiffResult<DiffArray> {
    let sig = obj_logits
        .select_column(0)?
        .sigmoid()
        .clamp(floor, 1.0 - floor)?;
    let t = DiffArray::constant(vec![target.len()], target.to_vec())?;
    let pos_part = t.mul(&sig.log()?)?;
    let neg_part = t
        .neg()
        .add_scalar(1.0)
        .mul(&sig.neg().add_scalar(1.0).log()?)?;
    Ok(pos_part.add(&neg_part)?.mean().mul_scalar(-1.0))
}

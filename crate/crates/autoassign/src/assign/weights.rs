//! The weighting kernels: center prior G, localization likelihood,
//! classification confidence, confidence weighting C, normalized positive
//! weights, and the gradient-stopped negative weights.

use crate::diffcore::{DiffArray, DiffResult};
use crate::geometry::{iou, ltrb_decode, BoundingBox, LocationSet};

use super::config::{ConfidenceMode, ObjectnessMode};
use super::prior::{BoundPrior, PriorMode};
use super::AssignError;

/// Center weight `G(d) = exp(-(d - mu)^2 / (2 sigma^2))`, multiplied over
/// the two axes, for stride-normalized offsets `d` of one object's in-box
/// locations. Differentiable with respect to mu and sigma when learnable.
pub fn center_weight(
    d: &[(f64, f64)],
    category: usize,
    prior: &BoundPrior,
) -> DiffResult<DiffArray> {
    let n = d.len();
    if matches!(prior.mode, PriorMode::None) {
        return DiffArray::ones(vec![n]);
    }
    let row = match prior.mode {
        PriorMode::Shared => 0,
        _ => category,
    };
    let d_flat: Vec<f64> = d.iter().flat_map(|&(dx, dy)| [dx, dy]).collect();
    let d_arr = DiffArray::constant(vec![n, 2], d_flat)?;
    let mu = prior.mu.gather_rows(&[row])?; // (1, 2)
    let sigma = prior.sigma.gather_rows(&[row])?;

    let diff = d_arr.sub(&mu)?;
    let sq = diff.mul(&diff)?;
    let denom = sigma.mul(&sigma)?.mul_scalar(2.0);
    // product over axes == exp of the summed per-axis exponents; the floor
    // on the exponent keeps G large enough that the normalizing sum over a
    // candidate set can never underflow, even with sigma at its clamp
    Ok(sq.div(&denom)?.neg().sum_axis(1)?.clamp(-340.0, 0.0)?.exp())
}

/// Localization likelihood `exp(-lambda * loss)`, in (0, 1] for
/// non-negative losses.
pub fn loc_confidence(loc_loss: &DiffArray, lambda: f64) -> DiffArray {
    loc_loss.mul_scalar(-lambda).exp()
}

/// Classification confidence of one category: `sigmoid(cls)`, rectified by
/// the objectness factor `sigmoid(obj)` unless the mode drops it.
pub fn cls_confidence(
    cls_logits: &DiffArray,
    obj_logits: &DiffArray,
    category: usize,
    mode: ObjectnessMode,
) -> Result<DiffArray, AssignError> {
    let categories = if cls_logits.shape().len() == 2 {
        cls_logits.shape()[1]
    } else {
        0
    };
    if category >= categories {
        return Err(AssignError::CategoryOutOfRange {
            category,
            categories,
        });
    }
    let cls = cls_logits.select_column(category)?.sigmoid();
    Ok(match mode {
        ObjectnessMode::None => cls,
        ObjectnessMode::Implicit | ObjectnessMode::Explicit => {
            let obj = obj_logits.select_column(0)?.sigmoid();
            cls.mul(&obj)?
        }
    })
}

/// Joint confidence: P+ composed per mode, P- always the classification
/// confidence (negatives carry no localization signal). The omitted factor
/// is an exact 1.0, so reduced modes equal the full pipeline with that pin.
pub fn joint_confidence(
    cls_conf: &DiffArray,
    loc_conf: &DiffArray,
    mode: ConfidenceMode,
) -> DiffResult<(DiffArray, DiffArray)> {
    let ones = DiffArray::ones(vec![cls_conf.len()])?;
    let (cls_factor, loc_factor) = match mode {
        ConfidenceMode::Full => (cls_conf, loc_conf),
        ConfidenceMode::ClsOnly => (cls_conf, &ones),
        ConfidenceMode::LocOnly => (&ones, loc_conf),
    };
    let positive = cls_factor.mul(loc_factor)?;
    Ok((positive, cls_conf.clone()))
}

/// Confidence weighting `C(P) = exp(P / tau)`; strictly increasing in P.
pub fn confidence_weight(pos_conf: &DiffArray, tau: f64) -> DiffArray {
    debug_assert!(tau > 0.0);
    pos_conf.mul_scalar(1.0 / tau).exp()
}

/// Normalized positive weights `w+ = C G / sum(C G)` over one object's
/// candidate set. Fully differentiable, including through the denominator.
pub fn positive_weights(c: &DiffArray, g: &DiffArray) -> DiffResult<DiffArray> {
    let cg = c.mul(g)?;
    let total = cg.sum();
    cg.div(&total)
}

/// Negative weights for one candidate set of max-IoUs:
/// `f = 1/(1 - iou)` min-max normalized over the set, then `w- = 1 - f_norm`.
/// The set's argmax gets exactly 0. When every value ties (single-location
/// boxes included), the normalized value is defined as 1 so the whole set
/// gets 0: best locations must not be penalized as background.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN span must take the degenerate path
pub fn negative_weights(ious: &[f64], epsilon: f64) -> Vec<f64> {
    let f: Vec<f64> = ious
        .iter()
        .map(|&v| 1.0 / (1.0 - v.min(1.0 - epsilon)))
        .collect();
    let f_min = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let f_max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(f_max > f_min) {
        return vec![0.0; ious.len()];
    }
    let span = f_max - f_min;
    f.iter().map(|&v| 1.0 - (v - f_min) / span).collect()
}

/// Per-location and per-(location, category) negative weights for a scene,
/// computed from detached prediction values (no gradient flows back).
#[derive(Debug, Clone)]
pub struct NegativeWeightMap {
    /// Effective weight per location: min over owning objects, 1 outside
    /// every box.
    pub per_location: Vec<f64>,
    /// Row-major (location, category) weights applied to the negative loss.
    /// 1 everywhere except at in-box locations on their owners' category
    /// channels.
    pub per_class: Vec<f64>,
    /// Max IoU of each location's decoded proposal against all objects.
    pub max_iou: Vec<f64>,
}

impl NegativeWeightMap {
    /// Background-only map: weight 1 everywhere.
    pub fn uniform(count: usize, categories: usize) -> Self {
        NegativeWeightMap {
            per_location: vec![1.0; count],
            per_class: vec![1.0; count * categories],
            max_iou: vec![0.0; count],
        }
    }
}

/// Builds the negative weight map from detached LTRB values.
///
/// Each location's IoU is the max over all ground-truth boxes; each object
/// normalizes f over its own in-box set, so its best location lands at
/// exactly 0. A location owned by several objects keeps the smallest weight.
pub fn negative_weight_map(
    ltrb_values: &[f64],
    locations: &LocationSet,
    objects: &[(BoundingBox, usize)],
    in_box: &[Vec<usize>],
    categories: usize,
    epsilon: f64,
) -> NegativeWeightMap {
    let count = locations.len();
    let mut map = NegativeWeightMap::uniform(count, categories);
    if objects.is_empty() {
        return map;
    }

    let proposals: Vec<Option<BoundingBox>> = (0..count)
        .map(|i| {
            let row = &ltrb_values[i * 4..(i + 1) * 4];
            ltrb_decode(
                locations.x(i),
                locations.y(i),
                row[0],
                row[1],
                row[2],
                row[3],
            )
            .ok()
        })
        .collect();

    for (i, proposal) in proposals.iter().enumerate() {
        if let Some(p) = proposal {
            map.max_iou[i] = objects.iter().map(|(gt, _)| iou(p, gt)).fold(0.0, f64::max);
        }
    }

    for ((_, category), indices) in objects.iter().zip(in_box) {
        if indices.is_empty() {
            continue;
        }
        let ious: Vec<f64> = indices.iter().map(|&i| map.max_iou[i]).collect();
        let candidate = negative_weights(&ious, epsilon);
        for (&i, &w) in indices.iter().zip(&candidate) {
            if w < map.per_location[i] {
                map.per_location[i] = w;
            }
            let cell = i * categories + category;
            if w < map.per_class[cell] {
                map.per_class[cell] = w;
            }
        }
    }
    map
}

use crate::geometry::InsideRule;

use super::AssignError;

/// Which factors enter the positive confidence. The omitted factor is pinned
/// to an exact 1.0, so reduced modes reproduce the full pipeline with that
/// substitution bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfidenceMode {
    #[default]
    Full,
    ClsOnly,
    LocOnly,
}

/// How the objectness logit participates.
///
/// `Implicit` multiplies it into classification confidence and lets it share
/// classification supervision (no labels of its own). `Explicit` keeps the
/// product but adds a binary supervision term (1 inside boxes, 0 outside).
/// `None` drops the factor entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectnessMode {
    #[default]
    Implicit,
    Explicit,
    None,
}

/// Hyperparameters of the weighting mechanism and loss.
#[derive(Debug, Clone, Copy)]
pub struct AssignConfig {
    /// Confidence-weighting temperature in `exp(P/tau)`.
    pub tau: f64,
    /// Localization-likelihood sharpness in `exp(-lambda * loss)`.
    pub lambda: f64,
    /// Focal balance: positive term scaled by alpha, negative by (1 - alpha).
    /// 0.5 recovers the symmetric (unscaled) loss up to a global factor.
    pub focal_alpha: f64,
    /// Focal exponent on the negative probabilities.
    pub focal_gamma: f64,
    pub confidence_mode: ConfidenceMode,
    pub objectness_mode: ObjectnessMode,
    /// IoUs are clamped to `1 - epsilon` before `f(iou) = 1/(1-iou)`.
    pub iou_clamp_epsilon: f64,
    /// Floor inside both logarithms of the loss.
    pub probability_floor: f64,
    /// Whether edge-touching grid points belong to a box.
    pub inside_rule: InsideRule,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            tau: 1.0 / 3.0,
            lambda: 5.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            confidence_mode: ConfidenceMode::Full,
            objectness_mode: ObjectnessMode::Implicit,
            iou_clamp_epsilon: 1e-6,
            probability_floor: 1e-12,
            inside_rule: InsideRule::Strict,
        }
    }
}

impl AssignConfig {
    // negated comparisons are deliberate: NaN values must fail validation
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), AssignError> {
        let mut problems = Vec::new();
        if !(self.tau > 0.0) {
            problems.push(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda > 0.0) {
            problems.push(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) {
            problems.push(format!(
                "focal_alpha must lie in [0, 1], got {}",
                self.focal_alpha
            ));
        }
        if !(self.focal_gamma >= 0.0) {
            problems.push(format!(
                "focal_gamma must be non-negative, got {}",
                self.focal_gamma
            ));
        }
        if self.focal_gamma > 0.0 && self.focal_gamma < 1.0 {
            // (w p)^gamma has an infinite derivative at zero for 0 < gamma < 1,
            // and zero-weight locations are routine.
            problems.push(format!(
                "focal_gamma must be 0 or >= 1, got {}",
                self.focal_gamma
            ));
        }
        if !(self.iou_clamp_epsilon > 0.0 && self.iou_clamp_epsilon < 1.0) {
            problems.push(format!(
                "iou_clamp_epsilon must lie in (0, 1), got {}",
                self.iou_clamp_epsilon
            ));
        }
        if !(self.probability_floor > 0.0 && self.probability_floor < 0.5) {
            problems.push(format!(
                "probability_floor must lie in (0, 0.5), got {}",
                self.probability_floor
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AssignError::InvalidConfig {
                detail: problems.join("; "),
            })
        }
    }
}

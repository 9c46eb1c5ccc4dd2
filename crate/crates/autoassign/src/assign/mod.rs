//! Differentiable label assignment: a learnable center prior and a
//! confidence weighting jointly produce per-location positive and negative
//! weights, combined into one loss. Every ablation mode (prior none / fixed
//! / shared / per-category, confidence cls-only / loc-only, objectness
//! implicit / explicit / none) and the fixed baseline strategies sit behind
//! configuration so comparisons share one evaluator.

mod baseline;
mod config;
mod loss;
mod prior;
mod report;
mod weights;

use thiserror::Error;

pub use baseline::{baseline_assign, BaselineStrategy, FixedAssignment, UniformWeightMode};
pub use config::{AssignConfig, ConfidenceMode, ObjectnessMode};
pub use loss::{
    autoassign_loss, AssignOutcome, AssignStrategy, DensePredictions, GtObject, LossBreakdown,
};
pub use prior::{BoundPrior, CenterPrior, PriorMode, SIGMA_FLOOR};
pub use report::{
    format_f64, read_negative_csv, read_positive_csv, write_negative_csv, write_positive_csv,
    NegativeRow, ObjectReport, PositiveRow, WeightEntry, WeightReport, NEGATIVE_HEADER,
    POSITIVE_HEADER,
};
pub use weights::{
    center_weight, cls_confidence, confidence_weight, joint_confidence, loc_confidence,
    negative_weight_map, negative_weights, positive_weights, NegativeWeightMap,
};

#[derive(Debug, Clone, Error)]
pub enum AssignError {
    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),

    #[error("object {object} has no in-box locations at any level; filter it out before the loss")]
    EmptyInBoxSet { object: usize },

    #[error("category {category} out of range for {categories} categories")]
    CategoryOutOfRange { category: usize, categories: usize },

    #[error("{field} has shape {got:?}, expected {expected:?}")]
    PredictionShape {
        field: &'static str,
        got: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("invalid predictions: {detail}")]
    InvalidPredictions { detail: String },

    #[error("non-finite {term} term in loss")]
    NonFiniteLoss { term: &'static str },

    #[error("invalid assignment config: {detail}")]
    InvalidConfig { detail: String },

    #[error("fixed assignment covers {entries} objects, scene has {objects}")]
    FixedAssignmentMismatch { objects: usize, entries: usize },
}

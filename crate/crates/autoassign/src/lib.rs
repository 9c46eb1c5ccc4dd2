//! Differentiable label assignment for anchor-free dense object detection.
//!
//! Positive and negative training weights for every feature-pyramid location
//! are produced by two differentiable modules — a learnable per-category
//! center prior and a prediction-confidence weighting — and optimized jointly
//! with a detector through a single loss. The crate ships its own
//! reverse-mode autodiff core, box geometry, the weighting engine with every
//! ablation mode behind configuration, and a desk-scale synthetic benchmark
//! (scene generator, tiny conv detector, trainer, NMS, AP evaluation).

pub mod assign;
pub mod diffcore;
pub mod geometry;
pub mod rng;
pub mod suite;
pub mod toydet;

pub use diffcore::{DiffArray, DiffError, DiffResult, Parameter, Tape};

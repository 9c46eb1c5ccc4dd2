//! Desk-scale end-to-end exercise of the assignment engine: synthetic scene
//! generation, a tiny convolutional dense detector over a 2-3 level pyramid,
//! a reproducible training loop, NMS, and average-precision evaluation.

pub mod bench;
pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod nms;
pub mod scene;
pub mod train;

pub use bench::{
    evaluate_model, offset_probe_benchmark, offset_probe_scene_config, run_strategy,
    standard_benchmark, standard_scene_config, strategy_setup, BenchmarkConfig, StrategyName,
    StrategyOutcome,
};
pub use eval::{evaluate_ap, CategoryEval, EvalResult, SceneEval};
pub use model::{DetectorConfig, DetectorModel, ModelError, PARAMETER_BUDGET};
pub use nms::{detect, nms, Detection};
pub use scene::{
    generate_scene, CategorySpec, SceneError, SceneGenConfig, ShapeKind, SyntheticScene,
};
pub use train::{
    learning_rate_at, train, OptimConfig, StrategyKind, TrainConfig, TrainError, TrainLog,
    TrainRecord,
};

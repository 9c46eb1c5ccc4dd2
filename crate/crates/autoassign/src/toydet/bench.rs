//! The standard synthetic benchmark and named strategy setups, shared by
//! the comparison command and the acceptance suite.

use crate::assign::{
    AssignConfig, BaselineStrategy, CenterPrior, ConfidenceMode, ObjectnessMode, PriorMode,
    UniformWeightMode,
};
use crate::rng::SplitMix64;

use super::eval::{evaluate_ap, EvalResult, SceneEval};
use super::model::{DetectorConfig, DetectorModel};
use super::nms::{detect, nms};
use super::scene::{generate_scene, CategorySpec, SceneGenConfig, ShapeKind};
use super::train::{train, StrategyKind, TrainConfig, TrainError, TrainLog};

/// A complete experiment description: data, weighting, model, optimization,
/// and evaluation settings.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub scene: SceneGenConfig,
    pub assign: AssignConfig,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub prior_mode: PriorMode,
    pub prior_init_mu: f64,
    pub prior_init_sigma: f64,
    /// Per-level (lo, hi] object-size gates for the scale-range baseline.
    pub scale_ranges: Vec<(f64, f64)>,
    pub center_radius: f64,
    pub eval_scenes: usize,
    pub eval_seed: u64,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub ap_iou: f64,
}

/// Three-category 64x64 scenes: a centered rectangle, a centered ellipse,
/// and a bottom-heavy bar whose evidence sits 30% below the box center.
/// Evidence covers a minority of each box, intensities are close, scenes
/// are crowded and noisy, and sizes straddle the scale-range boundary, so
/// assignment quality actually shows up in AP.
pub fn standard_scene_config() -> SceneGenConfig {
    SceneGenConfig {
        image_size: 64,
        categories: vec![
            CategorySpec {
                kind: ShapeKind::FilledRect,
                size_min: 10.0,
                size_max: 36.0,
                offset_x: 0.0,
                offset_y: 0.0,
                intensity: 0.9,
                evidence_scale: 0.55,
            },
            CategorySpec {
                kind: ShapeKind::Ellipse,
                size_min: 10.0,
                size_max: 36.0,
                offset_x: 0.0,
                offset_y: 0.0,
                intensity: 0.7,
                evidence_scale: 0.6,
            },
            CategorySpec {
                kind: ShapeKind::BottomBar,
                size_min: 14.0,
                size_max: 40.0,
                offset_x: 0.0,
                offset_y: 0.3,
                intensity: 0.8,
                evidence_scale: 0.7,
            },
        ],
        objects_min: 2,
        objects_max: 4,
        noise_std: 0.15,
        max_overlap_iou: 0.5,
        placement_retries: 32,
    }
}

/// Two-category dataset for the learned-prior experiment: a bottom-heavy
/// bar (evidence 30% below the box center) and a centered rectangle. The
/// per-category prior should pull the bar's mu_y decisively positive while
/// the rectangle's stays near zero.
pub fn offset_probe_scene_config() -> SceneGenConfig {
    SceneGenConfig {
        image_size: 64,
        categories: vec![
            CategorySpec {
                kind: ShapeKind::BottomBar,
                size_min: 18.0,
                size_max: 30.0,
                offset_x: 0.0,
                offset_y: 0.25,
                intensity: 1.0,
                evidence_scale: 1.0,
            },
            CategorySpec {
                kind: ShapeKind::FilledRect,
                size_min: 14.0,
                size_max: 26.0,
                offset_x: 0.0,
                offset_y: 0.0,
                intensity: 0.7,
                evidence_scale: 1.0,
            },
        ],
        objects_min: 1,
        objects_max: 3,
        noise_std: 0.08,
        max_overlap_iou: 0.4,
        placement_retries: 32,
    }
}

/// Benchmark settings for the learned-prior experiment.
pub fn offset_probe_benchmark() -> BenchmarkConfig {
    let scene = offset_probe_scene_config();
    BenchmarkConfig {
        detector: DetectorConfig::standard(scene.categories.len()),
        scene,
        train: TrainConfig {
            iterations: 450,
            ..TrainConfig::default()
        },
        ..standard_benchmark()
    }
}

pub fn standard_benchmark() -> BenchmarkConfig {
    let scene = standard_scene_config();
    BenchmarkConfig {
        detector: DetectorConfig::standard(scene.categories.len()),
        scene,
        assign: AssignConfig::default(),
        train: TrainConfig {
            iterations: 600,
            ..TrainConfig::default()
        },
        prior_mode: PriorMode::Category,
        prior_init_mu: 0.0,
        prior_init_sigma: 1.0,
        scale_ranges: vec![(0.0, 32.0), (32.0, f64::INFINITY)],
        center_radius: 1.5,
        eval_scenes: 32,
        eval_seed: 0xE0A1_5EED,
        score_threshold: 0.05,
        nms_iou: 0.6,
        ap_iou: 0.5,
    }
}

/// Named strategies accepted by the comparison harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyName {
    AutoAssign,
    UniformInBox,
    CenterSampling,
    CenterSamplingScaleRanges,
    ClsOnly,
    LocOnly,
    NoObj,
    ExplicitObj,
    FixedPrior,
    SharedPrior,
    NonePrior,
}

impl StrategyName {
    pub const ALL: [StrategyName; 11] = [
        StrategyName::AutoAssign,
        StrategyName::UniformInBox,
        StrategyName::CenterSampling,
        StrategyName::CenterSamplingScaleRanges,
        StrategyName::ClsOnly,
        StrategyName::LocOnly,
        StrategyName::NoObj,
        StrategyName::ExplicitObj,
        StrategyName::FixedPrior,
        StrategyName::SharedPrior,
        StrategyName::NonePrior,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyName::AutoAssign => "autoassign",
            StrategyName::UniformInBox => "uniform-inbox",
            StrategyName::CenterSampling => "center-sampling",
            StrategyName::CenterSamplingScaleRanges => "center-sampling+scale-ranges",
            StrategyName::ClsOnly => "cls-only",
            StrategyName::LocOnly => "loc-only",
            StrategyName::NoObj => "no-obj",
            StrategyName::ExplicitObj => "explicit-obj",
            StrategyName::FixedPrior => "fixed-prior",
            StrategyName::SharedPrior => "shared-prior",
            StrategyName::NonePrior => "none-prior",
        }
    }

    pub fn parse(s: &str) -> Option<StrategyName> {
        StrategyName::ALL.iter().copied().find(|n| n.name() == s)
    }
}

/// Resolves a strategy name into the configs it changes.
pub fn strategy_setup(
    name: StrategyName,
    bench: &BenchmarkConfig,
) -> (AssignConfig, PriorMode, StrategyKind) {
    let assign = bench.assign;
    match name {
        StrategyName::AutoAssign => (assign, bench.prior_mode, StrategyKind::Learned),
        StrategyName::UniformInBox => (
            assign,
            bench.prior_mode,
            StrategyKind::Baseline {
                strategy: BaselineStrategy::UniformInBox,
                uniform: UniformWeightMode::Mean,
            },
        ),
        StrategyName::CenterSampling => (
            assign,
            bench.prior_mode,
            StrategyKind::Baseline {
                strategy: BaselineStrategy::CenterSampling {
                    radius: bench.center_radius,
                },
                uniform: UniformWeightMode::Mean,
            },
        ),
        StrategyName::CenterSamplingScaleRanges => (
            assign,
            bench.prior_mode,
            StrategyKind::Baseline {
                strategy: BaselineStrategy::CenterSamplingScaleRanges {
                    radius: bench.center_radius,
                    ranges: bench.scale_ranges.clone(),
                },
                uniform: UniformWeightMode::Mean,
            },
        ),
        StrategyName::ClsOnly => (
            AssignConfig {
                confidence_mode: ConfidenceMode::ClsOnly,
                ..assign
            },
            bench.prior_mode,
            StrategyKind::Learned,
        ),
        StrategyName::LocOnly => (
            AssignConfig {
                confidence_mode: ConfidenceMode::LocOnly,
                ..assign
            },
            bench.prior_mode,
            StrategyKind::Learned,
        ),
        StrategyName::NoObj => (
            AssignConfig {
                objectness_mode: ObjectnessMode::None,
                ..assign
            },
            bench.prior_mode,
            StrategyKind::Learned,
        ),
        StrategyName::ExplicitObj => (
            AssignConfig {
                objectness_mode: ObjectnessMode::Explicit,
                ..assign
            },
            bench.prior_mode,
            StrategyKind::Learned,
        ),
        StrategyName::FixedPrior => (assign, PriorMode::Fixed, StrategyKind::Learned),
        StrategyName::SharedPrior => (assign, PriorMode::Shared, StrategyKind::Learned),
        StrategyName::NonePrior => (assign, PriorMode::None, StrategyKind::Learned),
    }
}

#[derive(Debug)]
pub struct StrategyOutcome {
    pub name: StrategyName,
    pub seed: u64,
    pub eval: EvalResult,
    pub log: TrainLog,
    pub model: DetectorModel,
    pub prior: CenterPrior,
}

/// Trains one strategy from scratch under `seed` and evaluates it on the
/// held-out scene stream.
pub fn run_strategy(
    name: StrategyName,
    bench: &BenchmarkConfig,
    seed: u64,
) -> Result<StrategyOutcome, TrainError> {
    let (assign_cfg, prior_mode, strategy) = strategy_setup(name, bench);
    let categories = bench.scene.categories.len();
    let mut model = DetectorModel::new(bench.detector.clone(), seed)?;
    let mut prior = CenterPrior::with_init(
        prior_mode,
        categories,
        bench.prior_init_mu,
        bench.prior_init_sigma,
    );
    let train_cfg = TrainConfig {
        seed,
        ..bench.train.clone()
    };

    let log = train(
        &mut model,
        &mut prior,
        &bench.scene,
        &assign_cfg,
        &strategy,
        &train_cfg,
    )?;
    let eval = evaluate_model(&model, bench, assign_cfg.objectness_mode)?;
    Ok(StrategyOutcome {
        name,
        seed,
        eval,
        log,
        model,
        prior,
    })
}

/// Runs detection + NMS on the held-out scenes and scores AP. The
/// objectness mode must match how the model was trained: the factor is
/// skipped at inference when it carried no supervision.
pub fn evaluate_model(
    model: &DetectorModel,
    bench: &BenchmarkConfig,
    objectness: ObjectnessMode,
) -> Result<EvalResult, TrainError> {
    let locations = model.locations();
    let mut scenes = Vec::with_capacity(bench.eval_scenes);
    for i in 0..bench.eval_scenes {
        let seed = SplitMix64::derive(bench.eval_seed, i as u64).next_u64();
        let scene = generate_scene(&bench.scene, seed);
        let preds = model.forward_inference(&scene.image)?;
        let detections = nms(
            detect(&preds, &locations, bench.score_threshold, objectness),
            bench.nms_iou,
        );
        scenes.push(SceneEval {
            detections,
            ground_truth: scene.objects,
        });
    }
    Ok(evaluate_ap(
        &scenes,
        bench.scene.categories.len(),
        bench.ap_iou,
    ))
}

//! Desk-scale training loop: per-step scenes are generated on the fly from
//! derived seeds, losses are averaged over the step, and SGD with momentum
//! updates the detector and the prior. Fully deterministic given the
//! config; identical runs produce identical curves to the last bit.

use thiserror::Error;

use crate::assign::{
    autoassign_loss, baseline_assign, AssignConfig, AssignError, AssignStrategy, BaselineStrategy,
    CenterPrior, GtObject, UniformWeightMode,
};
use crate::diffcore::{sgd_step, Tape};
use crate::geometry::inside_mask;
use crate::rng::SplitMix64;

use super::model::DetectorModel;
use super::scene::{generate_scene, SceneGenConfig};

#[derive(Debug, Clone, Error)]
pub enum TrainError {
    #[error("loss failed at iteration {iteration} (scene seed {scene_seed}): {source}")]
    Loss {
        iteration: usize,
        scene_seed: u64,
        /// Records completed before the abort, so partial logs survive.
        partial: Box<TrainLog>,
        #[source]
        source: AssignError,
    },

    #[error(transparent)]
    Model(#[from] crate::toydet::model::ModelError),

    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
}

impl TrainError {
    /// Log records retained from before a mid-run abort.
    pub fn partial_log(&self) -> Option<&TrainLog> {
        match self {
            TrainError::Loss { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// How positive/negative weights are produced during training.
#[derive(Debug, Clone)]
pub enum StrategyKind {
    Learned,
    Baseline {
        strategy: BaselineStrategy,
        uniform: UniformWeightMode,
    },
}

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Learning-rate decay points as fractions of the total iteration count
    /// (so schedules scale with run length).
    pub milestones: Vec<f64>,
    pub decay_factor: f64,
    /// Linear warmup over this fraction of the run.
    pub warmup_fraction: f64,
    /// Global gradient-norm clip; 0 disables. The positive log term has a
    /// 1/x gradient cliff when an object's confidence collapses, and a
    /// single unclipped step there can destroy the shared trunk.
    pub clip_grad_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            milestones: vec![2.0 / 3.0, 8.0 / 9.0],
            decay_factor: 0.1,
            warmup_fraction: 0.05,
            clip_grad_norm: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub scenes_per_step: usize,
    pub seed: u64,
    pub optim: OptimConfig,
    /// Learning-rate multiplier for the prior means. Kept at the model rate:
    /// mu must migrate toward off-center evidence while the signal lasts.
    pub prior_mu_lr_scale: f64,
    /// Learning-rate multiplier for the prior widths. Much smaller than the
    /// mu rate: the width feels a persistent concentration force, and once
    /// it collapses it pins the weights to wherever mu currently points.
    pub prior_sigma_lr_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 500,
            scenes_per_step: 2,
            seed: 1,
            optim: OptimConfig::default(),
            prior_mu_lr_scale: 0.5,
            prior_sigma_lr_scale: 0.05,
        }
    }
}

/// One iteration of the log. `to_line` renders the stable line-delimited
/// record format; floats carry 17 significant digits so logs byte-compare
/// across identical runs and parse back exactly.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub iteration: usize,
    pub total: f64,
    pub positive: f64,
    pub negative: f64,
    pub objectness: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub objects_seen: usize,
    pub objects_dropped: usize,
}

impl TrainRecord {
    pub fn to_line(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        format!(
            "iter={} lr={:.16e} total={:.16e} positive={:.16e} negative={:.16e} objectness={:.16e} \
             grad_norm={:.16e} seen={} dropped={} mu={} sigma={}",
            self.iteration,
            self.learning_rate,
            self.total,
            self.positive,
            self.negative,
            self.objectness,
            self.grad_norm,
            self.objects_seen,
            self.objects_dropped,
            join(&self.mu),
            join(&self.sigma),
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// Objects dropped over the whole run because their in-box set was
    /// empty at every pyramid level (tiny boxes between cell centers).
    pub dropped_total: usize,
    /// Objects the fixed strategies could not match.
    pub unmatched_total: usize,
}

pub fn learning_rate_at(optim: &OptimConfig, iteration: usize, total: usize) -> f64 {
    let progress = iteration as f64 / total.max(1) as f64;
    let passed = optim.milestones.iter().filter(|&&m| progress >= m).count();
    let mut lr = optim.learning_rate * optim.decay_factor.powi(passed as i32);
    let warmup_steps = (optim.warmup_fraction * total as f64).floor();
    if warmup_steps > 0.0 && (iteration as f64) < warmup_steps {
        lr *= (iteration as f64 + 1.0) / warmup_steps;
    }
    lr
}

pub fn train(
    model: &mut DetectorModel,
    prior: &mut CenterPrior,
    scene_cfg: &SceneGenConfig,
    assign_cfg: &AssignConfig,
    strategy: &StrategyKind,
    train_cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    let locations = model.locations();
    let mut log = TrainLog::default();

    for iteration in 0..train_cfg.iterations {
        let lr = learning_rate_at(&train_cfg.optim, iteration, train_cfg.iterations);
        let scale = 1.0 / train_cfg.scenes_per_step.max(1) as f64;
        let (mut total, mut positive, mut negative, mut objectness) = (0.0, 0.0, 0.0, 0.0);
        let (mut seen, mut dropped) = (0, 0);

        for j in 0..train_cfg.scenes_per_step {
            let scene_seed = SplitMix64::derive(
                train_cfg.seed,
                (iteration * train_cfg.scenes_per_step + j) as u64,
            )
            .next_u64();
            let scene = generate_scene(scene_cfg, scene_seed);

            // Objects with an empty in-box set at every level are data
            // artifacts; drop them from the loss and count.
            let mut kept: Vec<GtObject> = Vec::with_capacity(scene.objects.len());
            let mut in_box: Vec<Vec<usize>> = Vec::with_capacity(scene.objects.len());
            for obj in &scene.objects {
                let mask = inside_mask(&locations, &obj.bbox, assign_cfg.inside_rule);
                if mask.is_empty() {
                    dropped += 1;
                } else {
                    kept.push(*obj);
                    in_box.push(mask);
                }
            }
            seen += kept.len();

            let assign_strategy = match strategy {
                StrategyKind::Learned => AssignStrategy::Learned,
                StrategyKind::Baseline { strategy, uniform } => {
                    let pairs: Vec<_> = kept.iter().map(|o| (o.bbox, o.category)).collect();
                    let fixed = baseline_assign(strategy, *uniform, &locations, &pairs, &in_box);
                    log.unmatched_total += fixed.skipped.len();
                    AssignStrategy::Fixed(fixed)
                }
            };

            let tape = Tape::new();
            let (preds, bindings) = model.forward_train(&tape, &scene.image)?;
            let bound_prior = prior.bind(&tape)?;
            let outcome = match autoassign_loss(
                &preds,
                &kept,
                &locations,
                &bound_prior,
                assign_cfg,
                &assign_strategy,
                None,
            ) {
                Ok(outcome) => outcome,
                Err(source) => {
                    return Err(TrainError::Loss {
                        iteration,
                        scene_seed,
                        partial: Box::new(log),
                        source,
                    })
                }
            };

            total += outcome.breakdown.total * scale;
            positive += outcome.breakdown.positive_term * scale;
            negative += outcome.breakdown.negative_term * scale;
            objectness += outcome.breakdown.objectness_term * scale;

            let grads = tape.backward(&outcome.loss.mul_scalar(scale))?;
            model.accumulate(&grads, &bindings);
            prior.accumulate(&grads, &bound_prior);
        }

        let grad_norm = (model.params.iter().map(|p| p.grad_norm_sq()).sum::<f64>()
            + prior.mu.grad_norm_sq()
            + prior.sigma.grad_norm_sq())
        .sqrt();

        let clip = train_cfg.optim.clip_grad_norm;
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // non-finite norms must enter and zero the step
        if clip > 0.0 && !(grad_norm <= clip) {
            // non-finite norms zero the step instead of poisoning parameters
            let scale = if grad_norm.is_finite() {
                clip / grad_norm
            } else {
                0.0
            };
            for p in model.params.iter_mut().chain(prior.params_mut()) {
                p.grad.iter_mut().for_each(|g| *g *= scale);
            }
        }

        sgd_step(
            model.weight_params_mut(),
            lr,
            train_cfg.optim.momentum,
            train_cfg.optim.weight_decay,
        );
        sgd_step(model.bias_params_mut(), lr, train_cfg.optim.momentum, 0.0);
        sgd_step(
            [&mut prior.mu],
            lr * train_cfg.prior_mu_lr_scale,
            train_cfg.optim.momentum,
            0.0,
        );
        sgd_step(
            [&mut prior.sigma],
            lr * train_cfg.prior_sigma_lr_scale,
            train_cfg.optim.momentum,
            0.0,
        );
        prior.clamp_sigma();

        log.dropped_total += dropped;
        log.records.push(TrainRecord {
            iteration,
            total,
            positive,
            negative,
            objectness,
            grad_norm,
            learning_rate: lr,
            mu: prior.mu.values.clone(),
            sigma: prior.sigma.values.clone(),
            objects_seen: seen,
            objects_dropped: dropped,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::PriorMode;
    use crate::toydet::model::DetectorConfig;
    use crate::toydet::scene::{CategorySpec, ShapeKind};

    fn quick_scene_cfg() -> SceneGenConfig {
        SceneGenConfig {
            image_size: 32,
            categories: vec![CategorySpec {
                kind: ShapeKind::FilledRect,
                size_min: 10.0,
                size_max: 16.0,
                offset_x: 0.0,
                offset_y: 0.0,
                intensity: 1.0,
                evidence_scale: 1.0,
            }],
            objects_min: 1,
            objects_max: 2,
            noise_std: 0.02,
            max_overlap_iou: 0.3,
            placement_retries: 16,
        }
    }

    fn quick_model() -> DetectorModel {
        let cfg = DetectorConfig {
            image_size: 32,
            ..DetectorConfig::tiny(1)
        };
        DetectorModel::new(cfg, 11).unwrap()
    }

    #[test]
    fn learning_rate_schedule_scales_with_length() {
        let optim = OptimConfig::default();
        // warmup covers floor(0.05 * 90) = 4 steps
        assert_eq!(learning_rate_at(&optim, 0, 90), 0.01 * 0.25);
        assert_eq!(learning_rate_at(&optim, 4, 90), 0.01);
        assert_eq!(learning_rate_at(&optim, 30, 90), 0.01);
        assert!((learning_rate_at(&optim, 60, 90) - 0.001).abs() < 1e-12);
        assert!((learning_rate_at(&optim, 80, 90) - 0.0001).abs() < 1e-12);
    }

    #[test]
    fn short_run_is_finite_and_reproducible() {
        let run = || {
            let mut model = quick_model();
            let mut prior = CenterPrior::new(PriorMode::Category, 1);
            let cfg = TrainConfig {
                iterations: 8,
                scenes_per_step: 1,
                ..TrainConfig::default()
            };
            let log = train(
                &mut model,
                &mut prior,
                &quick_scene_cfg(),
                &AssignConfig::default(),
                &StrategyKind::Learned,
                &cfg,
            )
            .unwrap();
            assert!(log.records.iter().all(|r| r.total.is_finite()));
            log.records
                .iter()
                .map(|r| r.total.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fixed_prior_snapshots_never_move() {
        let mut model = quick_model();
        let mut prior = CenterPrior::new(PriorMode::Fixed, 1);
        let cfg = TrainConfig {
            iterations: 6,
            scenes_per_step: 1,
            ..TrainConfig::default()
        };
        let log = train(
            &mut model,
            &mut prior,
            &quick_scene_cfg(),
            &AssignConfig::default(),
            &StrategyKind::Learned,
            &cfg,
        )
        .unwrap();
        for r in &log.records {
            assert_eq!(r.mu, vec![0.0, 0.0]);
            assert_eq!(r.sigma, vec![1.0, 1.0]);
        }
    }

    #[test]
    fn baseline_strategy_trains() {
        let mut model = quick_model();
        let mut prior = CenterPrior::new(PriorMode::Category, 1);
        let cfg = TrainConfig {
            iterations: 4,
            scenes_per_step: 1,
            ..TrainConfig::default()
        };
        let log = train(
            &mut model,
            &mut prior,
            &quick_scene_cfg(),
            &AssignConfig::default(),
            &StrategyKind::Baseline {
                strategy: BaselineStrategy::UniformInBox,
                uniform: UniformWeightMode::Mean,
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(log.records.len(), 4);
        assert!(log.records.iter().all(|r| r.total.is_finite()));
    }
}

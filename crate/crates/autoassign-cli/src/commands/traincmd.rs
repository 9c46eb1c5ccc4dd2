//! `train`: one training run. Emits the checkpoint, the per-iteration log,
//! and the weight report of a held-out probe scene. A non-finite loss
//! aborts with exit 1, keeping the partial log.

use autoassign::assign::{
    autoassign_loss, write_negative_csv, write_positive_csv, AssignStrategy, CenterPrior, GtObject,
};
use autoassign::diffcore::Tape;
use autoassign::geometry::inside_mask;
use autoassign::rng::SplitMix64;
use autoassign::toydet::{
    checkpoint, generate_scene, strategy_setup, train, DetectorModel, TrainConfig, TrainError,
    TrainLog,
};

use super::{prepare_out_dir, write_text};
use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;

fn log_lines(log: &TrainLog) -> String {
    let mut text = String::new();
    for record in &log.records {
        text.push_str(&record.to_line());
        text.push('\n');
    }
    text
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    prepare_out_dir(cfg)?;
    let (assign_cfg, prior_mode, strategy) = strategy_setup(cfg.strategy, &cfg.bench);
    let categories = cfg.bench.scene.categories.len();

    let mut model = DetectorModel::new(cfg.bench.detector.clone(), cfg.bench.train.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut prior = CenterPrior::with_init(
        prior_mode,
        categories,
        cfg.bench.prior_init_mu,
        cfg.bench.prior_init_sigma,
    );
    let train_cfg = TrainConfig {
        ..cfg.bench.train.clone()
    };

    let log = match train(
        &mut model,
        &mut prior,
        &cfg.bench.scene,
        &assign_cfg,
        &strategy,
        &train_cfg,
    ) {
        Ok(log) => log,
        Err(err) => {
            if let Some(partial) = err.partial_log() {
                write_text(&cfg.out_dir.join("train_log.txt"), &log_lines(partial))?;
            }
            return Err(match err {
                TrainError::Loss { .. } => CliError::Check(err.to_string()),
                other => CliError::Config(other.to_string()),
            });
        }
    };
    write_text(&cfg.out_dir.join("train_log.txt"), &log_lines(&log))?;

    let ckpt_dir = cfg.out_dir.join("checkpoint");
    checkpoint::save_checkpoint(&ckpt_dir, &model, &prior)
        .map_err(|e| CliError::io("saving checkpoint", e))?;

    // weight report on a held-out probe scene (first of the eval stream)
    let probe_seed = SplitMix64::derive(cfg.bench.eval_seed, 0).next_u64();
    let probe = generate_scene(&cfg.bench.scene, probe_seed);
    let locations = model.locations();
    let kept: Vec<GtObject> = probe
        .objects
        .iter()
        .filter(|o| !inside_mask(&locations, &o.bbox, assign_cfg.inside_rule).is_empty())
        .copied()
        .collect();
    let tape = Tape::new();
    let (preds, _) = model
        .forward_train(&tape, &probe.image)
        .map_err(|e| CliError::Check(e.to_string()))?;
    let bound = prior
        .bind(&tape)
        .map_err(|e| CliError::Check(e.to_string()))?;
    let outcome = autoassign_loss(
        &preds,
        &kept,
        &locations,
        &bound,
        &assign_cfg,
        &AssignStrategy::Learned,
        None,
    )
    .map_err(|e| CliError::Check(format!("probe-scene loss: {e}")))?;

    let mut pos_csv = Vec::new();
    write_positive_csv(&outcome.report, &locations, &mut pos_csv)
        .map_err(|e| CliError::io("probe csv", e))?;
    std::fs::write(cfg.out_dir.join("probe_positive.csv"), pos_csv)
        .map_err(|e| CliError::io("writing probe_positive.csv", e))?;
    let mut neg_csv = Vec::new();
    write_negative_csv(&outcome.report, &locations, &mut neg_csv)
        .map_err(|e| CliError::io("probe csv", e))?;
    std::fs::write(cfg.out_dir.join("probe_negative.csv"), neg_csv)
        .map_err(|e| CliError::io("writing probe_negative.csv", e))?;

    let last = log.records.last().expect("at least one iteration");
    println!(
        "trained {} iterations (strategy {}); final loss {:.4} (pos {:.4} neg {:.4}); {} parameters; outputs in {}",
        log.records.len(),
        cfg.strategy.name(),
        last.total,
        last.positive,
        last.negative,
        model.param_count(),
        cfg.out_dir.display()
    );
    Ok(())
}

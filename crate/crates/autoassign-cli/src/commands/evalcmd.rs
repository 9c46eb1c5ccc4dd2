//! `eval`: score a checkpoint with NMS + AP50, either on a stored dataset
//! or on the held-out generated eval stream.

use autoassign::assign::CenterPrior;
use autoassign::toydet::{
    checkpoint, dataset, detect, evaluate_ap, evaluate_model, nms, DetectorModel, EvalResult,
    SceneEval,
};

use super::{prepare_out_dir, write_text};
use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;

pub fn metrics_csv(result: &EvalResult) -> String {
    let mut text = String::from("category,ap50,ground_truth,detections\n");
    for cat in &result.per_category {
        text.push_str(&format!(
            "{},{:.6},{},{}\n",
            cat.category, cat.ap, cat.gt_count, cat.detection_count
        ));
    }
    text.push_str(&format!(
        "mean,{:.6},{},{}\n",
        result.mean_ap50, result.total_ground_truth, result.total_detections
    ));
    text
}

pub fn load_model(
    cfg: &RunConfig,
    ckpt: &std::path::Path,
) -> CliResult<(DetectorModel, CenterPrior)> {
    let (_, prior_mode, _) = autoassign::toydet::strategy_setup(cfg.strategy, &cfg.bench);
    let mut model = DetectorModel::new(cfg.bench.detector.clone(), 0)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut prior = CenterPrior::with_init(
        prior_mode,
        cfg.bench.scene.categories.len(),
        cfg.bench.prior_init_mu,
        cfg.bench.prior_init_sigma,
    );
    checkpoint::load_checkpoint(ckpt, &mut model, &mut prior)
        .map_err(|e| CliError::Config(format!("loading checkpoint {}: {e}", ckpt.display())))?;
    Ok((model, prior))
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let (eval_assign, _, _) = autoassign::toydet::strategy_setup(cfg.strategy, &cfg.bench);
    let ckpt = cfg
        .eval_checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("eval requires `eval.checkpoint` in the config".into()))?;
    prepare_out_dir(cfg)?;
    let (model, _prior) = load_model(cfg, ckpt)?;

    let result = match &cfg.eval_dataset {
        Some(dir) => {
            let stored = dataset::load_dataset(dir)
                .map_err(|e| CliError::Config(format!("loading dataset {}: {e}", dir.display())))?;
            let locations = model.locations();
            let mut scenes = Vec::with_capacity(stored.len());
            for s in &stored {
                if s.size != cfg.bench.detector.image_size {
                    return Err(CliError::Config(format!(
                        "scene {} is {}x{} but the model expects {}",
                        s.id, s.size, s.size, cfg.bench.detector.image_size
                    )));
                }
                let preds = model
                    .forward_inference(&s.image)
                    .map_err(|e| CliError::Check(e.to_string()))?;
                let detections = nms(
                    detect(
                        &preds,
                        &locations,
                        cfg.bench.score_threshold,
                        eval_assign.objectness_mode,
                    ),
                    cfg.bench.nms_iou,
                );
                scenes.push(SceneEval {
                    detections,
                    ground_truth: s.objects.clone(),
                });
            }
            evaluate_ap(&scenes, cfg.bench.scene.categories.len(), cfg.bench.ap_iou)
        }
        None => evaluate_model(&model, &cfg.bench, eval_assign.objectness_mode)
            .map_err(|e| CliError::Check(e.to_string()))?,
    };

    let csv = metrics_csv(&result);
    write_text(&cfg.out_dir.join("metrics.csv"), &csv)?;
    print!("{csv}");
    if !result.excluded_categories.is_empty() {
        println!(
            "categories without ground truth (excluded from mean): {:?}",
            result.excluded_categories
        );
    }
    Ok(())
}

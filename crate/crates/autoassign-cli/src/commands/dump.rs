//! `dump-weights`: export per-object, per-level heat-map CSVs (center
//! weight, confidence weight, positive confidence, positive weight) plus
//! per-level negative maps for one stored scene.

use autoassign::assign::{
    autoassign_loss, format_f64, AssignStrategy, GtObject, NEGATIVE_HEADER, POSITIVE_HEADER,
};
use autoassign::diffcore::Tape;
use autoassign::geometry::inside_mask;
use autoassign::toydet::dataset;

use super::{prepare_out_dir, write_text};
use crate::commands::evalcmd::load_model;
use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let ckpt = cfg
        .dump_checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("dump-weights requires `dump.checkpoint`".into()))?;
    let data_dir = cfg
        .dump_dataset
        .as_ref()
        .ok_or_else(|| CliError::Config("dump-weights requires `dump.dataset`".into()))?;
    let scene_id = cfg
        .dump_scene
        .as_ref()
        .ok_or_else(|| CliError::Config("dump-weights requires `dump.scene`".into()))?;

    let stored = dataset::load_dataset(data_dir)
        .map_err(|e| CliError::Config(format!("loading dataset {}: {e}", data_dir.display())))?;
    let scene = stored.iter().find(|s| &s.id == scene_id).ok_or_else(|| {
        CliError::Config(format!(
            "scene `{scene_id}` not found in {}",
            data_dir.display()
        ))
    })?;

    prepare_out_dir(cfg)?;
    let (model, prior) = load_model(cfg, ckpt)?;
    let (assign_cfg, _, _) = autoassign::toydet::strategy_setup(cfg.strategy, &cfg.bench);
    let locations = model.locations();

    let kept: Vec<GtObject> = scene
        .objects
        .iter()
        .filter(|o| !inside_mask(&locations, &o.bbox, assign_cfg.inside_rule).is_empty())
        .copied()
        .collect();
    let tape = Tape::new();
    let (preds, _) = model
        .forward_train(&tape, &scene.image)
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
    .map_err(|e| CliError::Check(format!("loss on scene {scene_id}: {e}")))?;

    let levels = locations.levels().len();
    let mut written = 0usize;
    for obj in &outcome.report.objects {
        for level in 0..levels {
            let mut text = String::from(POSITIVE_HEADER);
            text.push('\n');
            for e in &obj.entries {
                let (l, row, col) = locations.grid_position(e.location);
                if l != level {
                    continue;
                }
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    obj.object,
                    l,
                    row,
                    col,
                    format_f64(e.g),
                    format_f64(e.c),
                    format_f64(e.p_pos),
                    format_f64(e.w_pos)
                ));
            }
            let name = format!("{scene_id}_obj{}_level{level}_pos.csv", obj.object);
            write_text(&cfg.out_dir.join(name), &text)?;
            written += 1;
        }
    }
    for level in 0..levels {
        let mut text = String::from(NEGATIVE_HEADER);
        text.push('\n');
        for i in locations.level_range(level) {
            let (l, row, col) = locations.grid_position(i);
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                l,
                row,
                col,
                format_f64(outcome.report.w_neg[i]),
                format_f64(outcome.report.max_iou[i])
            ));
        }
        let name = format!("{scene_id}_level{level}_neg.csv");
        write_text(&cfg.out_dir.join(name), &text)?;
        written += 1;
    }

    println!(
        "wrote {written} weight-map files for scene {scene_id} ({} objects, {levels} levels) to {}",
        outcome.report.objects.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

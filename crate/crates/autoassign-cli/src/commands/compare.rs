//! `compare`: train and evaluate several strategies under identical seeds,
//! then print and persist the AP table.

use autoassign::toydet::{run_strategy, StrategyName};

use super::{prepare_out_dir, write_text};
use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;

pub fn run(cfg: &RunConfig, flag_strategies: &[String]) -> CliResult<()> {
    let strategies: Vec<StrategyName> = if flag_strategies.is_empty() {
        cfg.compare_strategies.clone()
    } else {
        flag_strategies
            .iter()
            .map(|raw| {
                StrategyName::parse(raw).ok_or_else(|| {
                    let valid: Vec<&str> = StrategyName::ALL.iter().map(|s| s.name()).collect();
                    CliError::Usage(format!(
                        "unknown strategy `{raw}`; valid names: {}",
                        valid.join(", ")
                    ))
                })
            })
            .collect::<CliResult<_>>()?
    };
    if strategies.is_empty() {
        return Err(CliError::Usage("no strategies to compare".into()));
    }
    prepare_out_dir(cfg)?;

    let categories = cfg.bench.scene.categories.len();
    let mut csv = String::from("strategy,seeds,mean_ap50");
    for c in 0..categories {
        csv.push_str(&format!(",ap50_cat{c}"));
    }
    csv.push('\n');

    println!("{:<30} {:>9}  per-category", "strategy", "mean_ap50");
    for &name in &strategies {
        let mut mean = 0.0;
        let mut per_cat = vec![0.0f64; categories];
        for &seed in &cfg.compare_seeds {
            let outcome =
                run_strategy(name, &cfg.bench, seed).map_err(|e| CliError::Check(e.to_string()))?;
            mean += outcome.eval.mean_ap50;
            for cat in &outcome.eval.per_category {
                per_cat[cat.category] += cat.ap;
            }
        }
        let n = cfg.compare_seeds.len() as f64;
        mean /= n;
        per_cat.iter_mut().for_each(|v| *v /= n);

        csv.push_str(&format!(
            "{},{},{:.6}",
            name.name(),
            cfg.compare_seeds.len(),
            mean
        ));
        for v in &per_cat {
            csv.push_str(&format!(",{v:.6}"));
        }
        csv.push('\n');
        println!(
            "{:<30} {:>9.3}  [{}]",
            name.name(),
            mean,
            per_cat
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    write_text(&cfg.out_dir.join("compare.csv"), &csv)?;
    Ok(())
}

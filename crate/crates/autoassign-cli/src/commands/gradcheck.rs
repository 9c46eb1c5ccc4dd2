//! `gradcheck`: run the unit-level and full-loss gradient suites, write the
//! per-suite report, exit nonzero on any failure.

use autoassign::suite::run_gradient_suite;

use super::{prepare_out_dir, write_text};
use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    prepare_out_dir(cfg)?;
    let outcomes = run_gradient_suite(&cfg.gradcheck);

    let mut report = String::new();
    let mut failures = Vec::new();
    for o in &outcomes {
        report.push_str(&format!(
            "suite {}: max_rel_error {:.6e} tolerance {:.1e} checked {} status {}\n",
            o.name,
            o.report.max_rel_error,
            o.report.tolerance,
            o.report.coordinates_checked,
            if o.passed { "pass" } else { "FAIL" }
        ));
        if let Some(w) = &o.report.worst {
            report.push_str(&format!(
                "  worst coordinate: input {} index {} analytic {:.12e} numeric {:.12e} rel {:.6e}\n",
                w.input, w.coordinate, w.analytic, w.numeric, w.rel_error
            ));
        }
        if !o.passed {
            failures.push(o.name.clone());
        }
    }
    report.push_str(&format!(
        "overall: {}\n",
        if failures.is_empty() { "pass" } else { "FAIL" }
    ));
    write_text(&cfg.out_dir.join("gradcheck_report.txt"), &report)?;
    print!("{report}");

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "gradient check failed for: {}",
            failures.join(", ")
        )))
    }
}

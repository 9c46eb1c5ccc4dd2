//! Central finite-difference verification of recorded gradients.
//!
//! The checker evaluates the analytic gradient once via the tape, then
//! perturbs each input coordinate by ±epsilon and compares. Relative error
//! uses `|a - b| / max(1, |a|, |b|)`. Coordinates whose analytic contract is
//! intentionally detached (stop-gradient paths) are excluded by the caller
//! via the skip list, since the numeric derivative legitimately disagrees
//! there.

use super::array::DiffArray;
use super::error::{DiffError, DiffResult};
use super::tape::Tape;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Worst or failing coordinate of one check.
#[derive(Debug, Clone)]
pub struct CoordinateError {
    pub input: usize,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<CoordinateError>,
    /// Coordinates over tolerance, plus any where the function went
    /// non-finite under perturbation.
    pub failures: Vec<CoordinateError>,
    pub tolerance: f64,
    pub coordinates_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

/// Checks the gradients of a scalar-valued function of several arrays.
///
/// `f` receives leaves bound to a fresh tape for the analytic pass, and
/// plain constants for each perturbed numeric evaluation; it must be
/// deterministic.
pub fn grad_check<F>(
    f: &F,
    inputs: &[DiffArray],
    epsilon: f64,
    tolerance: f64,
) -> DiffResult<GradCheckReport>
where
    F: Fn(&Tape, &[DiffArray]) -> DiffResult<DiffArray>,
{
    grad_check_excluding(f, inputs, &[], epsilon, tolerance)
}

/// As `grad_check`, but skips inputs listed in `skip` (their coordinates are
/// downstream of stop-gradient and carry an intentionally detached contract).
pub fn grad_check_excluding<F>(
    f: &F,
    inputs: &[DiffArray],
    skip: &[usize],
    epsilon: f64,
    tolerance: f64,
) -> DiffResult<GradCheckReport>
where
    F: Fn(&Tape, &[DiffArray]) -> DiffResult<DiffArray>,
{
    // Analytic pass.
    let tape = Tape::new();
    let leaves: Vec<DiffArray> = inputs
        .iter()
        .map(|a| DiffArray::leaf(&tape, a.shape().to_vec(), a.values().to_vec()))
        .collect::<DiffResult<_>>()?;
    let out = f(&tape, &leaves)?;
    if out.len() != 1 {
        return Err(DiffError::NonScalarLoss {
            shape: out.shape().to_vec(),
        });
    }
    let grads = tape.backward(&out)?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|leaf| {
            grads
                .wrt(leaf)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; leaf.len()])
        })
        .collect();

    let eval = |point: &[DiffArray]| -> DiffResult<f64> {
        let scratch = Tape::new();
        Ok(f(&scratch, point)?.item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
        tolerance,
        coordinates_checked: 0,
    };

    let mut point: Vec<DiffArray> = inputs.to_vec();
    for (i, base) in inputs.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        for c in 0..base.len() {
            let mut plus = base.values().to_vec();
            let mut minus = base.values().to_vec();
            plus[c] += epsilon;
            minus[c] -= epsilon;

            point[i] = DiffArray::constant(base.shape().to_vec(), plus)?;
            let f_plus = eval(&point)?;
            point[i] = DiffArray::constant(base.shape().to_vec(), minus)?;
            let f_minus = eval(&point)?;
            point[i] = base.clone();

            report.coordinates_checked += 1;
            let entry = if f_plus.is_finite() && f_minus.is_finite() {
                let numeric = (f_plus - f_minus) / (2.0 * epsilon);
                let rel = relative_error(analytic[i][c], numeric);
                CoordinateError {
                    input: i,
                    coordinate: c,
                    analytic: analytic[i][c],
                    numeric,
                    rel_error: rel,
                }
            } else {
                CoordinateError {
                    input: i,
                    coordinate: c,
                    analytic: analytic[i][c],
                    numeric: f64::NAN,
                    rel_error: f64::INFINITY,
                }
            };

            if entry.rel_error > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = entry.rel_error;
                report.worst = Some(entry.clone());
            }
            #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN errors must count as failures
            if !(entry.rel_error <= tolerance) {
                report.failures.push(entry);
            }
        }
    }
    Ok(report)
}

//! The gradient verification suite: every differentiable operation, the
//! geometry built on them, the full joint loss, and the end-to-end toy
//! model, each checked against central finite differences over randomized
//! inputs. Shared by the `gradcheck` command and the acceptance tests.

use std::cell::RefCell;

use crate::assign::{
    autoassign_loss, negative_weight_map, AssignConfig, AssignError, AssignStrategy, BoundPrior,
    CenterPrior, DensePredictions, GtObject, NegativeWeightMap, PriorMode,
};
use crate::diffcore::{
    grad_check_excluding, DiffArray, DiffResult, GradCheckReport, Tape, DEFAULT_EPSILON,
};
use crate::geometry::{giou_loss_diff, inside_mask, BoundingBox, LocationSet, PyramidLevelSpec};
use crate::rng::SplitMix64;
use crate::toydet::{DetectorConfig, DetectorModel};

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Randomized repetitions per suite.
    pub seeds: u64,
    /// Tolerance for unit-level operations.
    pub unit_tolerance: f64,
    /// Tolerance for the end-to-end model check (looser: depth compounds
    /// truncation error).
    pub model_tolerance: f64,
    pub epsilon: f64,
    /// Test hook: the named suite gets a deliberately detached gradient
    /// injected and must therefore fail. Exercises the harness itself.
    pub corrupt: Option<String>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seeds: 10,
            unit_tolerance: 1e-4,
            model_tolerance: 1e-3,
            epsilon: DEFAULT_EPSILON,
            corrupt: None,
        }
    }
}

/// Worst-case result of one named suite across its repetitions.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: String,
    pub report: GradCheckReport,
    pub passed: bool,
}

struct SuiteRunner {
    options: SuiteOptions,
    outcomes: Vec<SuiteOutcome>,
}

impl SuiteRunner {
    fn run(
        &mut self,
        name: &str,
        tolerance: f64,
        skip: &[usize],
        reps: u64,
        mut inputs_for_seed: impl FnMut(u64) -> Vec<DiffArray>,
        f: &dyn Fn(&Tape, &[DiffArray]) -> DiffResult<DiffArray>,
    ) {
        let corrupt = self.options.corrupt.as_deref() == Some(name);
        let mut worst: Option<GradCheckReport> = None;
        for seed in 0..reps {
            let inputs = inputs_for_seed(seed);
            let report = if corrupt {
                // add a detached copy of the output: forward doubles, the
                // recorded gradient does not, so every live coordinate of
                // a correct checker must flag the disagreement
                let g = |tape: &Tape, xs: &[DiffArray]| {
                    let y = f(tape, xs)?;
                    y.add(&y.stop_gradient())
                };
                grad_check_excluding(&g, &inputs, skip, self.options.epsilon, tolerance)
            } else {
                grad_check_excluding(&f, &inputs, skip, self.options.epsilon, tolerance)
            }
            .expect("suite function failed to evaluate");

            let replace = match &worst {
                None => true,
                Some(w) => {
                    report.max_rel_error > w.max_rel_error || (!report.passed() && w.passed())
                }
            };
            if replace {
                worst = Some(report);
            }
        }
        let report = worst.expect("at least one repetition");
        self.outcomes.push(SuiteOutcome {
            name: name.to_string(),
            passed: report.passed(),
            report,
        });
    }

    fn check(
        &mut self,
        name: &str,
        inputs_for_seed: impl FnMut(u64) -> Vec<DiffArray>,
        f: &dyn Fn(&Tape, &[DiffArray]) -> DiffResult<DiffArray>,
    ) {
        let (tol, reps) = (self.options.unit_tolerance, self.options.seeds);
        self.run(name, tol, &[], reps, inputs_for_seed, f)
    }
}

fn vec_input(seed: u64, tag: u64, len: usize, lo: f64, hi: f64) -> DiffArray {
    let mut rng = SplitMix64::derive(seed, tag);
    DiffArray::constant(vec![len], (0..len).map(|_| rng.range_f64(lo, hi)).collect()).unwrap()
}

fn mat_input(seed: u64, tag: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> DiffArray {
    let mut rng = SplitMix64::derive(seed, tag);
    DiffArray::constant(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.range_f64(lo, hi)).collect(),
    )
    .unwrap()
}

/// Values bounded away from zero on both sides, for kinked ops.
fn kink_free_input(seed: u64, tag: u64, len: usize) -> DiffArray {
    let mut rng = SplitMix64::derive(seed, tag);
    let values = (0..len)
        .map(|_| {
            let magnitude = rng.range_f64(0.2, 1.5);
            if rng.next_f64() < 0.5 {
                -magnitude
            } else {
                magnitude
            }
        })
        .collect();
    DiffArray::constant(vec![len], values).unwrap()
}

fn as_diff(e: AssignError) -> crate::diffcore::DiffError {
    match e {
        AssignError::Diff(d) => d,
        other => panic!("loss construction failed: {other}"),
    }
}

/// Runs every suite and returns one outcome per named check.
pub fn run_gradient_suite(options: &SuiteOptions) -> Vec<SuiteOutcome> {
    let mut r = SuiteRunner {
        options: options.clone(),
        outcomes: Vec::new(),
    };

    // ── elementwise binary (squared before reduction so every coordinate
    //    carries signal) ─────────────────────────────────────────────────
    r.check(
        "add",
        |s| vec![vec_input(s, 1, 6, -2.0, 2.0), vec_input(s, 2, 6, -2.0, 2.0)],
        &|_, xs| {
            let y = xs[0].add(&xs[1])?;
            Ok(y.mul(&y)?.sum())
        },
    );
    r.check(
        "sub",
        |s| {
            vec![
                mat_input(s, 3, 3, 4, -2.0, 2.0),
                mat_input(s, 4, 1, 4, -2.0, 2.0),
            ]
        },
        &|_, xs| {
            let y = xs[0].sub(&xs[1])?;
            Ok(y.mul(&y)?.sum())
        },
    );
    r.check(
        "mul",
        |s| vec![vec_input(s, 5, 8, -2.0, 2.0), vec_input(s, 6, 8, -2.0, 2.0)],
        &|_, xs| Ok(xs[0].mul(&xs[1])?.sum()),
    );
    r.check(
        "div",
        |s| vec![vec_input(s, 7, 8, -2.0, 2.0), vec_input(s, 8, 8, 0.5, 3.0)],
        &|_, xs| Ok(xs[0].div(&xs[1])?.sum()),
    );

    // ── elementwise unary ───────────────────────────────────────────────
    r.check("exp", |s| vec![vec_input(s, 9, 8, -2.0, 2.0)], &|_, xs| {
        Ok(xs[0].exp().sum())
    });
    r.check("log", |s| vec![vec_input(s, 10, 8, 0.3, 4.0)], &|_, xs| {
        Ok(xs[0].log()?.sum())
    });
    r.check(
        "sigmoid",
        |s| vec![vec_input(s, 11, 8, -4.0, 4.0)],
        &|_, xs| Ok(xs[0].sigmoid().sum()),
    );
    r.check("relu", |s| vec![kink_free_input(s, 12, 10)], &|_, xs| {
        let y = xs[0].relu();
        Ok(y.mul(&y)?.sum())
    });
    r.check(
        "power",
        |s| vec![vec_input(s, 13, 8, 0.3, 2.5)],
        &|_, xs| Ok(xs[0].powf(1.7)?.sum()),
    );
    r.check("clamp", |s| vec![kink_free_input(s, 14, 10)], &|_, xs| {
        // bounds sit inside the kink-free gap around zero
        Ok(xs[0].clamp(-0.05, 10.0)?.sum())
    });
    r.check(
        "negate",
        |s| vec![vec_input(s, 15, 8, -2.0, 2.0)],
        &|_, xs| Ok(xs[0].neg().mul(&xs[0])?.sum()),
    );

    // ── reductions ──────────────────────────────────────────────────────
    r.check(
        "sum",
        |s| vec![mat_input(s, 16, 3, 5, -2.0, 2.0)],
        &|_, xs| {
            let t = xs[0].sum();
            t.mul(&t)
        },
    );
    r.check(
        "sum_axis",
        |s| vec![mat_input(s, 17, 3, 4, -2.0, 2.0)],
        &|_, xs| {
            let t = xs[0].sum_axis(1)?;
            Ok(t.mul(&t)?.sum())
        },
    );
    r.check(
        "mean",
        |s| vec![vec_input(s, 18, 7, -2.0, 2.0)],
        &|_, xs| {
            let t = xs[0].mean();
            t.mul(&t)
        },
    );
    r.check(
        "mean_axis",
        |s| vec![mat_input(s, 19, 4, 3, -2.0, 2.0)],
        &|_, xs| {
            let t = xs[0].mean_axis(0)?;
            Ok(t.mul(&t)?.sum())
        },
    );
    r.check(
        "max",
        |s| {
            // well-separated values keep the argmax stable under perturbation
            let mut rng = SplitMix64::derive(s, 20);
            let mut values: Vec<f64> = (0..9)
                .map(|i| i as f64 * 0.7 - 3.0 + rng.range_f64(0.0, 0.2))
                .collect();
            let n = values.len();
            values.swap(0, (s as usize) % n);
            vec![DiffArray::constant(vec![n], values).unwrap()]
        },
        &|_, xs| {
            let t = xs[0].max();
            t.mul(&t)
        },
    );
    r.check(
        "max_axis",
        |s| {
            let mut rng = SplitMix64::derive(s, 21);
            let values: Vec<f64> = (0..12)
                .map(|i| (i % 4) as f64 + rng.range_f64(0.0, 0.5))
                .collect();
            vec![DiffArray::constant(vec![3, 4], values).unwrap()]
        },
        &|_, xs| {
            let t = xs[0].max_axis(1)?;
            Ok(t.mul(&t)?.sum())
        },
    );

    // ── structure ───────────────────────────────────────────────────────
    r.check(
        "gather_rows",
        |s| vec![mat_input(s, 22, 4, 3, -2.0, 2.0)],
        &|_, xs| {
            let g = xs[0].gather_rows(&[0, 2, 0, 3])?;
            Ok(g.mul(&g)?.sum())
        },
    );
    r.check(
        "select_column",
        |s| vec![mat_input(s, 23, 4, 3, -2.0, 2.0)],
        &|_, xs| {
            let c = xs[0].select_column(1)?;
            Ok(c.mul(&c)?.sum())
        },
    );
    r.check(
        "channels_last",
        |s| {
            let mut rng = SplitMix64::derive(s, 24);
            vec![
                DiffArray::constant(vec![2, 2, 3], (0..12).map(|_| rng.normal()).collect())
                    .unwrap(),
            ]
        },
        &|_, xs| {
            let rows = xs[0].channels_last()?;
            Ok(rows.select_column(0)?.mul(&rows.select_column(1)?)?.sum())
        },
    );
    r.check(
        "concat_rows",
        |s| {
            vec![
                mat_input(s, 25, 2, 3, -2.0, 2.0),
                mat_input(s, 26, 3, 3, -2.0, 2.0),
            ]
        },
        &|_, xs| {
            let cat = DiffArray::concat_rows(&[&xs[0], &xs[1]])?;
            Ok(cat.mul(&cat)?.sum())
        },
    );

    // ── conv ────────────────────────────────────────────────────────────
    r.check(
        "conv2d",
        |s| {
            let mut rng = SplitMix64::derive(s, 27);
            vec![
                DiffArray::constant(vec![2, 4, 4], (0..32).map(|_| rng.normal()).collect())
                    .unwrap(),
                DiffArray::constant(
                    vec![2, 2, 3, 3],
                    (0..36).map(|_| rng.normal_scaled(0.0, 0.4)).collect(),
                )
                .unwrap(),
            ]
        },
        &|_, xs| {
            let y = xs[0].conv2d(&xs[1], 2, 1)?;
            Ok(y.mul(&y)?.sum())
        },
    );

    // ── gradient control: the detached input is excluded from comparison ─
    {
        let (tol, reps) = (r.options.unit_tolerance, r.options.seeds);
        r.run(
            "stop_gradient",
            tol,
            &[1],
            reps,
            |s| {
                vec![
                    vec_input(s, 28, 6, -2.0, 2.0),
                    vec_input(s, 29, 6, -2.0, 2.0),
                ]
            },
            &|_, xs| Ok(xs[0].mul(&xs[1].stop_gradient())?.sum()),
        );
    }

    // ── geometry on the tape ────────────────────────────────────────────
    let gt_box = BoundingBox::new(2.0, 2.0, 11.0, 9.0).unwrap();
    r.check(
        "giou_loss",
        |s| vec![mat_input(s, 30, 3, 4, 1.0, 5.0)],
        &|_, xs| Ok(giou_loss_diff(&xs[0], &[4.0, 6.0, 9.0], &[5.0, 3.0, 6.0], &gt_box)?.sum()),
    );

    // ── assignment kernels ──────────────────────────────────────────────
    r.check(
        "center_weight",
        |s| {
            vec![
                mat_input(s, 31, 2, 2, -0.8, 0.8),
                mat_input(s, 32, 2, 2, 0.4, 1.6),
            ]
        },
        &|_, xs| {
            let prior = BoundPrior {
                mode: PriorMode::Category,
                mu: xs[0].clone(),
                sigma: xs[1].clone(),
            };
            let d = [(0.5, -0.25), (-1.0, 0.75), (0.0, 0.4)];
            Ok(crate::assign::center_weight(&d, 1, &prior)?.sum())
        },
    );
    r.check(
        "confidence_weight",
        |s| vec![vec_input(s, 33, 6, 0.0, 1.0)],
        &|_, xs| Ok(crate::assign::confidence_weight(&xs[0], 1.0 / 3.0).sum()),
    );
    r.check(
        "positive_weights",
        |s| vec![vec_input(s, 34, 5, 0.5, 3.0), vec_input(s, 35, 5, 0.1, 1.0)],
        &|_, xs| {
            let w = crate::assign::positive_weights(&xs[0], &xs[1])?;
            Ok(w.mul(&w)?.sum())
        },
    );

    run_full_loss_suite(&mut r);
    run_model_suite(&mut r);

    r.outcomes
}

/// A random small instance: 20 locations over two levels, 1-3 objects.
fn random_loss_instance(seed: u64) -> (LocationSet, Vec<GtObject>, Vec<DiffArray>) {
    let mut rng = SplitMix64::derive(seed, 0x10551);
    let locations = LocationSet::new(&[
        PyramidLevelSpec {
            stride: 4,
            height: 4,
            width: 4,
        },
        PyramidLevelSpec {
            stride: 8,
            height: 2,
            width: 2,
        },
    ])
    .unwrap();
    let categories = 2usize;
    let objects: Vec<GtObject> = (0..rng.range_usize(1, 3))
        .map(|i| {
            let x1 = rng.range_f64(0.0, 6.0);
            let y1 = rng.range_f64(0.0, 6.0);
            GtObject {
                bbox: BoundingBox::new(
                    x1,
                    y1,
                    x1 + rng.range_f64(5.0, 9.5),
                    y1 + rng.range_f64(5.0, 9.5),
                )
                .unwrap(),
                category: i % categories,
            }
        })
        .collect();
    let l = locations.len();
    let cls = DiffArray::constant(
        vec![l, categories],
        (0..l * categories).map(|_| rng.normal()).collect(),
    )
    .unwrap();
    let obj = DiffArray::constant(vec![l, 1], (0..l).map(|_| rng.normal()).collect()).unwrap();
    let ltrb = DiffArray::constant(
        vec![l, 4],
        (0..l * 4).map(|_| rng.range_f64(1.5, 9.0)).collect(),
    )
    .unwrap();
    let mu = DiffArray::constant(
        vec![categories, 2],
        (0..categories * 2)
            .map(|_| rng.range_f64(-0.3, 0.3))
            .collect(),
    )
    .unwrap();
    let sigma = DiffArray::constant(
        vec![categories, 2],
        (0..categories * 2)
            .map(|_| rng.range_f64(0.7, 1.3))
            .collect(),
    )
    .unwrap();
    (locations, objects, vec![cls, obj, ltrb, mu, sigma])
}

/// Full joint loss over (cls, obj, ltrb, mu, sigma). Negative weights are
/// detached by contract, so they are frozen at the base point; the numeric
/// derivative then matches what the record claims.
fn run_full_loss_suite(r: &mut SuiteRunner) {
    let cfg = AssignConfig::default();
    let shared: RefCell<Option<(LocationSet, Vec<GtObject>, NegativeWeightMap)>> =
        RefCell::new(None);
    let (tol, reps) = (r.options.unit_tolerance, r.options.seeds);
    r.run(
        "full_loss",
        tol,
        &[],
        reps,
        |seed| {
            let (locations, objects, inputs) = random_loss_instance(seed);
            let pairs: Vec<(BoundingBox, usize)> =
                objects.iter().map(|o| (o.bbox, o.category)).collect();
            let in_box: Vec<Vec<usize>> = objects
                .iter()
                .map(|o| inside_mask(&locations, &o.bbox, cfg.inside_rule))
                .collect();
            let frozen = negative_weight_map(
                inputs[2].values(),
                &locations,
                &pairs,
                &in_box,
                2,
                cfg.iou_clamp_epsilon,
            );
            *shared.borrow_mut() = Some((locations, objects, frozen));
            inputs
        },
        &|_, xs| {
            let state = shared.borrow();
            let (locations, objects, frozen) = state.as_ref().expect("instance prepared");
            let preds = DensePredictions {
                cls_logits: xs[0].clone(),
                obj_logits: xs[1].clone(),
                ltrb: xs[2].clone(),
            };
            let prior = BoundPrior {
                mode: PriorMode::Category,
                mu: xs[3].clone(),
                sigma: xs[4].clone(),
            };
            autoassign_loss(
                &preds,
                objects,
                locations,
                &prior,
                &cfg,
                &AssignStrategy::Learned,
                Some(frozen),
            )
            .map(|outcome| outcome.loss)
            .map_err(as_diff)
        },
    );
}

/// Every model parameter through forward, assignment, and loss on a 16x16
/// single-object scene.
fn run_model_suite(r: &mut SuiteRunner) {
    let model =
        DetectorModel::new(DetectorConfig::tiny(2), 0xACCE).expect("tiny model fits the budget");
    let locations = model.locations();
    let mut rng = SplitMix64::derive(0xACCE, 1);
    let image: Vec<f64> = (0..16 * 16).map(|_| rng.range_f64(0.0, 0.3)).collect();
    let objects = vec![GtObject {
        bbox: BoundingBox::new(2.5, 3.0, 12.5, 13.0).unwrap(),
        category: 0,
    }];
    let cfg = AssignConfig::default();
    let prior = CenterPrior::new(PriorMode::Fixed, 2);

    let base_preds = model.forward_inference(&image).expect("forward");
    let pairs: Vec<(BoundingBox, usize)> = objects.iter().map(|o| (o.bbox, o.category)).collect();
    let in_box: Vec<Vec<usize>> = objects
        .iter()
        .map(|o| inside_mask(&locations, &o.bbox, cfg.inside_rule))
        .collect();
    let frozen = negative_weight_map(
        base_preds.ltrb.values(),
        &locations,
        &pairs,
        &in_box,
        2,
        cfg.iou_clamp_epsilon,
    );

    let inputs: Vec<DiffArray> = model.params.iter().map(|p| p.as_constant()).collect();
    let tol = r.options.model_tolerance;
    r.run(
        "model_end_to_end",
        tol,
        &[],
        1,
        |_| inputs.clone(),
        &|tape, xs| {
            let preds = model.forward_with(&image, xs)?;
            let bound = prior.bind(tape)?;
            autoassign_loss(
                &preds,
                &objects,
                &locations,
                &bound,
                &cfg,
                &AssignStrategy::Learned,
                Some(&frozen),
            )
            .map(|outcome| outcome.loss)
            .map_err(as_diff)
        },
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let options = SuiteOptions {
            seeds: 2,
            ..SuiteOptions::default()
        };
        let outcomes = run_gradient_suite(&options);
        assert!(outcomes.len() > 20);
        for o in &outcomes {
            assert!(o.passed, "{} failed: {:?}", o.name, o.report.worst);
        }
    }

    #[test]
    fn corruption_hook_is_detected() {
        let options = SuiteOptions {
            seeds: 1,
            corrupt: Some("mul".into()),
            ..SuiteOptions::default()
        };
        let outcomes = run_gradient_suite(&options);
        let mul = outcomes.iter().find(|o| o.name == "mul").unwrap();
        assert!(!mul.passed, "corrupted suite must fail");
        assert!(outcomes
            .iter()
            .filter(|o| o.name != "mul")
            .all(|o| o.passed));
    }
}

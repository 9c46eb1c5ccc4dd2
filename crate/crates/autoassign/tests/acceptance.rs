//! Acceptance suite: one test per criterion, each printing a PASS line once
//! its assertions hold (visible with `-- --nocapture`). Criteria follow the
//! property-based and directional contract of the project: exact closed
//! forms where hand arithmetic exists, gradient checks against finite
//! differences, and paper-direction orderings on the synthetic benchmark.
//!
//! The CLI determinism criterion lives in the CLI crate's own acceptance
//! test, next to the binary it exercises.

use std::time::Instant;

use autoassign::assign::{
    autoassign_loss, negative_weights, AssignConfig, AssignStrategy, CenterPrior, ConfidenceMode,
    DensePredictions, GtObject, NegativeWeightMap, ObjectnessMode, PriorMode,
};
use autoassign::diffcore::{DiffArray, Tape};
use autoassign::geometry::{giou_loss, inside_mask, BoundingBox, LocationSet, PyramidLevelSpec};
use autoassign::rng::SplitMix64;
use autoassign::suite::{run_gradient_suite, SuiteOptions};
use autoassign::toydet::{
    offset_probe_benchmark, run_strategy, standard_benchmark, train, DetectorModel, StrategyKind,
    StrategyName, TrainConfig,
};

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

// ── criterion 1: gradient suite ─────────────────────────────────────────

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let outcomes = run_gradient_suite(&SuiteOptions::default());
    let elapsed = start.elapsed();

    let mut worst_unit = 0.0f64;
    let mut worst_model = 0.0f64;
    for o in &outcomes {
        assert!(
            o.passed,
            "gradient suite {} failed: {:?}",
            o.name, o.report.worst
        );
        if o.name == "model_end_to_end" {
            worst_model = worst_model.max(o.report.max_rel_error);
        } else {
            worst_unit = worst_unit.max(o.report.max_rel_error);
        }
    }
    assert!(
        worst_unit < 1e-4,
        "unit-level max relative error {worst_unit}"
    );
    assert!(
        worst_model < 1e-3,
        "end-to-end max relative error {worst_model}"
    );
    assert!(elapsed.as_secs() < 120, "gradient suite took {elapsed:?}");

    pass(
        "criterion 1 (gradient suite)",
        format!(
            "{} checks, unit max rel {:.2e} < 1e-4, end-to-end {:.2e} < 1e-3, {:.1?}",
            outcomes.len(),
            worst_unit,
            worst_model,
            elapsed
        ),
    );
}

// ── criterion 2: closed-form oracles ────────────────────────────────────

#[test]
fn criterion_2_closed_form_oracles() {
    // single-location loss: cls and obj logits 0, localization loss 0.2
    let locations = LocationSet::new(&[PyramidLevelSpec {
        stride: 8,
        height: 1,
        width: 1,
    }])
    .unwrap();
    let tape = Tape::new();
    let h = 12.8f64.sqrt(); // giou loss = 1 - h^2/16 = 0.2 exactly in the limit
    let preds = DensePredictions {
        cls_logits: DiffArray::leaf(&tape, vec![1, 1], vec![0.0]).unwrap(),
        obj_logits: DiffArray::leaf(&tape, vec![1, 1], vec![0.0]).unwrap(),
        ltrb: DiffArray::leaf(&tape, vec![1, 4], vec![h; 4]).unwrap(),
    };
    let objects = [GtObject {
        bbox: BoundingBox::new(0.0, 0.0, 8.0, 8.0).unwrap(),
        category: 0,
    }];
    let prior = CenterPrior::new(PriorMode::Category, 1);
    let bound = prior.bind(&tape).unwrap();
    let out = autoassign_loss(
        &preds,
        &objects,
        &locations,
        &bound,
        &AssignConfig::default(),
        &AssignStrategy::Learned,
        None,
    )
    .unwrap();
    let expected = 0.25 * (4.0f64.ln() + 1.0); // 0.59657...
    let err = (out.breakdown.positive_term - expected).abs();
    assert!(
        err < 1e-9,
        "single-location loss {} vs {expected}",
        out.breakdown.positive_term
    );

    // negative-weight worked example
    let w = negative_weights(&[0.0, 0.5, 0.9], 1e-6);
    assert!((w[0] - 1.0).abs() < 1e-12);
    assert!((w[1] - 8.0 / 9.0).abs() < 1e-12);
    assert!(w[2].abs() < 1e-12);

    // GIoU hand case
    let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
    let b = BoundingBox::new(1.0, 1.0, 3.0, 3.0).unwrap();
    let giou_err = (giou_loss(&a, &b) - (1.0 + 5.0 / 63.0)).abs();
    assert!(giou_err < 1e-12, "giou loss {}", giou_loss(&a, &b));

    pass(
        "criterion 2 (closed-form oracles)",
        format!("single-location |err| {err:.2e} < 1e-9; w- example and GIoU case within 1e-12"),
    );
}

// ── criterion 3: invariant suite ────────────────────────────────────────

fn random_instance(
    seed: u64,
    categories: usize,
) -> (LocationSet, Vec<GtObject>, DensePredictions, Tape) {
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
    let mut rng = SplitMix64::derive(seed, 0xACC3);
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
    let tape = Tape::new();
    let preds = DensePredictions {
        cls_logits: DiffArray::leaf(
            &tape,
            vec![l, categories],
            (0..l * categories).map(|_| rng.normal()).collect(),
        )
        .unwrap(),
        obj_logits: DiffArray::leaf(&tape, vec![l, 1], (0..l).map(|_| rng.normal()).collect())
            .unwrap(),
        ltrb: DiffArray::leaf(
            &tape,
            vec![l, 4],
            (0..l * 4).map(|_| rng.range_f64(1.5, 9.0)).collect(),
        )
        .unwrap(),
    };
    (locations, objects, preds, tape)
}

#[test]
fn criterion_3_invariant_suite() {
    let start = Instant::now();
    let cfg = AssignConfig::default();
    let categories = 2usize;

    for seed in 0..20u64 {
        let (locations, objects, preds, tape) = random_instance(seed, categories);
        let prior = CenterPrior::new(PriorMode::Category, categories);
        let bound = prior.bind(&tape).unwrap();
        let out = autoassign_loss(
            &preds,
            &objects,
            &locations,
            &bound,
            &cfg,
            &AssignStrategy::Learned,
            None,
        )
        .unwrap();

        // sum of positive weights per object
        for obj in &out.report.objects {
            let total: f64 = obj.entries.iter().map(|e| e.w_pos).sum();
            assert!((total - 1.0).abs() < 1e-6, "seed {seed}: sum w+ = {total}");
        }

        // negative weight range, per-box argmax at exactly zero, outside at one
        assert!(out.report.w_neg.iter().all(|&w| (0.0..=1.0).contains(&w)));
        for (obj, gt) in objects.iter().enumerate() {
            let set = inside_mask(&locations, &gt.bbox, cfg.inside_rule);
            let best = set
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    out.report.max_iou[a]
                        .partial_cmp(&out.report.max_iou[b])
                        .unwrap()
                })
                .unwrap();
            assert_eq!(
                out.report.w_neg[best], 0.0,
                "seed {seed} object {obj}: argmax-IoU weight"
            );
        }
        let inside_any: Vec<bool> = {
            let mut mask = vec![false; locations.len()];
            for gt in &objects {
                for i in inside_mask(&locations, &gt.bbox, cfg.inside_rule) {
                    mask[i] = true;
                }
            }
            mask
        };
        for (i, inside) in inside_any.iter().enumerate() {
            if !inside {
                assert_eq!(
                    out.report.w_neg[i], 1.0,
                    "seed {seed}: outside location {i}"
                );
            }
        }
    }

    // regression gradients must not feel the negative term: zeroing every
    // negative weight leaves them bit-identical
    for seed in 0..5u64 {
        let grads_for = |zero_negatives: bool| {
            let (locations, objects, preds, tape) = random_instance(seed, categories);
            let prior = CenterPrior::new(PriorMode::Category, categories);
            let bound = prior.bind(&tape).unwrap();
            let frozen = zero_negatives.then(|| NegativeWeightMap {
                per_location: vec![0.0; locations.len()],
                per_class: vec![0.0; locations.len() * categories],
                max_iou: vec![0.0; locations.len()],
            });
            let out = autoassign_loss(
                &preds,
                &objects,
                &locations,
                &bound,
                &cfg,
                &AssignStrategy::Learned,
                frozen.as_ref(),
            )
            .unwrap();
            let grads = tape.backward(&out.loss).unwrap();
            grads.wrt(&preds.ltrb).unwrap().to_vec()
        };
        let with_negative = grads_for(false);
        let without_negative = grads_for(true);
        assert_eq!(
            with_negative, without_negative,
            "seed {seed}: regression gradient leak"
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "invariant suite took {elapsed:?}");
    pass(
        "criterion 3 (invariant suite)",
        format!("w+ normalization, w- range/argmax/outside, stop-gradient contract; {elapsed:.1?}"),
    );
}

// ── criterion 4: learned prior direction ────────────────────────────────

#[test]
fn criterion_4_learned_prior_direction() {
    let start = Instant::now();
    let bench = offset_probe_benchmark();
    // category 0 is the bottom-heavy bar (+0.25 of height); category 1 has
    // zero evidence offset
    assert!(bench.scene.categories[0].offset_y > 0.0);
    assert_eq!(bench.scene.categories[1].offset_y, 0.0);

    let mut details = Vec::new();
    for seed in [1u64, 2, 3] {
        let out = run_strategy(StrategyName::AutoAssign, &bench, seed).unwrap();
        let mu = out.prior.mu_rows();
        let (offset_mu_y, centered) = (mu[0].1, mu[1]);
        assert!(
            offset_mu_y > 0.1,
            "seed {seed}: bottom-heavy category learned mu_y {offset_mu_y}, expected > 0.1"
        );
        assert!(
            centered.0.abs() < 0.5 && centered.1.abs() < 0.5,
            "seed {seed}: zero-offset category drifted to {centered:?}"
        );
        details.push(format!(
            "seed {seed}: mu_y {offset_mu_y:.2}, centered ({:.2},{:.2})",
            centered.0, centered.1
        ));
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 900,
        "learned-prior runs took {elapsed:?}"
    );
    pass(
        "criterion 4 (learned prior direction)",
        format!("{}; {elapsed:.1?}", details.join("; ")),
    );
}

// ── criterion 5: strategy ordering ──────────────────────────────────────

#[test]
fn criterion_5_strategy_ordering() {
    let start = Instant::now();
    let bench = standard_benchmark();
    let seeds = [1u64, 2, 3];

    let mean_ap = |name: StrategyName| -> f64 {
        let total: f64 = seeds
            .iter()
            .map(|&s| run_strategy(name, &bench, s).unwrap().eval.mean_ap50)
            .sum();
        total / seeds.len() as f64
    };

    let autoassign = mean_ap(StrategyName::AutoAssign);
    let uniform = mean_ap(StrategyName::UniformInBox);
    let cs_ranges = mean_ap(StrategyName::CenterSamplingScaleRanges);
    let fixed_prior = mean_ap(StrategyName::FixedPrior);
    let none_prior = mean_ap(StrategyName::NonePrior);

    assert!(
        autoassign >= uniform,
        "autoassign {autoassign:.3} < uniform-inbox {uniform:.3}"
    );
    assert!(
        autoassign >= cs_ranges,
        "autoassign {autoassign:.3} < center-sampling+scale-ranges {cs_ranges:.3}"
    );
    assert!(
        none_prior < fixed_prior,
        "prior none {none_prior:.3} must underperform fixed {fixed_prior:.3}"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 1800,
        "strategy ordering runs took {elapsed:?}"
    );
    pass(
        "criterion 5 (strategy ordering)",
        format!(
            "mean AP50 over 3 seeds: autoassign {autoassign:.3} >= uniform {uniform:.3}, \
             >= cs+ranges {cs_ranges:.3}; none {none_prior:.3} < fixed {fixed_prior:.3}; {elapsed:.1?}"
        ),
    );
}

// ── criterion 6: ablation-mode coherence ────────────────────────────────

#[test]
fn criterion_6_ablation_mode_coherence() {
    // cls-only equals full with the localization factor pinned to exactly 1
    // (a subnormal lambda makes exp(-lambda * loss) == 1.0 bitwise)
    let categories = 1usize;
    let run_total = |cfg: AssignConfig, pin_logits: bool, seed: u64| {
        let (locations, objects, preds, tape) = {
            let (locations, objects, mut preds, tape) = random_instance(seed, categories);
            if pin_logits {
                let l = locations.len();
                preds.cls_logits = DiffArray::leaf(&tape, vec![l, 1], vec![1e9; l]).unwrap();
                preds.obj_logits = DiffArray::leaf(&tape, vec![l, 1], vec![1e9; l]).unwrap();
            }
            (locations, objects, preds, tape)
        };
        let prior = CenterPrior::new(PriorMode::Category, categories);
        let bound = prior.bind(&tape).unwrap();
        autoassign_loss(
            &preds,
            &objects,
            &locations,
            &bound,
            &cfg,
            &AssignStrategy::Learned,
            None,
        )
        .unwrap()
        .breakdown
    };

    for seed in 0..5u64 {
        let cls_only = run_total(
            AssignConfig {
                confidence_mode: ConfidenceMode::ClsOnly,
                ..AssignConfig::default()
            },
            false,
            seed,
        );
        let pinned_loc = run_total(
            AssignConfig {
                lambda: f64::MIN_POSITIVE,
                confidence_mode: ConfidenceMode::Full,
                ..AssignConfig::default()
            },
            false,
            seed,
        );
        assert_eq!(
            cls_only.total.to_bits(),
            pinned_loc.total.to_bits(),
            "seed {seed}: cls-only pin"
        );

        // loc-only: classification factor pinned to 1 inside P+ by saturated
        // logits; positive terms must agree bitwise, and the negative term
        // (which never sees the localization factor) must match the full
        // pipeline on the same predictions
        let loc_only = run_total(
            AssignConfig {
                confidence_mode: ConfidenceMode::LocOnly,
                ..AssignConfig::default()
            },
            false,
            seed,
        );
        let pinned_cls = run_total(AssignConfig::default(), true, seed);
        assert_eq!(
            loc_only.positive_term.to_bits(),
            pinned_cls.positive_term.to_bits(),
            "seed {seed}: loc-only pin"
        );
        let full = run_total(AssignConfig::default(), false, seed);
        assert_eq!(
            loc_only.negative_term.to_bits(),
            full.negative_term.to_bits(),
            "seed {seed}: negative term"
        );
    }

    // every objectness mode trains briefly without a non-finite loss
    let bench = standard_benchmark();
    let mut finals = Vec::new();
    for mode in [
        ObjectnessMode::Implicit,
        ObjectnessMode::Explicit,
        ObjectnessMode::None,
    ] {
        let mut model = DetectorModel::new(bench.detector.clone(), 9).unwrap();
        let mut prior = CenterPrior::new(PriorMode::Category, 3);
        let cfg = AssignConfig {
            objectness_mode: mode,
            ..bench.assign
        };
        let train_cfg = TrainConfig {
            iterations: 40,
            scenes_per_step: 1,
            seed: 9,
            ..TrainConfig::default()
        };
        let log = train(
            &mut model,
            &mut prior,
            &bench.scene,
            &cfg,
            &StrategyKind::Learned,
            &train_cfg,
        )
        .unwrap();
        assert!(
            log.records.iter().all(|r| r.total.is_finite()),
            "{mode:?} produced a non-finite loss"
        );
        finals.push(format!("{mode:?} {:.3}", log.records.last().unwrap().total));
    }

    pass(
        "criterion 6 (ablation-mode coherence)",
        format!(
            "cls-only/loc-only pins exact over 5 seeds; objectness modes finite ({})",
            finals.join(", ")
        ),
    );
}

//! The run configuration: a plain-text `key = value` file with dotted
//! sections, one key per line, `#` comments. A parsed config fully
//! determines a run (all seeds live here, never the clock), and its
//! effective serialization is persisted next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use autoassign::assign::{ConfidenceMode, ObjectnessMode, PriorMode, UniformWeightMode};
use autoassign::geometry::InsideRule;
use autoassign::suite::SuiteOptions;
use autoassign::toydet::{
    standard_benchmark, BenchmarkConfig, CategorySpec, DetectorConfig, OptimConfig, ShapeKind,
    StrategyName,
};

use crate::errors::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub bench: BenchmarkConfig,
    pub strategy: StrategyName,
    pub uniform_weight: UniformWeightMode,
    pub gradcheck: SuiteOptions,
    pub data_scenes: usize,
    pub data_seed: u64,
    pub compare_strategies: Vec<StrategyName>,
    pub compare_seeds: Vec<u64>,
    pub eval_checkpoint: Option<PathBuf>,
    pub eval_dataset: Option<PathBuf>,
    pub dump_checkpoint: Option<PathBuf>,
    pub dump_dataset: Option<PathBuf>,
    pub dump_scene: Option<String>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bench: standard_benchmark(),
            strategy: StrategyName::AutoAssign,
            uniform_weight: UniformWeightMode::Mean,
            gradcheck: SuiteOptions::default(),
            data_scenes: 64,
            data_seed: 7,
            compare_strategies: vec![StrategyName::AutoAssign, StrategyName::UniformInBox],
            compare_seeds: vec![1, 2, 3],
            eval_checkpoint: None,
            eval_dataset: None,
            dump_checkpoint: None,
            dump_dataset: None,
            dump_scene: None,
            out_dir: PathBuf::from("runs/out"),
        }
    }
}

struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
    consumed: std::collections::BTreeSet<String>,
}

impl RawConfig {
    fn parse(text: &str) -> CliResult<RawConfig> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "line {line_no}: expected `key = value`, got `{trimmed}`"
                ))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {line_no}: empty key")));
            }
            if let Some((previous, _)) =
                entries.insert(key.clone(), (line_no, value.trim().to_string()))
            {
                let _ = previous;
                return Err(CliError::Config(format!(
                    "line {line_no}: duplicate key `{key}`"
                )));
            }
        }
        Ok(RawConfig {
            entries,
            consumed: Default::default(),
        })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.consumed.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn parse_with<T>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
    ) -> CliResult<T> {
        match self.take(key) {
            None => Ok(default),
            Some((line, raw)) => parse(&raw).ok_or_else(|| {
                CliError::Config(format!("line {line}: key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> CliResult<f64> {
        self.parse_with(key, default, |s| s.parse().ok())
    }

    fn usize(&mut self, key: &str, default: usize) -> CliResult<usize> {
        self.parse_with(key, default, |s| s.parse().ok())
    }

    fn u64(&mut self, key: &str, default: u64) -> CliResult<u64> {
        self.parse_with(key, default, |s| s.parse().ok())
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.take(key).map(|(_, v)| v)
    }

    fn finish(&self) -> CliResult<()> {
        for (key, (line, _)) in &self.entries {
            if !self.consumed.contains(key) {
                return Err(CliError::Config(format!(
                    "line {line}: unknown key `{key}`"
                )));
            }
        }
        Ok(())
    }
}

fn parse_list<T>(raw: &str, parse: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    raw.split(',').map(|p| parse(p.trim())).collect()
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let mut raw = RawConfig::parse(text)?;
    let defaults = RunConfig::default();
    let mut cfg = defaults.clone();

    // ── scene ───────────────────────────────────────────────────────────
    let scene = &mut cfg.bench.scene;
    scene.image_size = raw.usize("scene.image_size", scene.image_size)?;
    scene.objects_min = raw.usize("scene.objects_min", scene.objects_min)?;
    scene.objects_max = raw.usize("scene.objects_max", scene.objects_max)?;
    scene.noise_std = raw.f64("scene.noise_std", scene.noise_std)?;
    scene.max_overlap_iou = raw.f64("scene.max_overlap_iou", scene.max_overlap_iou)?;
    scene.placement_retries = raw.usize("scene.placement_retries", scene.placement_retries)?;

    let declared = raw.usize("scene.categories", 0)?;
    if declared > 0 {
        let mut categories = Vec::with_capacity(declared);
        for i in 0..declared {
            let prefix = format!("scene.category.{i}");
            let kind_key = format!("{prefix}.kind");
            let (line, kind_raw) = raw.take(&kind_key).ok_or_else(|| {
                CliError::Config(format!(
                    "missing key `{kind_key}` ({declared} categories declared)"
                ))
            })?;
            let kind = ShapeKind::parse(&kind_raw).ok_or_else(|| {
                CliError::Config(format!("line {line}: `{kind_key}`: unknown shape `{kind_raw}` (rect, ellipse, bottom-bar, left-bar)"))
            })?;
            categories.push(CategorySpec {
                kind,
                size_min: raw.f64(&format!("{prefix}.size_min"), 10.0)?,
                size_max: raw.f64(&format!("{prefix}.size_max"), 30.0)?,
                offset_x: raw.f64(&format!("{prefix}.offset_x"), 0.0)?,
                offset_y: raw.f64(&format!("{prefix}.offset_y"), 0.0)?,
                intensity: raw.f64(&format!("{prefix}.intensity"), 0.8)?,
                evidence_scale: raw.f64(&format!("{prefix}.evidence_scale"), 1.0)?,
            });
        }
        scene.categories = categories;
    }
    scene
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    // ── assignment ──────────────────────────────────────────────────────
    let assign = &mut cfg.bench.assign;
    assign.tau = raw.f64("assign.tau", assign.tau)?;
    assign.lambda = raw.f64("assign.lambda", assign.lambda)?;
    assign.focal_alpha = raw.f64("assign.focal_alpha", assign.focal_alpha)?;
    assign.focal_gamma = raw.f64("assign.focal_gamma", assign.focal_gamma)?;
    assign.iou_clamp_epsilon = raw.f64("assign.iou_clamp_epsilon", assign.iou_clamp_epsilon)?;
    assign.probability_floor = raw.f64("assign.probability_floor", assign.probability_floor)?;
    assign.confidence_mode = raw.parse_with(
        "assign.confidence_mode",
        assign.confidence_mode,
        |s| match s {
            "full" => Some(ConfidenceMode::Full),
            "cls-only" => Some(ConfidenceMode::ClsOnly),
            "loc-only" => Some(ConfidenceMode::LocOnly),
            _ => None,
        },
    )?;
    assign.objectness_mode = raw.parse_with(
        "assign.objectness_mode",
        assign.objectness_mode,
        |s| match s {
            "implicit" => Some(ObjectnessMode::Implicit),
            "explicit" => Some(ObjectnessMode::Explicit),
            "none" => Some(ObjectnessMode::None),
            _ => None,
        },
    )?;
    assign.inside_rule = raw.parse_with("assign.inside_rule", assign.inside_rule, |s| match s {
        "strict" => Some(InsideRule::Strict),
        "inclusive" => Some(InsideRule::Inclusive),
        _ => None,
    })?;
    assign
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    // ── prior ───────────────────────────────────────────────────────────
    cfg.bench.prior_mode = raw.parse_with("prior.mode", cfg.bench.prior_mode, |s| match s {
        "none" => Some(PriorMode::None),
        "fixed" => Some(PriorMode::Fixed),
        "shared" => Some(PriorMode::Shared),
        "category" => Some(PriorMode::Category),
        _ => None,
    })?;
    cfg.bench.prior_init_mu = raw.f64("prior.init_mu", cfg.bench.prior_init_mu)?;
    cfg.bench.prior_init_sigma = raw.f64("prior.init_sigma", cfg.bench.prior_init_sigma)?;

    // ── model ───────────────────────────────────────────────────────────
    let levels = raw.parse_with("model.levels", cfg.bench.detector.strides.clone(), |s| {
        parse_list(s, |p| p.parse::<usize>().ok())
    })?;
    cfg.bench.detector = DetectorConfig {
        image_size: cfg.bench.scene.image_size,
        categories: cfg.bench.scene.categories.len(),
        stem_channels: raw.usize("model.stem_channels", cfg.bench.detector.stem_channels)?,
        mid_channels: raw.usize("model.mid_channels", cfg.bench.detector.mid_channels)?,
        head_channels: raw.usize("model.head_channels", cfg.bench.detector.head_channels)?,
        strides: levels,
        cls_bias_init: raw.f64("model.cls_bias_init", cfg.bench.detector.cls_bias_init)?,
    };
    cfg.bench
        .detector
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    // ── strategy ────────────────────────────────────────────────────────
    cfg.strategy = raw.parse_with("strategy.kind", cfg.strategy, StrategyName::parse)?;
    cfg.bench.center_radius = raw.f64("strategy.center_radius", cfg.bench.center_radius)?;
    cfg.bench.scale_ranges = raw.parse_with(
        "strategy.scale_ranges",
        cfg.bench.scale_ranges.clone(),
        |s| {
            parse_list(s, |p| {
                let (lo, hi) = p.split_once(':')?;
                Some((lo.parse().ok()?, hi.parse().ok()?))
            })
        },
    )?;
    if cfg.bench.scale_ranges.len() != cfg.bench.detector.strides.len() {
        return Err(CliError::Config(format!(
            "strategy.scale_ranges has {} entries for {} pyramid levels",
            cfg.bench.scale_ranges.len(),
            cfg.bench.detector.strides.len()
        )));
    }
    cfg.uniform_weight =
        raw.parse_with("strategy.uniform_weight", cfg.uniform_weight, |s| match s {
            "mean" => Some(UniformWeightMode::Mean),
            "one" => Some(UniformWeightMode::One),
            _ => None,
        })?;

    // ── training ────────────────────────────────────────────────────────
    let train = &mut cfg.bench.train;
    train.iterations = raw.usize("train.iterations", train.iterations)?;
    train.scenes_per_step = raw.usize("train.scenes_per_step", train.scenes_per_step)?;
    train.seed = raw.u64("train.seed", train.seed)?;
    train.prior_mu_lr_scale = raw.f64("train.mu_lr_scale", train.prior_mu_lr_scale)?;
    train.prior_sigma_lr_scale = raw.f64("train.sigma_lr_scale", train.prior_sigma_lr_scale)?;
    train.optim = OptimConfig {
        learning_rate: raw.f64("train.learning_rate", train.optim.learning_rate)?,
        momentum: raw.f64("train.momentum", train.optim.momentum)?,
        weight_decay: raw.f64("train.weight_decay", train.optim.weight_decay)?,
        milestones: raw.parse_with("train.milestones", train.optim.milestones.clone(), |s| {
            parse_list(s, |p| p.parse().ok())
        })?,
        decay_factor: raw.f64("train.decay_factor", train.optim.decay_factor)?,
        warmup_fraction: raw.f64("train.warmup_fraction", train.optim.warmup_fraction)?,
        clip_grad_norm: raw.f64("train.clip_grad_norm", train.optim.clip_grad_norm)?,
    };

    // ── evaluation ──────────────────────────────────────────────────────
    cfg.bench.eval_scenes = raw.usize("eval.scenes", cfg.bench.eval_scenes)?;
    cfg.bench.eval_seed = raw.u64("eval.seed", cfg.bench.eval_seed)?;
    cfg.bench.score_threshold = raw.f64("eval.score_threshold", cfg.bench.score_threshold)?;
    cfg.bench.nms_iou = raw.f64("eval.nms_iou", cfg.bench.nms_iou)?;
    cfg.bench.ap_iou = raw.f64("eval.ap_iou", cfg.bench.ap_iou)?;
    cfg.eval_checkpoint = raw.string("eval.checkpoint").map(PathBuf::from);
    cfg.eval_dataset = raw.string("eval.dataset").map(PathBuf::from);

    // ── data generation ─────────────────────────────────────────────────
    cfg.data_scenes = raw.usize("data.scenes", cfg.data_scenes)?;
    cfg.data_seed = raw.u64("data.seed", cfg.data_seed)?;

    // ── compare ─────────────────────────────────────────────────────────
    cfg.compare_strategies =
        raw.parse_with("compare.strategies", cfg.compare_strategies.clone(), |s| {
            parse_list(s, StrategyName::parse)
        })?;
    cfg.compare_seeds = raw.parse_with("compare.seeds", cfg.compare_seeds.clone(), |s| {
        parse_list(s, |p| p.parse().ok())
    })?;

    // ── gradcheck ───────────────────────────────────────────────────────
    cfg.gradcheck = SuiteOptions {
        seeds: raw.u64("gradcheck.seeds", cfg.gradcheck.seeds)?,
        unit_tolerance: raw.f64("gradcheck.unit_tolerance", cfg.gradcheck.unit_tolerance)?,
        model_tolerance: raw.f64("gradcheck.model_tolerance", cfg.gradcheck.model_tolerance)?,
        epsilon: raw.f64("gradcheck.epsilon", cfg.gradcheck.epsilon)?,
        corrupt: raw.string("gradcheck.corrupt").filter(|s| !s.is_empty()),
    };

    // ── dump-weights ────────────────────────────────────────────────────
    cfg.dump_checkpoint = raw.string("dump.checkpoint").map(PathBuf::from);
    cfg.dump_dataset = raw.string("dump.dataset").map(PathBuf::from);
    cfg.dump_scene = raw.string("dump.scene");

    // ── output ──────────────────────────────────────────────────────────
    if let Some(dir) = raw.string("out.dir") {
        cfg.out_dir = PathBuf::from(dir);
    }

    raw.finish()?;
    Ok(cfg)
}

/// Serializes the effective configuration in canonical key order. Floats
/// use the shortest round-trip decimal form, so a persisted config re-runs
/// bit-identically.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let mut push = |key: &str, value: String| {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    };

    let scene = &cfg.bench.scene;
    push("scene.image_size", scene.image_size.to_string());
    push("scene.objects_min", scene.objects_min.to_string());
    push("scene.objects_max", scene.objects_max.to_string());
    push("scene.noise_std", scene.noise_std.to_string());
    push("scene.max_overlap_iou", scene.max_overlap_iou.to_string());
    push(
        "scene.placement_retries",
        scene.placement_retries.to_string(),
    );
    push("scene.categories", scene.categories.len().to_string());
    for (i, c) in scene.categories.iter().enumerate() {
        push(
            &format!("scene.category.{i}.kind"),
            c.kind.name().to_string(),
        );
        push(
            &format!("scene.category.{i}.size_min"),
            c.size_min.to_string(),
        );
        push(
            &format!("scene.category.{i}.size_max"),
            c.size_max.to_string(),
        );
        push(
            &format!("scene.category.{i}.offset_x"),
            c.offset_x.to_string(),
        );
        push(
            &format!("scene.category.{i}.offset_y"),
            c.offset_y.to_string(),
        );
        push(
            &format!("scene.category.{i}.intensity"),
            c.intensity.to_string(),
        );
        push(
            &format!("scene.category.{i}.evidence_scale"),
            c.evidence_scale.to_string(),
        );
    }

    let assign = &cfg.bench.assign;
    push("assign.tau", assign.tau.to_string());
    push("assign.lambda", assign.lambda.to_string());
    push("assign.focal_alpha", assign.focal_alpha.to_string());
    push("assign.focal_gamma", assign.focal_gamma.to_string());
    push(
        "assign.confidence_mode",
        match assign.confidence_mode {
            ConfidenceMode::Full => "full",
            ConfidenceMode::ClsOnly => "cls-only",
            ConfidenceMode::LocOnly => "loc-only",
        }
        .to_string(),
    );
    push(
        "assign.objectness_mode",
        match assign.objectness_mode {
            ObjectnessMode::Implicit => "implicit",
            ObjectnessMode::Explicit => "explicit",
            ObjectnessMode::None => "none",
        }
        .to_string(),
    );
    push(
        "assign.iou_clamp_epsilon",
        assign.iou_clamp_epsilon.to_string(),
    );
    push(
        "assign.probability_floor",
        assign.probability_floor.to_string(),
    );
    push(
        "assign.inside_rule",
        match assign.inside_rule {
            InsideRule::Strict => "strict",
            InsideRule::Inclusive => "inclusive",
        }
        .to_string(),
    );

    push(
        "prior.mode",
        match cfg.bench.prior_mode {
            PriorMode::None => "none",
            PriorMode::Fixed => "fixed",
            PriorMode::Shared => "shared",
            PriorMode::Category => "category",
        }
        .to_string(),
    );
    push("prior.init_mu", cfg.bench.prior_init_mu.to_string());
    push("prior.init_sigma", cfg.bench.prior_init_sigma.to_string());

    let det = &cfg.bench.detector;
    push("model.stem_channels", det.stem_channels.to_string());
    push("model.mid_channels", det.mid_channels.to_string());
    push("model.head_channels", det.head_channels.to_string());
    push(
        "model.levels",
        det.strides
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    push("model.cls_bias_init", det.cls_bias_init.to_string());

    push("strategy.kind", cfg.strategy.name().to_string());
    push(
        "strategy.center_radius",
        cfg.bench.center_radius.to_string(),
    );
    push(
        "strategy.scale_ranges",
        cfg.bench
            .scale_ranges
            .iter()
            .map(|(lo, hi)| format!("{lo}:{hi}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    push(
        "strategy.uniform_weight",
        match cfg.uniform_weight {
            UniformWeightMode::Mean => "mean",
            UniformWeightMode::One => "one",
        }
        .to_string(),
    );

    let train = &cfg.bench.train;
    push("train.iterations", train.iterations.to_string());
    push("train.scenes_per_step", train.scenes_per_step.to_string());
    push("train.seed", train.seed.to_string());
    push("train.learning_rate", train.optim.learning_rate.to_string());
    push("train.momentum", train.optim.momentum.to_string());
    push("train.weight_decay", train.optim.weight_decay.to_string());
    push(
        "train.milestones",
        train
            .optim
            .milestones
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    push("train.decay_factor", train.optim.decay_factor.to_string());
    push(
        "train.warmup_fraction",
        train.optim.warmup_fraction.to_string(),
    );
    push(
        "train.clip_grad_norm",
        train.optim.clip_grad_norm.to_string(),
    );
    push("train.mu_lr_scale", train.prior_mu_lr_scale.to_string());
    push(
        "train.sigma_lr_scale",
        train.prior_sigma_lr_scale.to_string(),
    );

    push("eval.scenes", cfg.bench.eval_scenes.to_string());
    push("eval.seed", cfg.bench.eval_seed.to_string());
    push(
        "eval.score_threshold",
        cfg.bench.score_threshold.to_string(),
    );
    push("eval.nms_iou", cfg.bench.nms_iou.to_string());
    push("eval.ap_iou", cfg.bench.ap_iou.to_string());
    if let Some(p) = &cfg.eval_checkpoint {
        push("eval.checkpoint", p.display().to_string());
    }
    if let Some(p) = &cfg.eval_dataset {
        push("eval.dataset", p.display().to_string());
    }

    push("data.scenes", cfg.data_scenes.to_string());
    push("data.seed", cfg.data_seed.to_string());

    push(
        "compare.strategies",
        cfg.compare_strategies
            .iter()
            .map(|s| s.name().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    push(
        "compare.seeds",
        cfg.compare_seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );

    push("gradcheck.seeds", cfg.gradcheck.seeds.to_string());
    push(
        "gradcheck.unit_tolerance",
        cfg.gradcheck.unit_tolerance.to_string(),
    );
    push(
        "gradcheck.model_tolerance",
        cfg.gradcheck.model_tolerance.to_string(),
    );
    push("gradcheck.epsilon", cfg.gradcheck.epsilon.to_string());
    if let Some(corrupt) = &cfg.gradcheck.corrupt {
        push("gradcheck.corrupt", corrupt.clone());
    }

    if let Some(p) = &cfg.dump_checkpoint {
        push("dump.checkpoint", p.display().to_string());
    }
    if let Some(p) = &cfg.dump_dataset {
        push("dump.dataset", p.display().to_string());
    }
    if let Some(s) = &cfg.dump_scene {
        push("dump.scene", s.clone());
    }

    push("out.dir", cfg.out_dir.display().to_string());
    out
}

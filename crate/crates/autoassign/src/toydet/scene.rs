//! Procedural grayscale scenes with controllable per-category appearance.
//!
//! Each object is a ground-truth box whose rendered evidence covers only
//! part of the box, optionally displaced from the box center, so in-box
//! background is plentiful and category appearance distributions are
//! controllable (bottom-heavy bars, off-center blobs, ...).

use thiserror::Error;

use crate::assign::GtObject;
use crate::geometry::{iou, BoundingBox};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {detail}")]
    InvalidConfig { detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    FilledRect,
    Ellipse,
    BottomBar,
    LeftBar,
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::FilledRect => "rect",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::BottomBar => "bottom-bar",
            ShapeKind::LeftBar => "left-bar",
        }
    }

    pub fn parse(s: &str) -> Option<ShapeKind> {
        match s {
            "rect" => Some(ShapeKind::FilledRect),
            "ellipse" => Some(ShapeKind::Ellipse),
            "bottom-bar" => Some(ShapeKind::BottomBar),
            "left-bar" => Some(ShapeKind::LeftBar),
            _ => None,
        }
    }

    /// Evidence half-extents as fractions of the box width/height.
    fn half_extents(&self) -> (f64, f64) {
        match self {
            ShapeKind::FilledRect => (0.30, 0.30),
            ShapeKind::Ellipse => (0.32, 0.32),
            ShapeKind::BottomBar => (0.40, 0.18),
            ShapeKind::LeftBar => (0.18, 0.40),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CategorySpec {
    pub kind: ShapeKind,
    /// Box side length range in pixels (width and height drawn separately).
    pub size_min: f64,
    pub size_max: f64,
    /// Evidence displacement from the box center as a fraction of box
    /// width/height, each in [-0.5, 0.5].
    pub offset_x: f64,
    pub offset_y: f64,
    /// Rendered evidence brightness.
    pub intensity: f64,
    /// Multiplier on the shape's evidence extent. Below 1 the box carries
    /// proportionally more background, which is what makes location
    /// weighting matter.
    pub evidence_scale: f64,
}

#[derive(Debug, Clone)]
pub struct SceneGenConfig {
    pub image_size: usize,
    pub categories: Vec<CategorySpec>,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Std of additive Gaussian pixel noise.
    pub noise_std: f64,
    /// Placement retries give up when a candidate overlaps an existing box
    /// above this IoU.
    pub max_overlap_iou: f64,
    pub placement_retries: usize,
}

impl SceneGenConfig {
    // negated comparisons are deliberate: NaN values must fail validation
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut problems = Vec::new();
        if self.image_size < 8 {
            problems.push(format!("image_size {} too small", self.image_size));
        }
        if self.categories.is_empty() {
            problems.push("at least one category required".into());
        }
        if self.objects_min > self.objects_max {
            problems.push(format!(
                "objects range ({}, {}) inverted",
                self.objects_min, self.objects_max
            ));
        }
        for (i, c) in self.categories.iter().enumerate() {
            if !(c.size_min >= 2.0 && c.size_min <= c.size_max) {
                problems.push(format!(
                    "category {i}: size range ({}, {}) invalid",
                    c.size_min, c.size_max
                ));
            }
            if c.size_max > (self.image_size as f64) - 2.0 {
                problems.push(format!(
                    "category {i}: max size {} does not fit the image",
                    c.size_max
                ));
            }
            if !(-0.5..=0.5).contains(&c.offset_x) || !(-0.5..=0.5).contains(&c.offset_y) {
                problems.push(format!(
                    "category {i}: evidence offset must lie in [-0.5, 0.5]"
                ));
            }
            if !(c.intensity > 0.0) {
                problems.push(format!("category {i}: intensity must be positive"));
            }
            if !(c.evidence_scale > 0.0 && c.evidence_scale <= 1.25) {
                problems.push(format!(
                    "category {i}: evidence_scale {} out of (0, 1.25]",
                    c.evidence_scale
                ));
            }
        }
        if !(self.noise_std >= 0.0) {
            problems.push(format!("noise_std {} invalid", self.noise_std));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SceneError::InvalidConfig {
                detail: problems.join("; "),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// Row-major `size * size` grayscale pixels.
    pub image: Vec<f64>,
    pub size: usize,
    pub objects: Vec<GtObject>,
    pub seed: u64,
    /// Objects dropped because no non-overlapping placement was found.
    pub placement_failures: usize,
}

/// Deterministic scene synthesis: identical (config, seed) pairs produce
/// byte-identical scenes.
pub fn generate_scene(cfg: &SceneGenConfig, seed: u64) -> SyntheticScene {
    debug_assert!(cfg.validate().is_ok());
    let mut rng = SplitMix64::new(seed);
    let size = cfg.image_size as f64;

    let wanted = rng.range_usize(cfg.objects_min, cfg.objects_max);
    let mut objects: Vec<GtObject> = Vec::with_capacity(wanted);
    let mut placement_failures = 0usize;

    for _ in 0..wanted {
        let category = rng.range_usize(0, cfg.categories.len() - 1);
        let spec = &cfg.categories[category];
        let mut placed = false;
        for _ in 0..cfg.placement_retries.max(1) {
            let w = rng.range_f64(spec.size_min, spec.size_max);
            let h = rng.range_f64(spec.size_min, spec.size_max);
            let x1 = rng.range_f64(1.0, size - 1.0 - w);
            let y1 = rng.range_f64(1.0, size - 1.0 - h);
            let bbox = match BoundingBox::new(x1, y1, x1 + w, y1 + h) {
                Ok(b) => b,
                Err(_) => continue,
            };
            if objects
                .iter()
                .all(|o| iou(&o.bbox, &bbox) <= cfg.max_overlap_iou)
            {
                objects.push(GtObject { bbox, category });
                placed = true;
                break;
            }
        }
        if !placed {
            placement_failures += 1;
        }
    }

    let mut image = vec![0.0f64; cfg.image_size * cfg.image_size];
    for obj in &objects {
        render_evidence(
            &mut image,
            cfg.image_size,
            obj,
            &cfg.categories[obj.category],
        );
    }
    if cfg.noise_std > 0.0 {
        for px in image.iter_mut() {
            *px += rng.normal_scaled(0.0, cfg.noise_std);
        }
    }

    SyntheticScene {
        image,
        size: cfg.image_size,
        objects,
        seed,
        placement_failures,
    }
}

fn render_evidence(image: &mut [f64], size: usize, obj: &GtObject, spec: &CategorySpec) {
    let b = &obj.bbox;
    let (w, h) = (b.width(), b.height());
    let (cx, cy) = b.center();
    let ex = cx + spec.offset_x * w;
    let ey = cy + spec.offset_y * h;
    let (fx, fy) = spec.kind.half_extents();
    let (hw, hh) = (fx * w * spec.evidence_scale, fy * h * spec.evidence_scale);

    let x_lo = (ex - hw).max(b.x1).floor().max(0.0) as usize;
    let x_hi = ((ex + hw).min(b.x2).ceil() as usize).min(size);
    let y_lo = (ey - hh).max(b.y1).floor().max(0.0) as usize;
    let y_hi = ((ey + hh).min(b.y2).ceil() as usize).min(size);

    for py in y_lo..y_hi {
        for px in x_lo..x_hi {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            if !b.contains_strict(x, y) {
                continue;
            }
            let (dx, dy) = (x - ex, y - ey);
            let hit = match spec.kind {
                ShapeKind::Ellipse => (dx / hw).powi(2) + (dy / hh).powi(2) <= 1.0,
                _ => dx.abs() <= hw && dy.abs() <= hh,
            };
            if hit {
                image[py * size + px] = spec.intensity;
            }
        }
    }
}

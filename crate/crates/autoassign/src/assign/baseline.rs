//! Fixed assignment strategies used as comparison ladders: uniform in-box
//! weighting, center sampling, and center sampling with per-level scale
//! ranges. Their losses run through the same evaluator with the learned
//! weights replaced by these fixed ones.

use crate::geometry::{ltrb_encode, BoundingBox, LocationSet};

/// Weight given to each selected positive location. The uniform baseline
/// reads "remove the weighting" as `1/|set|` by default; `One` (weight 1
/// for every candidate) is available behind this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UniformWeightMode {
    #[default]
    Mean,
    One,
}

#[derive(Debug, Clone)]
pub enum BaselineStrategy {
    /// Every in-box location is positive with equal weight; negatives keep
    /// weight 1 everywhere, in-box locations included.
    UniformInBox,
    /// Positives restricted to locations within `radius * stride` of the
    /// box center (per the location's own level).
    CenterSampling { radius: f64 },
    /// Center sampling plus per-level object-size gates: a location on
    /// level l is eligible only when the max LTRB offset to the box lies in
    /// `ranges[l]` (pixels, half-open `(lo, hi]`).
    CenterSamplingScaleRanges {
        radius: f64,
        ranges: Vec<(f64, f64)>,
    },
}

/// Precomputed positive sets and negative suppressions for one scene.
#[derive(Debug, Clone)]
pub struct FixedAssignment {
    /// Selected positive location indices per object (parallel to the
    /// object list; empty when the strategy matched nothing).
    pub positives: Vec<Vec<usize>>,
    pub uniform: UniformWeightMode,
    /// (location, category) cells whose negative weight is forced to zero.
    pub suppress: Vec<(usize, usize)>,
    /// Objects the strategy could not match; they contribute no positive
    /// term and their area stays plain background.
    pub skipped: Vec<usize>,
}

/// Builds the fixed assignment for `objects` whose in-box index sets are
/// already known.
pub fn baseline_assign(
    strategy: &BaselineStrategy,
    uniform: UniformWeightMode,
    locations: &LocationSet,
    objects: &[(BoundingBox, usize)],
    in_box: &[Vec<usize>],
) -> FixedAssignment {
    let mut positives = Vec::with_capacity(objects.len());
    let mut suppress = Vec::new();
    let mut skipped = Vec::new();

    for (n, ((bbox, category), candidates)) in objects.iter().zip(in_box).enumerate() {
        let selected: Vec<usize> = match strategy {
            BaselineStrategy::UniformInBox => candidates.clone(),
            BaselineStrategy::CenterSampling { radius } => candidates
                .iter()
                .copied()
                .filter(|&i| within_center_radius(locations, i, bbox, *radius))
                .collect(),
            BaselineStrategy::CenterSamplingScaleRanges { radius, ranges } => candidates
                .iter()
                .copied()
                .filter(|&i| {
                    within_center_radius(locations, i, bbox, *radius)
                        && within_scale_range(locations, i, bbox, ranges)
                })
                .collect(),
        };

        if selected.is_empty() {
            skipped.push(n);
        } else if !matches!(strategy, BaselineStrategy::UniformInBox) {
            // uniform-inbox keeps full negative weight everywhere; the
            // sampled strategies exempt their positives from negative loss
            suppress.extend(selected.iter().map(|&i| (i, *category)));
        }
        positives.push(selected);
    }

    FixedAssignment {
        positives,
        uniform,
        suppress,
        skipped,
    }
}

fn within_center_radius(
    locations: &LocationSet,
    i: usize,
    bbox: &BoundingBox,
    radius: f64,
) -> bool {
    let (cx, cy) = bbox.center();
    let reach = radius * locations.stride(i);
    (locations.x(i) - cx).abs() <= reach && (locations.y(i) - cy).abs() <= reach
}

fn within_scale_range(
    locations: &LocationSet,
    i: usize,
    bbox: &BoundingBox,
    ranges: &[(f64, f64)],
) -> bool {
    let (lo, hi) = ranges[locations.level(i)];
    let (l, t, r, b) = ltrb_encode(locations.x(i), locations.y(i), bbox);
    let m = l.max(t).max(r).max(b);
    m > lo && m <= hi
}

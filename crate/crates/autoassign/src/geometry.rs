//! Axis-aligned box arithmetic, pyramid location grids, inside-box masks,
//! and the stride-normalized center offsets that feed the center prior.
//!
//! Plain-f64 routines serve evaluation and the gradient-stopped IoU path;
//! the `*_diff` variants build the same math on the tape for the loss.

use thiserror::Error;

use crate::diffcore::{DiffArray, DiffError, DiffResult};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error(
        "invalid box ({x1}, {y1}, {x2}, {y2}): corners must be finite with x1 < x2 and y1 < y2"
    )]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("pyramid level {index} is zero-sized ({height}x{width}, stride {stride})")]
    ZeroSizedLevel {
        index: usize,
        height: usize,
        width: usize,
        stride: usize,
    },

    #[error("pyramid strides must be strictly increasing, got {strides:?}")]
    NonIncreasingStrides { strides: Vec<usize> },

    #[error("a pyramid needs at least one level")]
    EmptyPyramid,

    #[error("decoded box is degenerate: offsets (l {l}, t {t}, r {r}, b {b})")]
    DegenerateDecode { l: f64, t: f64, r: f64, b: f64 },
}

/// Floor applied to union and enclosing areas so near-degenerate boxes keep
/// finite values and gradients.
pub const AREA_FLOOR: f64 = 1e-9;

/// Axis-aligned box in image pixels, corners ordered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let finite = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    /// Strict interior test; edge points are outside.
    pub fn contains_strict(&self, x: f64, y: f64) -> bool {
        x > self.x1 && x < self.x2 && y > self.y1 && y < self.y2
    }

    /// Closed-boundary test (edge points count as inside).
    pub fn contains_inclusive(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }
}

/// Whether grid points exactly on a box edge belong to the box. The engine
/// default is the strict interior; the inclusive variant exists as a
/// configuration escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InsideRule {
    #[default]
    Strict,
    Inclusive,
}

/// One feature-pyramid level: a grid of `height * width` cells, each
/// covering `stride x stride` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidLevelSpec {
    pub stride: usize,
    pub height: usize,
    pub width: usize,
}

/// All locations of a pyramid in a stable order: level-major, row-major
/// within each level. Cell (i, j) at stride s sits at ((j+0.5)s, (i+0.5)s).
#[derive(Debug, Clone)]
pub struct LocationSet {
    levels: Vec<PyramidLevelSpec>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    strides: Vec<f64>,
    level_of: Vec<usize>,
    level_starts: Vec<usize>,
}

impl LocationSet {
    pub fn new(levels: &[PyramidLevelSpec]) -> Result<Self, GeometryError> {
        if levels.is_empty() {
            return Err(GeometryError::EmptyPyramid);
        }
        for (index, l) in levels.iter().enumerate() {
            if l.stride == 0 || l.height == 0 || l.width == 0 {
                return Err(GeometryError::ZeroSizedLevel {
                    index,
                    height: l.height,
                    width: l.width,
                    stride: l.stride,
                });
            }
        }
        if levels.windows(2).any(|w| w[0].stride >= w[1].stride) {
            return Err(GeometryError::NonIncreasingStrides {
                strides: levels.iter().map(|l| l.stride).collect(),
            });
        }

        let total: usize = levels.iter().map(|l| l.height * l.width).sum();
        let mut xs = Vec::with_capacity(total);
        let mut ys = Vec::with_capacity(total);
        let mut strides = Vec::with_capacity(total);
        let mut level_of = Vec::with_capacity(total);
        let mut level_starts = Vec::with_capacity(levels.len());
        for (li, l) in levels.iter().enumerate() {
            level_starts.push(xs.len());
            let s = l.stride as f64;
            for i in 0..l.height {
                for j in 0..l.width {
                    xs.push((j as f64 + 0.5) * s);
                    ys.push((i as f64 + 0.5) * s);
                    strides.push(s);
                    level_of.push(li);
                }
            }
        }
        Ok(LocationSet {
            levels: levels.to_vec(),
            xs,
            ys,
            strides,
            level_of,
            level_starts,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn levels(&self) -> &[PyramidLevelSpec] {
        &self.levels
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xs[i]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn stride(&self, i: usize) -> f64 {
        self.strides[i]
    }

    pub fn level(&self, i: usize) -> usize {
        self.level_of[i]
    }

    /// (level, grid row, grid col) of a global location index.
    pub fn grid_position(&self, i: usize) -> (usize, usize, usize) {
        let li = self.level_of[i];
        let within = i - self.level_starts[li];
        let w = self.levels[li].width;
        (li, within / w, within % w)
    }

    pub fn level_range(&self, level: usize) -> std::ops::Range<usize> {
        let start = self.level_starts[level];
        let end = start + self.levels[level].height * self.levels[level].width;
        start..end
    }
}

/// Global location indices inside one object's box.
#[derive(Debug, Clone)]
pub struct InBoxIndex {
    pub object: usize,
    pub indices: Vec<usize>,
}

impl InBoxIndex {
    /// Collects the in-box set of one object.
    pub fn collect(
        object: usize,
        locations: &LocationSet,
        bbox: &BoundingBox,
        rule: InsideRule,
    ) -> InBoxIndex {
        InBoxIndex {
            object,
            indices: inside_mask(locations, bbox, rule),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Indices of all locations inside `bbox` under the given rule, across all
/// levels, in the set's stable order. An empty result is allowed here; the
/// caller decides whether to drop the object.
pub fn inside_mask(locations: &LocationSet, bbox: &BoundingBox, rule: InsideRule) -> Vec<usize> {
    (0..locations.len())
        .filter(|&i| match rule {
            InsideRule::Strict => bbox.contains_strict(locations.x(i), locations.y(i)),
            InsideRule::Inclusive => bbox.contains_inclusive(locations.x(i), locations.y(i)),
        })
        .collect()
}

/// Stride-normalized offsets from each selected location to the box center:
/// `((x - cx) / stride, (y - cy) / stride)`. Either component may be
/// negative.
pub fn center_offsets(
    locations: &LocationSet,
    indices: &[usize],
    bbox: &BoundingBox,
) -> Vec<(f64, f64)> {
    let (cx, cy) = bbox.center();
    indices
        .iter()
        .map(|&i| {
            let s = locations.stride(i);
            ((locations.x(i) - cx) / s, (locations.y(i) - cy) / s)
        })
        .collect()
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    inter / union.max(AREA_FLOOR)
}

/// Generalized IoU: IoU minus the fraction of the smallest enclosing box not
/// covered by the union. In (-1, 1].
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.area() + b.area() - inter).max(AREA_FLOOR);
    let enclose =
        ((a.x2.max(b.x2) - a.x1.min(b.x1)) * (a.y2.max(b.y2) - a.y1.min(b.y1))).max(AREA_FLOOR);
    inter / union - (enclose - union) / enclose
}

/// GIoU loss `1 - GIoU`, in [0, 2).
pub fn giou_loss(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    1.0 - giou(pred, gt)
}

/// Decodes left/top/right/bottom offsets at a location into a box. Offsets
/// of a live prediction head are strictly positive (exp-activated), so the
/// result is non-degenerate; a zero-area decode is rejected here because
/// this entry point is the evaluation-time one.
pub fn ltrb_decode(
    x: f64,
    y: f64,
    l: f64,
    t: f64,
    r: f64,
    b: f64,
) -> Result<BoundingBox, GeometryError> {
    if l + r <= 0.0 || t + b <= 0.0 {
        return Err(GeometryError::DegenerateDecode { l, t, r, b });
    }
    BoundingBox::new(x - l, y - t, x + r, y + b)
}

/// Inverse of `ltrb_decode`: offsets from a location to the box edges.
pub fn ltrb_encode(x: f64, y: f64, bbox: &BoundingBox) -> (f64, f64, f64, f64) {
    (x - bbox.x1, y - bbox.y1, bbox.x2 - x, bbox.y2 - y)
}

// ── differentiable variants ─────────────────────────────────────────────

/// Elementwise max built from the primitive op set: a + relu(b - a).
/// Gradient follows the larger operand (ties go to `a`).
pub(crate) fn emax(a: &DiffArray, b: &DiffArray) -> DiffResult<DiffArray> {
    a.add(&b.sub(a)?.relu())
}

/// Elementwise min: a - relu(a - b). Ties go to `a`.
pub(crate) fn emin(a: &DiffArray, b: &DiffArray) -> DiffResult<DiffArray> {
    a.sub(&a.sub(b)?.relu())
}

/// Per-location GIoU loss against one ground-truth box, on the tape.
///
/// `ltrb` is a tracked `[N, 4]` array of positive offsets for locations at
/// `(xs, ys)`. Branch-free with floored denominators, matching the plain
/// routine bit-for-bit on non-degenerate inputs.
pub fn giou_loss_diff(
    ltrb: &DiffArray,
    xs: &[f64],
    ys: &[f64],
    gt: &BoundingBox,
) -> DiffResult<DiffArray> {
    let n = xs.len();
    if ltrb.shape() != [n, 4] {
        return Err(DiffError::InvalidShape {
            op: "giou_loss_diff",
            detail: format!(
                "ltrb shape {:?} does not match {} locations",
                ltrb.shape(),
                n
            ),
        });
    }
    let xs_arr = DiffArray::constant(vec![n], xs.to_vec())?;
    let ys_arr = DiffArray::constant(vec![n], ys.to_vec())?;

    let l = ltrb.select_column(0)?;
    let t = ltrb.select_column(1)?;
    let r = ltrb.select_column(2)?;
    let b = ltrb.select_column(3)?;

    let px1 = xs_arr.sub(&l)?;
    let py1 = ys_arr.sub(&t)?;
    let px2 = xs_arr.add(&r)?;
    let py2 = ys_arr.add(&b)?;

    let gx1 = DiffArray::scalar(gt.x1);
    let gy1 = DiffArray::scalar(gt.y1);
    let gx2 = DiffArray::scalar(gt.x2);
    let gy2 = DiffArray::scalar(gt.y2);

    let iw = emin(&px2, &gx2)?.sub(&emax(&px1, &gx1)?)?.relu();
    let ih = emin(&py2, &gy2)?.sub(&emax(&py1, &gy1)?)?.relu();
    let inter = iw.mul(&ih)?;

    let area_p = px2.sub(&px1)?.mul(&py2.sub(&py1)?)?;
    let union = area_p
        .add_scalar(gt.area())
        .sub(&inter)?
        .clamp(AREA_FLOOR, f64::INFINITY)?;

    let ex = emax(&px2, &gx2)?.sub(&emin(&px1, &gx1)?)?;
    let ey = emax(&py2, &gy2)?.sub(&emin(&py1, &gy1)?)?;
    let enclose = ex.mul(&ey)?.clamp(AREA_FLOOR, f64::INFINITY)?;

    let giou = inter
        .div(&union)?
        .sub(&enclose.sub(&union)?.div(&enclose)?)?;
    giou.neg().add_scalar(1.0).mul(&DiffArray::scalar(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, Tape, DEFAULT_EPSILON};
    use crate::rng::SplitMix64;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn two_level_grid() -> LocationSet {
        LocationSet::new(&[
            PyramidLevelSpec {
                stride: 4,
                height: 2,
                width: 2,
            },
            PyramidLevelSpec {
                stride: 8,
                height: 1,
                width: 1,
            },
        ])
        .unwrap()
    }

    #[test]
    fn single_level_cell_centers() {
        let set = LocationSet::new(&[PyramidLevelSpec {
            stride: 4,
            height: 2,
            width: 2,
        }])
        .unwrap();
        let got: Vec<(f64, f64)> = (0..set.len()).map(|i| (set.x(i), set.y(i))).collect();
        assert_eq!(got, vec![(2.0, 2.0), (6.0, 2.0), (2.0, 6.0), (6.0, 6.0)]);
    }

    #[test]
    fn two_level_concatenation() {
        let set = two_level_grid();
        assert_eq!(set.len(), 5);
        assert_eq!((set.x(4), set.y(4)), (4.0, 4.0));
        assert_eq!(set.level(4), 1);
        assert_eq!(set.grid_position(3), (0, 1, 1));
    }

    #[test]
    fn single_cell_center() {
        let set = LocationSet::new(&[PyramidLevelSpec {
            stride: 8,
            height: 1,
            width: 1,
        }])
        .unwrap();
        assert_eq!((set.x(0), set.y(0)), (4.0, 4.0));
    }

    #[test]
    fn zero_sized_level_rejected() {
        assert!(matches!(
            LocationSet::new(&[PyramidLevelSpec {
                stride: 4,
                height: 0,
                width: 2
            }]),
            Err(GeometryError::ZeroSizedLevel { .. })
        ));
    }

    #[test]
    fn inside_mask_covers_grid() {
        let set = LocationSet::new(&[PyramidLevelSpec {
            stride: 4,
            height: 2,
            width: 2,
        }])
        .unwrap();
        assert_eq!(
            inside_mask(&set, &bx(0.0, 0.0, 8.0, 8.0), InsideRule::Strict),
            vec![0, 1, 2, 3]
        );
        assert_eq!(
            inside_mask(&set, &bx(0.0, 0.0, 3.0, 3.0), InsideRule::Strict),
            vec![0]
        );
        assert!(inside_mask(&set, &bx(100.0, 100.0, 120.0, 120.0), InsideRule::Strict).is_empty());
    }

    #[test]
    fn edge_location_strict_vs_inclusive() {
        let set = LocationSet::new(&[PyramidLevelSpec {
            stride: 4,
            height: 1,
            width: 1,
        }])
        .unwrap();
        // location (2, 2) on the box edge
        let edge = bx(2.0, 0.0, 6.0, 6.0);
        assert!(inside_mask(&set, &edge, InsideRule::Strict).is_empty());
        assert_eq!(inside_mask(&set, &edge, InsideRule::Inclusive), vec![0]);
    }

    #[test]
    fn disjoint_boxes_split_the_mask() {
        let set = LocationSet::new(&[PyramidLevelSpec {
            stride: 4,
            height: 2,
            width: 2,
        }])
        .unwrap();
        let left = bx(0.0, 0.0, 4.0, 8.0);
        let right = bx(4.0, 0.0, 8.0, 8.0);
        let a = inside_mask(&set, &left, InsideRule::Strict);
        let b = inside_mask(&set, &right, InsideRule::Strict);
        assert_eq!(a, vec![0, 2]);
        assert_eq!(b, vec![1, 3]);
        assert!(a.iter().all(|i| !b.contains(i)));
    }

    #[test]
    fn in_box_index_carries_object_and_indices() {
        let set = two_level_grid();
        let idx = InBoxIndex::collect(3, &set, &bx(0.0, 0.0, 8.0, 8.0), InsideRule::Strict);
        assert_eq!(idx.object, 3);
        assert_eq!(idx.indices, vec![0, 1, 2, 3, 4]);
        assert!(!idx.is_empty());
    }

    #[test]
    fn offsets_at_center_are_zero() {
        let set = two_level_grid();
        let b = bx(0.0, 0.0, 8.0, 8.0); // center (4,4) = coarse location
        let d = center_offsets(&set, &[4], &b);
        assert_eq!(d, vec![(0.0, 0.0)]);
    }

    #[test]
    fn offsets_follow_the_formula() {
        let set = LocationSet::new(&[PyramidLevelSpec {
            stride: 4,
            height: 2,
            width: 2,
        }])
        .unwrap();
        let b = bx(0.0, 0.0, 8.0, 8.0);
        // location 1 is (6, 2)
        let d = center_offsets(&set, &[1], &b);
        assert_eq!(d, vec![(0.5, -0.5)]);
    }

    #[test]
    fn offsets_scale_inversely_with_stride() {
        let fine = LocationSet::new(&[PyramidLevelSpec {
            stride: 4,
            height: 4,
            width: 4,
        }])
        .unwrap();
        let coarse = LocationSet::new(&[PyramidLevelSpec {
            stride: 8,
            height: 2,
            width: 2,
        }])
        .unwrap();
        let b = bx(0.0, 0.0, 16.0, 16.0);
        // same pixel offset from center: fine (10,10) idx=2*4+2=10; coarse (12,12) idx 3
        let df = center_offsets(&fine, &[10], &b)[0];
        let dc = center_offsets(&coarse, &[3], &b)[0];
        assert!((df.0 - 0.5).abs() < 1e-12 && (dc.0 - 0.5).abs() < 1e-12);
        // identical pixel offset at double stride halves the normalized value
        let d_same_pixel = ((10.0 - 8.0) / 8.0, (10.0 - 8.0) / 8.0);
        assert_eq!(d_same_pixel.0, df.0 * 4.0 / 8.0);
    }

    #[test]
    fn iou_hand_cases() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let b = bx(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        let far = bx(10.0, 10.0, 12.0, 12.0);
        assert_eq!(iou(&a, &far), 0.0);
    }

    #[test]
    fn giou_loss_hand_cases() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(giou_loss(&a, &a), 0.0);
        let b = bx(1.0, 1.0, 3.0, 3.0);
        assert!((giou_loss(&a, &b) - (1.0 + 5.0 / 63.0)).abs() < 1e-12);
        // separation drives the loss toward 2
        let far = bx(1000.0, 0.0, 1001.0, 1.0);
        let near = bx(3.0, 0.0, 4.0, 1.0);
        let unit = bx(0.0, 0.0, 1.0, 1.0);
        assert!(giou_loss(&unit, &far) > giou_loss(&unit, &near));
        assert!(giou_loss(&unit, &far) > 1.99 && giou_loss(&unit, &far) < 2.0);
    }

    #[test]
    fn ltrb_decode_cases() {
        let b = ltrb_decode(4.0, 4.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(b, bx(3.0, 3.0, 5.0, 5.0));
        let b = ltrb_decode(4.0, 4.0, 0.0, 0.0, 2.0, 2.0).unwrap();
        assert_eq!(b, bx(4.0, 4.0, 6.0, 6.0));
        assert!(matches!(
            ltrb_decode(4.0, 4.0, 0.0, 1.0, 0.0, 1.0),
            Err(GeometryError::DegenerateDecode { .. })
        ));
    }

    #[test]
    fn decode_encode_round_trip() {
        let b = bx(1.25, 2.5, 7.75, 9.0);
        let (l, t, r, bo) = ltrb_encode(3.0, 4.0, &b);
        let back = ltrb_decode(3.0, 4.0, l, t, r, bo).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn diff_giou_matches_plain() {
        let mut rng = SplitMix64::new(17);
        let gt = bx(2.0, 3.0, 11.0, 9.0);
        for _ in 0..50 {
            let (x, y) = (rng.range_f64(0.0, 12.0), rng.range_f64(0.0, 12.0));
            let ltrb = [
                rng.range_f64(0.5, 6.0),
                rng.range_f64(0.5, 6.0),
                rng.range_f64(0.5, 6.0),
                rng.range_f64(0.5, 6.0),
            ];
            let arr = DiffArray::constant(vec![1, 4], ltrb.to_vec()).unwrap();
            let diff = giou_loss_diff(&arr, &[x], &[y], &gt).unwrap().item();
            let plain = giou_loss(
                &ltrb_decode(x, y, ltrb[0], ltrb[1], ltrb[2], ltrb[3]).unwrap(),
                &gt,
            );
            assert!((diff - plain).abs() < 1e-12, "{diff} vs {plain}");
        }
    }

    #[test]
    fn diff_giou_passes_grad_check() {
        let gt = bx(2.0, 2.0, 10.0, 8.0);
        let xs = [4.0, 6.0, 9.0];
        let ys = [5.0, 3.0, 6.0];
        let f = move |_: &Tape, inputs: &[DiffArray]| {
            giou_loss_diff(&inputs[0], &xs, &ys, &gt)
                .and_then(|l| l.sum().mul(&DiffArray::scalar(1.0)))
        };
        let mut rng = SplitMix64::new(23);
        for _ in 0..10 {
            let vals: Vec<f64> = (0..12).map(|_| rng.range_f64(1.0, 5.0)).collect();
            let ltrb = DiffArray::constant(vec![3, 4], vals).unwrap();
            let report = grad_check(&f, &[ltrb], DEFAULT_EPSILON, 1e-4).unwrap();
            assert!(report.passed(), "worst: {:?}", report.worst);
        }
    }
}

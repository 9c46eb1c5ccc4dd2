//! Randomized invariants of the geometry and weighting layers.

use proptest::prelude::*;

use autoassign::assign::{confidence_weight, negative_weights, positive_weights};
use autoassign::diffcore::DiffArray;
use autoassign::geometry::{
    giou_loss, iou, ltrb_decode, ltrb_encode, BoundingBox, InsideRule, LocationSet,
    PyramidLevelSpec,
};

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0.0f64..60.0, 0.0f64..60.0, 1.0f64..40.0, 1.0f64..40.0)
        .prop_map(|(x1, y1, w, h)| BoundingBox::new(x1, y1, x1 + w, y1 + h).unwrap())
}

proptest! {
    #[test]
    fn iou_is_symmetric(a in arb_box(), b in arb_box()) {
        prop_assert_eq!(iou(&a, &b).to_bits(), iou(&b, &a).to_bits());
    }

    #[test]
    fn iou_is_translation_invariant(a in arb_box(), b in arb_box(), dx in -20.0f64..20.0, dy in -20.0f64..20.0) {
        let shift = |v: &BoundingBox| BoundingBox::new(v.x1 + dx, v.y1 + dy, v.x2 + dx, v.y2 + dy).unwrap();
        let before = iou(&a, &b);
        let after = iou(&shift(&a), &shift(&b));
        prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn iou_is_scale_invariant(a in arb_box(), b in arb_box(), c in 0.25f64..4.0) {
        let scale = |v: &BoundingBox| BoundingBox::new(v.x1 * c, v.y1 * c, v.x2 * c, v.y2 * c).unwrap();
        let before = iou(&a, &b);
        let after = iou(&scale(&a), &scale(&b));
        prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn giou_loss_bounds(a in arb_box(), b in arb_box()) {
        let loss = giou_loss(&a, &b);
        prop_assert!(loss >= 0.0);
        prop_assert!(loss < 2.0);
        // 1 - giou <= 1 - iou + 1
        prop_assert!(loss <= 2.0 - iou(&a, &b) + 1e-12);
        prop_assert_eq!(giou_loss(&a, &a), 0.0);
    }

    #[test]
    fn decode_encode_round_trip(bbox in arb_box(), fx in 0.05f64..0.95, fy in 0.05f64..0.95) {
        // any interior point reproduces the box exactly
        let x = bbox.x1 + fx * bbox.width();
        let y = bbox.y1 + fy * bbox.height();
        let (l, t, r, b) = ltrb_encode(x, y, &bbox);
        let back = ltrb_decode(x, y, l, t, r, b).unwrap();
        prop_assert!((back.x1 - bbox.x1).abs() < 1e-9);
        prop_assert!((back.y1 - bbox.y1).abs() < 1e-9);
        prop_assert!((back.x2 - bbox.x2).abs() < 1e-9);
        prop_assert!((back.y2 - bbox.y2).abs() < 1e-9);
    }

    #[test]
    fn positive_weights_always_normalize(
        c in prop::collection::vec(0.01f64..30.0, 1..12),
        g_seed in prop::collection::vec(0.001f64..1.0, 12),
    ) {
        let n = c.len();
        let g: Vec<f64> = g_seed.into_iter().take(n).collect();
        let c_arr = DiffArray::constant(vec![n], c).unwrap();
        let g_arr = DiffArray::constant(vec![n], g).unwrap();
        let w = positive_weights(&c_arr, &g_arr).unwrap();
        let total: f64 = w.values().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6, "sum = {total}");
        prop_assert!(w.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn negative_weights_range_and_argmax(ious in prop::collection::vec(0.0f64..0.99, 1..16)) {
        let w = negative_weights(&ious, 1e-6);
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let argmax = ious
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        prop_assert_eq!(w[argmax], 0.0);
    }

    #[test]
    fn confidence_weight_is_monotone(p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        prop_assume!(p1 != p2);
        let arr = DiffArray::constant(vec![2], vec![p1, p2]).unwrap();
        let c = confidence_weight(&arr, 1.0 / 3.0);
        prop_assert_eq!(c.values()[0] > c.values()[1], p1 > p2);
    }

    #[test]
    fn inside_mask_respects_disjoint_boxes(x_split in 8.0f64..24.0) {
        let set = LocationSet::new(&[PyramidLevelSpec { stride: 4, height: 8, width: 8 }]).unwrap();
        let left = BoundingBox::new(0.1, 0.1, x_split, 31.9).unwrap();
        let right = BoundingBox::new(x_split, 0.1, 31.9, 31.9).unwrap();
        let a = autoassign::geometry::inside_mask(&set, &left, InsideRule::Strict);
        let b = autoassign::geometry::inside_mask(&set, &right, InsideRule::Strict);
        for i in &a {
            prop_assert!(!b.contains(i), "location {i} assigned to both disjoint boxes");
        }
    }
}

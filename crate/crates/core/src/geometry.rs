//! Axis-aligned box geometry: area, intersection, enclosing hull, IoU and gIoU.

use serde::{Deserialize, Serialize};

/// Axis-aligned box stored as corners `(x1, y1, x2, y2)`.
///
/// Serialized as a four-element array. Zero-area boxes are legal; their IoU
/// with anything (themselves included) is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    /// Converts the `(x, y, w, h)` form used by flat tracking files.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox::new(x, y, x + w, y + h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x1.min(other.x1),
            self.y1.min(other.y1),
            self.x2.max(other.x2),
            self.y2.max(other.y2),
        )
    }
}

/// Intersection over union. Returns 0 when either box has zero area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = a.intersection_area(b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `IoU - |C \ (a ∪ b)| / |C|` with `C` the enclosing hull.
///
/// When the hull itself has zero area the penalty term is taken as 0.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    let penalty = if hull > 0.0 {
        (hull - union) / hull
    } else {
        0.0
    };
    iou(a, b) - penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(0., 0., 1., 1.)), 1.0);
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(2., 2., 3., 3.)), 0.0);
        assert!((iou(&b(0., 0., 2., 2.), &b(1., 0., 3., 2.)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_area_has_zero_iou_even_with_itself() {
        let p = b(1., 1., 1., 3.);
        assert_eq!(iou(&p, &p), 0.0);
        assert_eq!(iou(&p, &b(0., 0., 5., 5.)), 0.0);
    }

    #[test]
    fn giou_examples() {
        assert_eq!(giou(&b(0., 0., 1., 1.), &b(0., 0., 1., 1.)), 1.0);
        assert!((giou(&b(0., 0., 1., 1.), &b(2., 0., 3., 1.)) + 1.0 / 3.0).abs() < 1e-15);
        assert!((giou(&b(0., 0., 2., 2.), &b(1., 0., 3., 2.)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn xywh_conversion() {
        assert_eq!(BBox::from_xywh(1., 2., 3., 4.), b(1., 2., 4., 6.));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.0..30.0f64, 0.0..30.0f64)
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn giou_bounded_by_iou(a in arb_box(), c in arb_box()) {
            let g = giou(&a, &c);
            let i = iou(&a, &c);
            prop_assert!(g <= i + 1e-12);
            prop_assert!(g > -1.0 - 1e-12);
            let hull = a.hull(&c).area();
            let union = a.area() + c.area() - a.intersection_area(&c);
            if a.area() > 0.0 && c.area() > 0.0 && (hull - union).abs() < 1e-12 {
                prop_assert!((g - i).abs() < 1e-12);
            }
        }

        #[test]
        fn giou_translation_invariant(a in arb_box(), c in arb_box(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
            let before = giou(&a, &c);
            let after = giou(&a.translate(dx, dy), &c.translate(dx, dy));
            prop_assert!((before - after).abs() <= 1e-12);
        }
    }
}

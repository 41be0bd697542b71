//! Axis-aligned boxes in image pixel coordinates (origin top-left).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<BBox> {
        let b = BBox { x1, y1, x2, y2 };
        if !b.is_valid() {
            return Err(Error::DegenerateBox { x1, y1, x2, y2 });
        }
        Ok(b)
    }

    pub fn is_valid(&self) -> bool {
        self.x2 > self.x1
            && self.y2 > self.y1
            && [self.x1, self.y1, self.x2, self.y2]
                .iter()
                .all(|v| v.is_finite())
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

    pub fn clip(&self, width: f64, height: f64) -> BBox {
        BBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Reflection across a vertical axis at `width` (horizontal mirror).
    pub fn hflip(&self, width: f64) -> BBox {
        BBox {
            x1: width - self.x2,
            y1: self.y1,
            x2: width - self.x1,
            y2: self.y2,
        }
    }
}

pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Intersection over union; 0 for disjoint boxes, 1 for identical ones.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    for bx in [a, b] {
        if !bx.is_valid() {
            return Err(Error::DegenerateBox {
                x1: bx.x1,
                y1: bx.y1,
                x2: bx.x2,
                y2: bx.y2,
            });
        }
    }
    Ok(iou_unchecked(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes_have_iou_one() {
        let a = BBox::new(1.0, 2.0, 5.0, 6.0).unwrap();
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_boxes_have_iou_zero() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = BBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn quarter_overlap_hand_value() {
        // intersection 5x5 = 25, union 100 + 100 - 25 = 175
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BBox::new(5.0, 5.0, 15.0, 15.0).unwrap();
        let v = iou(&a, &b).unwrap();
        assert!((v - 25.0 / 175.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        assert!(BBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
        let bad = BBox { x1: 3.0, y1: 0.0, x2: 1.0, y2: 5.0 };
        let ok = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(iou(&bad, &ok).is_err());
    }

    #[test]
    fn iou_is_symmetric_and_one_only_for_identical() {
        use rand::{Rng, SeedableRng};
        let mut rng = crate::SeedRng::seed_from_u64(17);
        for _ in 0..500 {
            let rb = |rng: &mut crate::SeedRng| {
                let x1: f64 = rng.gen_range(0.0..20.0);
                let y1: f64 = rng.gen_range(0.0..20.0);
                BBox::new(x1, y1, x1 + rng.gen_range(0.5..10.0), y1 + rng.gen_range(0.5..10.0))
                    .unwrap()
            };
            let a = rb(&mut rng);
            let b = rb(&mut rng);
            let ab = iou(&a, &b).unwrap();
            let ba = iou(&b, &a).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits());
            if ab == 1.0 {
                assert_eq!(a, b);
            }
        }
    }
}

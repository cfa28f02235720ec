//! Boxes and mask grids on the unit canvas (origin top-left, y down).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in normalized canvas coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = BBox { x0, y0, x1, y1 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::validation(
                "box",
                format!("[{x0}, {y0}, {x1}, {y1}] violates 0 <= x0 < x1 <= 1, 0 <= y0 < y1 <= 1"),
            ))
        }
    }

    /// Builds a box from `[x0, y0, x1, y1]` without validation.
    pub const fn from_array_unchecked(c: [f64; 4]) -> Self {
        BBox {
            x0: c[0],
            y0: c[1],
            x1: c[2],
            y1: c[3],
        }
    }

    pub fn is_valid(&self) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        in_unit(self.x0)
            && in_unit(self.y0)
            && in_unit(self.x1)
            && in_unit(self.y1)
            && self.x0 < self.x1
            && self.y0 < self.y1
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Area of the intersection; zero when the boxes do not overlap.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        if self == other {
            return 1.0;
        }
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Smallest box enclosing both (the superbox of a pair).
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// `true` when `other` lies strictly inside `self` on all four sides.
    pub fn strictly_contains(&self, other: &BBox) -> bool {
        self.x0 < other.x0 && other.x1 < self.x1 && self.y0 < other.y0 && other.y1 < self.y1
    }

    /// Whether the point lies in the half-open extent `[x0, x1) x [y0, y1)`.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Horizontal overlap length divided by the shorter width.
    pub fn horizontal_overlap_ratio(&self, other: &BBox) -> f64 {
        let overlap = self.x1.min(other.x1) - self.x0.max(other.x0);
        if overlap <= 0.0 {
            return 0.0;
        }
        overlap / self.width().min(other.width())
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

pub fn box_area(b: &BBox) -> f64 {
    b.area()
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

pub fn union_box(a: &BBox, b: &BBox) -> BBox {
    a.union(b)
}

/// Square grid of small integer labels, row-major.
///
/// Object masks use the alphabet `{0, 1}`; triplet masks use
/// `{0 = background, 1 = subject, 2 = object}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskGrid {
    pub side: usize,
    pub cells: Vec<u8>,
}

impl MaskGrid {
    pub fn new(side: usize, cells: Vec<u8>, alphabet: u8) -> Result<Self> {
        if side == 0 {
            return Err(Error::validation("mask.side", "must be >= 1"));
        }
        if cells.len() != side * side {
            return Err(Error::validation(
                "mask.cells",
                format!("expected {} cells, found {}", side * side, cells.len()),
            ));
        }
        if let Some(bad) = cells.iter().find(|&&c| c >= alphabet) {
            return Err(Error::validation(
                "mask.cells",
                format!("value {bad} outside alphabet 0..{alphabet}"),
            ));
        }
        Ok(MaskGrid { side, cells })
    }

    pub fn filled(side: usize, value: u8) -> Self {
        MaskGrid {
            side,
            cells: vec![value; side * side],
        }
    }

    /// Filled ellipse inscribed in the grid, by cell-center membership.
    pub fn ellipse(side: usize) -> Self {
        let mut cells = vec![0u8; side * side];
        let r = side as f64 / 2.0;
        for row in 0..side {
            for col in 0..side {
                let dy = (row as f64 + 0.5 - r) / r;
                let dx = (col as f64 + 0.5 - r) / r;
                if dx * dx + dy * dy <= 1.0 {
                    cells[row * side + col] = 1;
                }
            }
        }
        MaskGrid { side, cells }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.side + col]
    }

    pub fn foreground_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Value at box-relative coordinates `(u, v)` in `[0, 1]`.
    pub fn sample(&self, u: f64, v: f64) -> u8 {
        let idx = |t: f64| ((t * self.side as f64).floor().max(0.0) as usize).min(self.side - 1);
        self.get(idx(v), idx(u))
    }

    /// Nearest-cell resampling to a new side length.
    pub fn resample(&self, side: usize) -> MaskGrid {
        if side == self.side {
            return self.clone();
        }
        let mut cells = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                let u = (col as f64 + 0.5) / side as f64;
                let v = (row as f64 + 0.5) / side as f64;
                cells.push(self.sample(u, v));
            }
        }
        MaskGrid { side, cells }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(c: [f64; 4]) -> BBox {
        BBox::try_from(c).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(box_area(&b([0.0, 0.0, 1.0, 1.0])), 1.0);
        assert_eq!(box_area(&b([0.25, 0.25, 0.75, 0.75])), 0.25);
        assert!((box_area(&b([0.1, 0.2, 0.3, 0.9])) - 0.14).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let unit = b([0.0, 0.0, 1.0, 1.0]);
        assert_eq!(box_iou(&unit, &unit), 1.0);
        assert_eq!(box_iou(&unit, &b([0.5, 0.0, 1.0, 1.0])), 0.5);
        assert_eq!(
            box_iou(&b([0.0, 0.0, 0.4, 0.4]), &b([0.6, 0.6, 1.0, 1.0])),
            0.0
        );
    }

    #[test]
    fn union_examples() {
        let a = b([0.1, 0.1, 0.3, 0.3]);
        let c = b([0.2, 0.2, 0.6, 0.5]);
        assert_eq!(union_box(&a, &a), a);
        assert_eq!(union_box(&a, &c).to_array(), [0.1, 0.1, 0.6, 0.5]);
        assert_eq!(union_box(&a, &c), union_box(&c, &a));
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(BBox::new(0.5, 0.0, 0.5, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.1, 1.0).is_err());
        assert!(BBox::new(-0.1, 0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn mask_alphabet_enforced() {
        assert!(MaskGrid::new(2, vec![0, 1, 1, 0], 2).is_ok());
        assert!(MaskGrid::new(2, vec![0, 2, 1, 0], 2).is_err());
        assert!(MaskGrid::new(2, vec![0, 1, 1], 2).is_err());
    }

    #[test]
    fn ellipse_is_nonempty_and_inside_corners_empty() {
        let e = MaskGrid::ellipse(8);
        assert!(e.foreground_count() > 0);
        assert_eq!(e.get(0, 0), 0);
        assert_eq!(e.get(4, 4), 1);
    }

    #[test]
    fn resample_identity_and_upscale() {
        let m = MaskGrid::new(2, vec![1, 0, 0, 1], 2).unwrap();
        assert_eq!(m.resample(2), m);
        let up = m.resample(4);
        assert_eq!(up.get(0, 0), 1);
        assert_eq!(up.get(0, 3), 0);
        assert_eq!(up.get(3, 3), 1);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn arb_box() -> impl Strategy<Value = BBox> {
            (0.0..0.9f64, 0.0..0.9f64, 0.01..1.0f64, 0.01..1.0f64).prop_map(|(x, y, w, h)| {
                BBox::from_array_unchecked([x, y, (x + w).min(1.0), (y + h).min(1.0)])
            })
        }

        proptest! {
            #[test]
            fn iou_symmetric_bounded(a in arb_box(), c in arb_box()) {
                let ab = box_iou(&a, &c);
                prop_assert_eq!(ab, box_iou(&c, &a));
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert_eq!(ab == 1.0, a == c);
            }

            #[test]
            fn union_contains_both(a in arb_box(), c in arb_box()) {
                let u = union_box(&a, &c);
                for x in [a, c] {
                    prop_assert!(u.x0 <= x.x0 && u.y0 <= x.y0 && u.x1 >= x.x1 && u.y1 >= x.y1);
                }
                prop_assert!(u.area() >= a.area().max(c.area()));
            }
        }
    }
}

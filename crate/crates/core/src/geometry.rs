//! Axis-aligned boxes and the overlap measures built on them.
//!
//! Boxes use real-valued pixel coordinates with half-open extent
//! `[x1, x2) × [y1, y2)`, so `area = (x2 - x1) * (y2 - y1)` with no ±1 terms.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Axis-aligned rectangle. Construction guarantees finite coordinates and
/// positive extent on both axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl Bbox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::invalid(format!(
                "box ({x1}, {y1}, {x2}, {y2}) has non-finite coordinates"
            )));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid(format!(
                "degenerate box ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
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

    /// `[x1, y1, x2, y2]`
    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Area of the intersection, zero when the boxes do not overlap.
    pub fn intersection_area(&self, other: &Bbox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// The same box shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Bbox> {
        Bbox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }
}

/// Intersection-over-union of two boxes, in `[0, 1]`.
pub fn iou(a: &Bbox, b: &Bbox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

fn index_track(track: &[(u32, Bbox)], side: &str) -> Result<BTreeMap<u32, Bbox>> {
    let mut map = BTreeMap::new();
    for &(frame, bbox) in track {
        if map.insert(frame, bbox).is_some() {
            return Err(Error::invalid(format!(
                "{side} track has more than one box at frame {frame}"
            )));
        }
    }
    Ok(map)
}

/// Mean per-frame IoU between two tracks.
///
/// The mean runs over the union of frames covered by either track. A frame
/// covered by only one side contributes 0.
pub fn mean_frame_iou(a: &[(u32, Bbox)], b: &[(u32, Bbox)]) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::invalid("mean_frame_iou of two empty tracks"));
    }
    let a = index_track(a, "first")?;
    let b = index_track(b, "second")?;

    let mut frames: Vec<u32> = a.keys().chain(b.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let total: f64 = frames
        .iter()
        .map(|f| match (a.get(f), b.get(f)) {
            (Some(x), Some(y)) => iou(x, y),
            _ => 0.0,
        })
        .sum();
    Ok(total / frames.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> Bbox {
        Bbox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_fixtures() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert!((iou(&a, &bb(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &bb(10.0, 0.0, 20.0, 10.0)), 0.0);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(Bbox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(Bbox::new(0.0, 5.0, 5.0, 1.0).is_err());
        assert!(Bbox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(Bbox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn mean_frame_iou_fixtures() {
        let track: Vec<(u32, Bbox)> = (0..5)
            .map(|f| (f, bb(f as f64, 0.0, f as f64 + 4.0, 4.0)))
            .collect();
        assert_eq!(mean_frame_iou(&track, &track).unwrap(), 1.0);

        let far: Vec<(u32, Bbox)> = track
            .iter()
            .map(|&(f, b)| (f, b.translated(100.0, 100.0).unwrap()))
            .collect();
        assert_eq!(mean_frame_iou(&track, &far).unwrap(), 0.0);

        let b = vec![
            (1, bb(0.0, 0.0, 1.0, 1.0)),
            (2, bb(0.0, 0.0, 2.0, 2.0)),
            (3, bb(0.0, 0.0, 3.0, 3.0)),
        ];
        let a = b[..2].to_vec();
        let got = mean_frame_iou(&a, &b).unwrap();
        assert!((got - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_frame_iou_errors() {
        assert!(mean_frame_iou(&[], &[]).is_err());
        let dup = vec![(0, bb(0.0, 0.0, 1.0, 1.0)), (0, bb(0.0, 0.0, 2.0, 2.0))];
        assert!(mean_frame_iou(&dup, &dup[..1]).is_err());
        // one side empty: every frame contributes zero
        assert_eq!(mean_frame_iou(&dup[..1], &[]).unwrap(), 0.0);
    }

    fn arb_box() -> impl Strategy<Value = Bbox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a.intersection_area(&b) == 0.0 {
                prop_assert_eq!(ab, 0.0);
            } else {
                prop_assert!(ab > 0.0);
            }
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn iou_translation_invariant(a in arb_box(), b in arb_box(), dx in -20.0..20.0f64, dy in -20.0..20.0f64) {
            let moved = iou(&a.translated(dx, dy).unwrap(), &b.translated(dx, dy).unwrap());
            prop_assert!((moved - iou(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn self_mean_frame_iou_is_one(boxes in prop::collection::vec(arb_box(), 1..8)) {
            let track: Vec<(u32, Bbox)> = boxes.into_iter().enumerate().map(|(i, b)| (i as u32, b)).collect();
            prop_assert_eq!(mean_frame_iou(&track, &track).unwrap(), 1.0);
        }
    }
}

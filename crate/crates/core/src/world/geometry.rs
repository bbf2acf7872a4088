//! Planar primitives used by the scene map and the navigator.

use serde::{Deserialize, Serialize};

/// Tolerance for boundary-inclusive containment and arrival checks, in meters.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    /// Moves from `self` toward `target` by at most `budget` meters.
    pub fn advance(self, target: Point, budget: f64) -> Point {
        let d = self.distance(target);
        if d <= budget || d == 0.0 {
            target
        } else {
            self.lerp(target, budget / d)
        }
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Signed area; positive for counter-clockwise winding.
pub fn signed_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// True when every turn of the polygon has the same orientation.
pub fn is_convex(polygon: &[Point]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let orientation = signed_area(polygon).signum();
    if orientation == 0.0 {
        return false;
    }
    (0..n).all(|i| {
        let c = cross(polygon[i], polygon[(i + 1) % n], polygon[(i + 2) % n]);
        c * orientation >= -EPS
    })
}

/// Boundary-inclusive containment test for a convex polygon.
pub fn convex_contains(polygon: &[Point], p: Point) -> bool {
    let n = polygon.len();
    let orientation = signed_area(polygon).signum();
    (0..n).all(|i| {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        let len = a.distance(b).max(f64::MIN_POSITIVE);
        cross(a, b, p) * orientation / len >= -EPS
    })
}

pub fn centroid(polygon: &[Point]) -> Point {
    let n = polygon.len() as f64;
    let (sx, sy) = polygon
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point::new(sx / n, sy / n)
}

/// Closest point to `p` on the segment `a`-`b`.
pub fn closest_on_segment(a: Point, b: Point, p: Point) -> Point {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return a;
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    a.lerp(b, t)
}

/// Parameter along `a`-`b` where the line through `p`-`q` crosses it, if the
/// lines are not parallel. The result is not clamped.
pub fn line_crossing(a: Point, b: Point, p: Point, q: Point) -> Option<f64> {
    let r = (b.x - a.x, b.y - a.y);
    let s = (q.x - p.x, q.y - p.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some(((p.x - a.x) * s.1 - (p.y - a.y) * s.0) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
        ]
    }

    #[test]
    fn containment_includes_boundary() {
        let sq = square();
        assert!(convex_contains(&sq, Point::new(1.0, 1.0)));
        assert!(convex_contains(&sq, Point::new(0.0, 1.0)));
        assert!(convex_contains(&sq, Point::new(2.0, 2.0)));
        assert!(!convex_contains(&sq, Point::new(2.1, 1.0)));
    }

    #[test]
    fn containment_ignores_winding() {
        let mut sq = square();
        sq.reverse();
        assert!(convex_contains(&sq, Point::new(1.0, 1.0)));
        assert!(!convex_contains(&sq, Point::new(-0.5, 1.0)));
    }

    #[test]
    fn convexity() {
        assert!(is_convex(&square()));
        let dart = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 0.5),
            Point::new(2.0, 2.0),
        ];
        assert!(!is_convex(&dart));
    }

    #[test]
    fn advance_stops_at_target() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(3.0, 4.0);
        assert_eq!(a.advance(b, 10.0), b);
        let mid = a.advance(b, 2.5);
        assert!((mid.distance(a) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn crossing_parameter() {
        let t = line_crossing(
            Point::new(0.0, 1.0),
            Point::new(4.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 2.0),
        )
        .unwrap();
        assert!((t - 0.25).abs() < 1e-12);
    }
}

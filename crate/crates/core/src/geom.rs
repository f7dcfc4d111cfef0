//! Small geometric helpers shared across modules.

use nalgebra::{Point3, Vector3};

/// Closest point on the segment `[a, b]` to `p`, returned as the clamped
/// parameter `t` in `[0, 1]`.
pub fn segment_param(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return 0.0;
    }
    ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

/// Euclidean distance from `p` to the finite segment `[a, b]`.
pub fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let t = segment_param(p, a, b);
    (p - (a + (b - a) * t)).norm()
}

/// Axis-aligned bounding box of a point set, or `None` when empty.
pub fn bounding_box(points: &[Point3<f64>]) -> Option<(Point3<f64>, Point3<f64>)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    Some((lo, hi))
}

/// Cosine of the angle between two vectors; zero when either is degenerate.
pub fn cosine(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    let n = u.norm() * v.norm();
    if n == 0.0 {
        0.0
    } else {
        (u.dot(v) / n).clamp(-1.0, 1.0)
    }
}

/// Total-order wrapper for `f64` priorities in binary heaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

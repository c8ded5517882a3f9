//! Small planar geometry helpers.

use nalgebra::Vector2;

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (Andrew's monotone chain). Collinear
/// points are dropped.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() * 2);
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// True iff `p` lies strictly inside the convex hull of `points`.
pub fn strictly_inside_hull(points: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| cross(&hull[i], &hull[(i + 1) % hull.len()], p) > 0.0)
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_hull_contains_center_only() {
        let sq = [
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(0.5, 0.5),
        ];
        assert_eq!(convex_hull(&sq).len(), 4);
        assert!(strictly_inside_hull(&sq, &Vector2::new(0.5, 0.5)));
        assert!(!strictly_inside_hull(&sq, &Vector2::new(1.0, 0.5)));
        assert!(!strictly_inside_hull(&sq, &Vector2::new(2.0, 0.5)));
    }

    #[test]
    fn two_points_never_cage() {
        let pts = [Vector2::new(-1.0, 0.0), Vector2::new(1.0, 0.0)];
        assert!(!strictly_inside_hull(&pts, &Vector2::zeros()));
    }

    #[test]
    fn segment_distance() {
        let a = Vector2::new(0.0, 0.0);
        let b = Vector2::new(2.0, 0.0);
        assert_eq!(point_segment_distance(&Vector2::new(1.0, 1.0), &a, &b), 1.0);
        assert_eq!(point_segment_distance(&Vector2::new(3.0, 0.0), &a, &b), 1.0);
    }
}

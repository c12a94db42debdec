//! Brute-force oracles shared by the integration tests.

use isodiam::geometry::Point;

/// Smallest enclosing circle by exhaustive search over every circle spanned
/// by two points (as a diameter) or three points (circumcircle). `O(n⁴)`, so
/// only for small inputs.
pub fn brute_force_circle(points: &[Point]) -> (Point, f64) {
    if points.len() == 1 {
        return (points[0], 0.0);
    }
    let encloses = |c: &Point, r: f64| points.iter().all(|p| (p - c).norm() <= r * (1.0 + 1e-12) + 1e-12);
    let mut best: Option<(Point, f64)> = None;
    let mut consider = |c: Point, r: f64| {
        if best.is_none_or(|(_, b)| r < b) && encloses(&c, r) {
            best = Some((c, r));
        }
    };
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            let c = (points[i] + points[j]) / 2.0;
            consider(c, (points[i] - c).norm());
            for k in j + 1..n {
                if let Some(c) = circumcenter(points[i], points[j], points[k]) {
                    consider(c, (points[i] - c).norm());
                }
            }
        }
    }
    best.expect("some pair circle encloses everything")
}

fn circumcenter(a: Point, b: Point, c: Point) -> Option<Point> {
    let (ab, ac) = (b - a, c - a);
    let d = 2.0 * (ab.x * ac.y - ab.y * ac.x);
    if d.abs() < 1e-14 {
        return None;
    }
    let (b2, c2) = (ab.norm_squared(), ac.norm_squared());
    Some(a + Point::new(ac.y * b2 - ab.y * c2, ab.x * c2 - ac.x * b2) / d)
}

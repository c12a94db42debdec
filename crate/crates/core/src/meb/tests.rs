use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::geometry::Vec2;

#[test]
fn two_points() {
    let b = welzl_points(&[Point::new(0.0, 0.0), Point::new(2.0, 0.0)], 1);
    assert!((b.center - Point::new(1.0, 0.0)).norm() < 1e-15);
    assert!((b.radius - 1.0).abs() < 1e-15);
    assert_eq!(b.attainment, vec![0, 1]);
}

#[test]
fn unit_square_corners() {
    let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
    let b = welzl_points(&pts, 7);
    assert!((b.center - Point::new(0.5, 0.5)).norm() < 1e-15);
    assert!((b.radius - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn circle_plus_interior_points() {
    let mut pts: Vec<Point> = (0..7).map(|k| Point::new(1.0 + 2.0 * (k as f64).cos(), 2.0 * (k as f64).sin())).collect();
    pts.extend([Point::new(1.2, 0.3), Point::new(0.5, -0.5)]);
    let b = welzl_points(&pts, 3);
    assert!((b.center - Point::new(1.0, 0.0)).norm() < 1e-12);
    assert!((b.radius - 2.0).abs() < 1e-12);
}

#[test]
fn catenoid_boundary_circles_ambient_radius() {
    let t = 0.9f64;
    let mut pts = Vec::new();
    for k in 0..64 {
        let th = 2.0 * PI * k as f64 / 64.0;
        for z in [-t, t] {
            pts.push(nalgebra::Vector3::new(t.cosh() * th.cos(), t.cosh() * th.sin(), z));
        }
    }
    let b = ambient_ball(&pts, 11);
    assert!((b.radius - (t.cosh().powi(2) + t * t).sqrt()).abs() < 1e-12);
    assert!(b.center.norm() < 1e-12);
}

#[test]
fn translated_region_translates_center() {
    let a = Region::regular_polygon(64, 1.0, Point::zeros()).unwrap();
    let b = Region::regular_polygon(64, 1.0, Point::new(3.0, -2.0)).unwrap();
    let (ba, bb) = (rad(&a).unwrap(), rad(&b).unwrap());
    assert!(ba.center.norm() < 1e-9 && (ba.radius - 1.0).abs() < 1e-12);
    assert!((bb.center - Point::new(3.0, -2.0)).norm() < 1e-9);
    assert!((ba.radius - bb.radius).abs() < 1e-12);
    assert_eq!(ba.attainment.len(), 64);
}

#[test]
fn one_center_single_point() {
    let m = ManifoldBackend::sphere(1.0).unwrap();
    let b = geodesic_one_center(&[Point::new(0.3, 0.1)], &m).unwrap();
    assert_eq!(b.radius, 0.0);
    assert_eq!(b.center, Point::new(0.3, 0.1));
}

#[test]
fn one_center_sphere_symmetric_pair() {
    let m = ManifoldBackend::sphere(1.0).unwrap();
    let s = 0.6;
    let b = geodesic_one_center(&[Point::new(s, 0.0), Point::new(-s, 0.0)], &m).unwrap();
    assert!((b.radius - s).abs() < 1e-9);
    assert!(b.center.norm() < 1e-6);
}

#[test]
fn one_center_recovers_hyperbolic_ball() {
    let m = Arc::new(ManifoldBackend::hyperbolic(-1.0).unwrap());
    let c0 = Point::new(0.25, -0.3);
    let r = 0.8;
    let region = Region::geodesic_ball(m.clone(), c0, r, 48).unwrap();
    let b = rad(&region).unwrap();
    assert!(m.distance(&b.center, &c0).unwrap() < 1e-4);
    assert!((b.radius - r).abs() < 1e-4);
}

#[test]
fn one_center_is_deterministic() {
    let m = ManifoldBackend::hyperbolic(-1.0).unwrap();
    let pts: Vec<Point> = (0..20).map(|k| Point::new(0.5 * (k as f64 * 1.3).sin(), 0.4 * (k as f64 * 0.7).cos())).collect();
    let a = geodesic_one_center(&pts, &m).unwrap();
    let b = geodesic_one_center(&pts, &m).unwrap();
    assert_eq!(a, b);
    assert_eq!(welzl_points(&pts, 5), welzl_points(&pts, 5));
}

#[test]
fn support_weights_examples() {
    let m = ManifoldBackend::euclidean();
    let disk = Region::regular_polygon(32, 1.0, Point::zeros()).unwrap();
    let b = rad(&disk).unwrap();
    let w = support_weights(&m, &b.center, disk.vertices(), &b.attainment).unwrap();
    assert!(w.iter().all(|x| (x - 1.0 / 32.0).abs() < 1e-12));
    let ell = Region::ellipse(Arc::new(m.clone()), 32, Point::zeros(), 2.0, 1.0).unwrap();
    let b = rad(&ell).unwrap();
    assert_eq!(b.attainment, vec![0, 16]);
    let w = support_weights(&m, &b.center, ell.vertices(), &b.attainment).unwrap();
    assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    assert!(matches!(support_weights(&m, &b.center, ell.vertices(), &[]), Err(Error::EmptyAttainment)));
}

#[test]
fn min_norm_point_cases() {
    let (p, w) = min_norm_point(&[Vec2::new(1.0, 1.0), Vec2::new(1.0, -1.0)]);
    assert!((p - Vec2::new(1.0, 0.0)).norm() < 1e-15);
    assert!((w[0] - 0.5).abs() < 1e-15);
    let tri = [Vec2::new(1.0, 0.0), Vec2::new(-1.0, 1.0), Vec2::new(-1.0, -1.0), Vec2::new(0.1, 0.1)];
    let (p, w) = min_norm_point(&tri);
    assert_eq!(p, Vec2::zeros());
    let comb: Vec2 = tri.iter().zip(&w).map(|(v, x)| v * *x).sum();
    assert!(comb.norm() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn adding_a_point_never_shrinks(pts in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..20), extra in (-8.0..8.0f64, -8.0..8.0f64)) {
        let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        let mut more = pts.clone();
        more.push(Point::new(extra.0, extra.1));
        let a = welzl_points(&pts, 0).radius;
        let b = welzl_points(&more, 0).radius;
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn one_center_bounds(pts in prop::collection::vec((0.0..0.6f64, 0.0..6.3f64), 3..12)) {
        let m = ManifoldBackend::hyperbolic(-1.0).unwrap();
        let pts: Vec<Point> = pts.into_iter().map(|(r, t)| Point::new(r * t.cos(), r * t.sin())).collect();
        let b = geodesic_one_center(&pts, &m).unwrap();
        let mut diam: f64 = 0.0;
        for p in &pts {
            let far = pts.iter().map(|q| m.distance(p, q).unwrap()).fold(0.0, f64::max);
            prop_assert!(b.radius <= far * (1.0 + 1e-9) + 1e-12);
            diam = diam.max(far);
        }
        prop_assert!(b.radius >= 0.5 * diam * (1.0 - 1e-9));
        for p in &pts {
            prop_assert!(m.distance(&b.center, p).unwrap() <= b.radius + 1e-9);
        }
    }
}

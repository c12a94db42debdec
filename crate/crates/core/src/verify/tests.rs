use super::*;
use crate::geometry::WarpProfile;
use proptest::prelude::*;

fn arc(m: ManifoldBackend) -> Arc<ManifoldBackend> {
    Arc::new(m)
}

fn warped(a: f64) -> ManifoldBackend {
    ManifoldBackend::warped(WarpProfile::tanh(a).unwrap())
}

/// Composite Simpson on `[0, π/2]` of `√(a² sin² t + b² cos² t)`, times 4.
fn ellipse_perimeter_by_quadrature(a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    let f = |t: f64| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
    let mut s = f(0.0) + f(std::f64::consts::FRAC_PI_2);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    4.0 * s * h / 3.0
}

#[test]
fn ellipse_perimeter_matches_quadrature() {
    for (a, b) in [(1.0, 1.0), (3f64.sqrt(), 1.0 / 3f64.sqrt()), (2.0, 0.1), (0.5, 4.0)] {
        let q = ellipse_perimeter_by_quadrature(a, b);
        assert!((ellipse_perimeter(a, b) / q - 1.0).abs() < 1e-12, "{a} {b}");
    }
    assert!((ellipse_perimeter(1.0, 1.0) - std::f64::consts::TAU).abs() < 1e-14);
}

#[test]
fn bound_margins() {
    assert_eq!(Bound::AtLeastOne.margin(1.2), 1.2 - 1.0);
    assert_eq!(Bound::AtMostOne.margin(0.9), 1.0 - 0.9);
    assert_eq!(Bound::EqualsOne.margin(0.99), -(0.99f64 - 1.0).abs());
}

#[test]
fn euclidean_disk_is_the_equality_case() {
    let n = 4096;
    let disk = ShapeSpec::Ball { center: [0.3, -0.2], radius: 1.0 };
    let m = arc(ManifoldBackend::euclidean());
    let r = check_euclidean(&disk.build(m.clone(), n).unwrap(), 1e-3).unwrap();
    // Inscribed regular N-gon: P = 2N sin(π/N), V = N sin(2π/N)/2, rad = 1.
    let exact = 1.0 / (std::f64::consts::PI / n as f64).cos();
    assert!((r.measured.ratio - exact).abs() < 1e-12);
    assert!(r.pass && r.equality);
    assert!((0.999..=1.001).contains(&r.measured.ratio));
}

#[test]
fn euclidean_ellipse_and_square() {
    let m = arc(ManifoldBackend::euclidean());
    let (a, b) = (3f64.sqrt(), 1.0 / 3f64.sqrt());
    let e = ShapeSpec::Ellipse { center: [0.0, 0.0], a, b };
    let r = check_euclidean(&e.build(m.clone(), 2048).unwrap(), 1e-6).unwrap();
    let oracle = a * ellipse_perimeter_by_quadrature(a, b) / (2.0 * std::f64::consts::PI * a * b);
    assert!((oracle - 2.127_089).abs() < 1e-6);
    assert!((r.measured.ratio / oracle - 1.0).abs() < 1e-5);
    assert!(r.pass && !r.equality && r.measured.ratio > 1.25);

    let sq = ShapeSpec::Square { center: [1.0, 1.0], side: 1.0 };
    let r = check_euclidean(&sq.build(m.clone(), 64).unwrap(), 1e-9).unwrap();
    assert!((r.measured.ratio - std::f64::consts::SQRT_2).abs() < 1e-12);
    let (_, v) = sq.closed_form_ratio(&m).unwrap();
    assert_eq!(v, std::f64::consts::SQRT_2);
}

#[test]
fn euclidean_check_rejects_curved_backends() {
    let h = arc(ManifoldBackend::hyperbolic(-1.0).unwrap());
    let region = Region::geodesic_ball(h, Point::zeros(), 0.5, 64).unwrap();
    assert!(matches!(check_euclidean(&region, 1e-6), Err(Error::WrongBackend(_))));
}

#[test]
fn hyperbolic_balls() {
    let h = arc(ManifoldBackend::hyperbolic(-1.0).unwrap());
    let spec = ShapeSpec::Ball { center: [0.0, 0.0], radius: 1.0 };
    let coarse = spec.build(h.clone(), 256).unwrap();
    let fine = spec.build(h.clone(), 512).unwrap();
    let r = check_ch(&coarse, Some(&fine), 1e-6).unwrap();
    let oracle = 1f64.sinh() / (2.0 * (1f64.cosh() - 1.0));
    assert!((r.measured.ratio / oracle - 1.0).abs() < 5e-3, "{}", r.measured.ratio);
    assert_eq!(r.strict, Some(true));
    assert!(r.require_strict && r.pass);

    // Off-center ball: same value (homogeneity).
    let off = ShapeSpec::Ball { center: [0.4, 0.1], radius: 1.0 }.build(h.clone(), 256).unwrap();
    let r_off = check_ch(&off, None, 1e-6).unwrap();
    assert!((r_off.measured.ratio / oracle - 1.0).abs() < 5e-3);

    // Small radius: 1 + r²/12 + O(r⁴).
    let small = ShapeSpec::Ball { center: [0.0, 0.0], radius: 0.1 };
    let r = check_ch(&small.build(h.clone(), 512).unwrap(), None, 1e-6).unwrap();
    assert!((r.measured.ratio - (1.0 + 0.01 / 12.0)).abs() < 2e-5, "{}", r.measured.ratio);
}

#[test]
fn warped_apex_ball_exceeds_one_when_curvature_is_negative() {
    let m = warped(1.5);
    let r = measure_ball(&m, &Point::zeros(), 2.0).unwrap();
    let phi = |s: f64| 1.5 * s - 0.5 * s.tanh();
    // ∫₀² φ = 1.5·2 − 0.5·ln cosh 2.
    let int = 3.0 - 0.5 * 2f64.cosh().ln();
    let oracle = 2.0 * phi(2.0) / (2.0 * int);
    assert!((r.ratio - oracle).abs() < 1e-10);
    let region = Region::geodesic_ball(arc(m.clone()), Point::zeros(), 2.0, 256).unwrap();
    let rep = check_ch(&region, None, 1e-6).unwrap();
    assert!(rep.pass && rep.measured.ratio > 1.0);
    let (_, cf) = ball_ratio_closed_form(&m, &Point::zeros(), 2.0).unwrap();
    assert!((cf - oracle).abs() < 1e-10);
}

#[test]
fn cartan_hadamard_check_rejects_positive_curvature_and_the_catenoid() {
    let s = arc(ManifoldBackend::sphere(1.0).unwrap());
    let region = Region::geodesic_ball(s, Point::zeros(), 0.5, 64).unwrap();
    assert!(matches!(check_ch(&region, None, 1e-6), Err(Error::WrongBackend(_))));
    let c = arc(ManifoldBackend::embedded(EmbeddedKind::Catenoid));
    let region = Region::geodesic_ball(c, Point::new(0.0, 0.0), 0.3, 32).unwrap();
    assert!(matches!(check_ch(&region, None, 1e-6), Err(Error::WrongBackend(_))));
}

#[test]
fn ricci_balls() {
    let s = ManifoldBackend::sphere(1.0).unwrap();
    let r = check_ricci_ball(&s, &Point::zeros(), 1.0, 1e-9).unwrap();
    let oracle = 1f64.sin() / (2.0 * (1.0 - 1f64.cos()));
    assert!((r.measured.ratio - oracle).abs() < 1e-12);
    assert!(r.pass && r.bound == Bound::AtMostOne);

    let w = warped(0.5);
    for radius in [0.5, 1.0, 2.0, 4.0] {
        let r = check_ricci_ball(&w, &Point::zeros(), radius, 0.0).unwrap();
        assert!(r.pass && r.measured.ratio < 1.0, "r = {radius}");
        let (_, cf) = ball_ratio_closed_form(&w, &Point::zeros(), radius).unwrap();
        assert!((cf - r.measured.ratio).abs() < 1e-9);
    }

    let flat = warped(1.0);
    let r = check_ricci_ball(&flat, &Point::zeros(), 2.0, 1e-9).unwrap();
    assert_eq!(r.bound, Bound::EqualsOne);
    assert!(r.pass && r.equality && (r.measured.ratio - 1.0).abs() < 1e-9);

    let h = ManifoldBackend::hyperbolic(-1.0).unwrap();
    assert!(matches!(check_ricci_ball(&h, &Point::zeros(), 1.0, 1e-9), Err(Error::WrongBackend(_))));
}

#[test]
fn refinement_marks_strictness() {
    let m = ManifoldBackend::euclidean();
    let measured = Measured { volume: 1.0, perimeter: 1.0, rad: 1.0, ratio: 1.01 };
    let r = VerificationReport::new("t", &m, measured, Bound::AtLeastOne, 1e-6).with_refinement(1.0101, true);
    assert_eq!(r.strict, Some(true));
    assert!(r.pass);
    let r = VerificationReport::new("t", &m, measured, Bound::AtLeastOne, 1e-6).with_refinement(1.015, true);
    assert_eq!(r.strict, Some(false));
    assert!(!r.pass);
    let r = VerificationReport::new("t", &m, measured, Bound::AtLeastOne, 1e-6).with_refinement(1.015, false);
    assert!(r.pass);
}

#[test]
fn comparator_disagreement_fails_the_report() {
    let m = ManifoldBackend::euclidean();
    let measured = Measured { volume: 1.0, perimeter: 1.0, rad: 1.0, ratio: 1.1 };
    let r = VerificationReport::new("t", &m, measured, Bound::AtLeastOne, 1e-6).with_comparator(Comparator::new("x", 1.2, 1.1, 1e-3));
    assert!(!r.pass);
}

#[test]
fn report_json_has_the_schema_keys() {
    let m = ManifoldBackend::euclidean();
    let measured = Measured { volume: 2.0, perimeter: 3.0, rad: 1.5, ratio: 1.125 };
    let r = VerificationReport::new("x", &m, measured, Bound::AtLeastOne, 1e-6).with_refinement(1.125, false);
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    for key in ["id", "backend", "V", "P", "rad", "ratio", "bound", "margin", "tol", "pass", "refinement_delta"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["bound"], "at_least_one");
    let back: VerificationReport = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
}

#[test]
fn ratio_is_stable_under_vertex_doubling() {
    let m = arc(ManifoldBackend::euclidean());
    let h = arc(ManifoldBackend::hyperbolic(-1.0).unwrap());
    let shapes = [
        (m.clone(), ShapeSpec::Ellipse { center: [0.0, 0.0], a: 2.0, b: 1.0 }),
        (m.clone(), ShapeSpec::Star { center: [0.0, 0.0], radius: 1.0, amplitude: 0.3, modes: 4, seed: 7 }),
        (h.clone(), ShapeSpec::Ball { center: [0.2, 0.0], radius: 0.8 }),
        (h, ShapeSpec::Star { center: [0.0, 0.0], radius: 0.8, amplitude: 0.3, modes: 3, seed: 11 }),
    ];
    for (b, s) in shapes {
        let a = measure_region(&s.build(b.clone(), 256).unwrap()).unwrap().ratio;
        let c = measure_region(&s.build(b.clone(), 512).unwrap()).unwrap().ratio;
        assert!((a - c).abs() < 1e-3, "{s:?}: {a} vs {c}");
    }
}

#[test]
fn polygon_spec_refines_by_midpoints() {
    let m = arc(ManifoldBackend::euclidean());
    let verts: Vec<[f64; 2]> = (0..8)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 8.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let spec = ShapeSpec::Polygon { vertices: verts };
    let a = spec.build(m.clone(), 8).unwrap();
    let b = spec.build(m.clone(), 32).unwrap();
    assert_eq!(a.len(), 8);
    assert_eq!(b.len(), 32);
    let (ra, rb) = (measure_region(&a).unwrap().ratio, measure_region(&b).unwrap().ratio);
    assert!((ra - rb).abs() < 1e-12);
}

#[test]
fn star_shapes_are_deterministic() {
    let m = arc(ManifoldBackend::euclidean());
    let s = ShapeSpec::Star { center: [0.0, 0.0], radius: 1.0, amplitude: 0.5, modes: 5, seed: 3 };
    let a = s.build(m.clone(), 64).unwrap();
    let b = s.build(m.clone(), 64).unwrap();
    assert_eq!(a.vertices(), b.vertices());
    let r: Vec<f64> = a.vertices().iter().map(|p| p.norm()).collect();
    assert!(r.iter().all(|&x| (0.5 - 1e-12..=1.5 + 1e-12).contains(&x)));
}

#[test]
fn random_polygons_satisfy_the_planar_inequality() {
    let m = arc(ManifoldBackend::euclidean());
    let batch = random_regions(m, 100, 24, Point::new(0.5, 0.5), 2.0, 1e-6, 42).unwrap();
    assert_eq!(batch.count, 100);
    assert!(batch.pass, "{:?}", batch.reports.iter().find(|r| !r.pass));
    assert!(batch.min_ratio >= 1.0);
}

#[test]
fn random_stars_on_curved_backends() {
    let h = arc(ManifoldBackend::hyperbolic(-1.0).unwrap());
    let batch = random_regions(h, 8, 96, Point::zeros(), 1.0, 1e-6, 5).unwrap();
    assert!(batch.pass && batch.min_ratio >= 1.0 - 1e-6);
    let s = arc(ManifoldBackend::sphere(1.0).unwrap());
    let batch = random_regions(s, 8, 96, Point::zeros(), 1.0, 1e-9, 5).unwrap();
    assert!(batch.pass && batch.max_ratio <= 1.0);
    assert!(batch.reports.iter().all(|r| r.notes.len() == 1));
}

#[test]
fn homogeneous_scans_are_constant() {
    let e = ManifoldBackend::euclidean();
    let s = infimum_scan(&e, std::f64::consts::PI, &[0.0, 2.0, 4.0], 1e-9, 0.02).unwrap();
    assert_eq!(s.expectation, ScanExpectation::Constant);
    assert!(s.pass, "{s:?}");
    for r in &s.rows {
        assert!((r.f - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    }
    let h = ManifoldBackend::hyperbolic(-1.0).unwrap();
    let s = infimum_scan(&h, std::f64::consts::PI, &[0.0, 0.5, 1.0], 1e-9, 0.02).unwrap();
    assert!(s.pass, "{s:?}");
    assert!(s.rows.iter().all(|r| r.excess > 0.0));
}

#[test]
fn scan_rejects_bad_distances_and_emits_plot_csv() {
    let e = ManifoldBackend::euclidean();
    assert!(infimum_scan(&e, 1.0, &[], 1e-9, 0.02).is_err());
    assert!(infimum_scan(&e, 1.0, &[1.0, 0.5], 1e-9, 0.02).is_err());
    let s = infimum_scan(&e, 1.0, &[0.0, 1.0], 1e-9, 0.02).unwrap();
    let csv = s.plot_csv().unwrap();
    assert!(csv.starts_with("d,f\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn warped_scan_expectations() {
    assert_eq!(scan_expectation(&warped(1.5)), ScanExpectation::DecreasingToTwoV);
    assert_eq!(scan_expectation(&warped(0.5)), ScanExpectation::ApexMinimum);
    assert_eq!(scan_expectation(&warped(1.0)), ScanExpectation::Constant);
    assert_eq!(scan_expectation(&ManifoldBackend::embedded(EmbeddedKind::Helicoid)), ScanExpectation::AboveTwoV);
    let s = infimum_scan(&warped(1.5), std::f64::consts::PI, &[0.0, 2.0, 4.0], 1e-9, 0.02).unwrap();
    assert!(s.pass, "{s:?}");
    // Centers sit at the requested distance from the apex.
    assert!((s.rows[2].center[0].hypot(s.rows[2].center[1]) - 4.0).abs() < 1e-6);
}

#[test]
fn constrained_run_small_volume_gives_a_free_disk() {
    let m = arc(ManifoldBackend::euclidean());
    let init = Region::ellipse(m, 256, Point::new(0.1, 0.0), 0.9, 0.55).unwrap();
    let v = 0.5 * std::f64::consts::PI;
    let run = constrained_run(v, init, Point::zeros(), 1.0, &ShapeParams::default(), ConstrainedTolerances::default()).unwrap();
    let disk = 2.0 * (std::f64::consts::PI * v).sqrt();
    assert!((run.perimeter / disk - 1.0).abs() < 2e-3, "{run:?}");
    assert_eq!(run.contact_vertices, 0);
    assert_eq!(run.contact_arc, 0.0);
    // Curvature of the optimal disk: 1/radius.
    let radius = (v / std::f64::consts::PI).sqrt();
    assert!((run.curvature.free_mean - 1.0 / radius).abs() < 2e-2, "{}", run.curvature.free_mean);
    assert!(run.obstacle.is_none());
    assert!(run.pass, "{run:?}");
}

#[test]
fn constrained_run_rejects_overfull_volume() {
    let init = Region::regular_polygon(64, 0.5, Point::zeros()).unwrap();
    let r = constrained_run(4.0, init, Point::zeros(), 1.0, &ShapeParams::default(), ConstrainedTolerances::default());
    assert!(matches!(r, Err(Error::InvalidInput(_))));
}

#[test]
fn lower_envelope_of_a_square() {
    let v = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
    assert_eq!(lower_envelope(&v, 0.5), Some(0.0));
    assert_eq!(lower_envelope(&v, 2.0), None);
}

#[test]
fn disk_minimizer_hands_off_to_the_obstacle_solver() {
    let m = arc(ManifoldBackend::euclidean());
    let init = Region::ellipse(m, 256, Point::zeros(), 3f64.sqrt(), 1.0 / 3f64.sqrt()).unwrap();
    let d = shapeopt::minimize(std::f64::consts::PI, init, &ShapeParams::default()).unwrap();
    let h = obstacle_handoff(&d.state, &HandOffParams::default()).unwrap();
    assert!(h.pass, "{h:?}");
    assert!(h.contact_fraction > 0.5);
    assert!((h.h0 - 1.0 / d.state.ball.radius).abs() < 0.05);
}

proptest! {
    #[test]
    fn pass_iff_margin_within_tolerance(ratio in 0.5f64..1.5, tol in 0.0f64..0.1, which in 0usize..3) {
        let bound = [Bound::AtLeastOne, Bound::AtMostOne, Bound::EqualsOne][which];
        let m = ManifoldBackend::euclidean();
        let measured = Measured { volume: 1.0, perimeter: 1.0, rad: 1.0, ratio };
        let r = VerificationReport::new("p", &m, measured, bound, tol);
        prop_assert_eq!(r.pass, r.margin >= -tol);
        let respected = match bound {
            Bound::AtLeastOne => ratio >= 1.0 - tol,
            Bound::AtMostOne => ratio <= 1.0 + tol,
            Bound::EqualsOne => (ratio - 1.0).abs() <= tol,
        };
        prop_assert_eq!(r.pass, respected);
    }
}

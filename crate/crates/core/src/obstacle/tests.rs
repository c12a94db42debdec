use super::*;
use proptest::prelude::*;

fn approx(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn quiet() -> SolverParams {
    SolverParams::default()
}

/// Metric with nonzero mixed entries `g_in`, positive definite near 0.
fn tilted_metric() -> ChartMetric {
    ChartMetric::Custom(Arc::new(|y: &[f64]| {
        let n = y.len();
        let v = DVector::from_column_slice(y);
        let mut g = DMatrix::identity(n, n) + &v * v.transpose() * 0.1;
        g[(0, n - 1)] += 0.05 * y[0];
        g[(n - 1, 0)] += 0.05 * y[0];
        g
    }))
}

#[test]
fn induced_metric_examples() {
    let chart = GraphChart::flat(1, 8, 1.0).unwrap();
    let zero = vec![0.0; chart.len()];
    for h in assemble_metric_on_graph(&chart, &zero).unwrap().iter().skip(1).take(7) {
        assert_eq!(h[(0, 0)], 1.0);
    }
    let alpha = 0.3;
    let line = chart.sample(|x| alpha * x[0]);
    let hs = assemble_metric_on_graph(&chart, &line).unwrap();
    for k in chart.interior() {
        assert!(approx(hs[k][(0, 0)], 1.0 + alpha * alpha, 1e-14));
    }

    let chart = GraphChart::flat(2, 8, 0.5).unwrap();
    let bowl = chart.sample(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
    let hs = assemble_metric_on_graph(&chart, &bowl).unwrap();
    for k in chart.interior() {
        let x = chart.coords(k);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 } + x[i] * x[j];
                assert!(approx(hs[k][(i, j)], expect, 1e-13));
            }
        }
    }
}

#[test]
fn flat_chart_at_zero_slope_is_the_laplacian() {
    for m in 1..=2 {
        let x = vec![0.1; m];
        let p = vec![0.0; m];
        let pc = point_coefficients(&ChartMetric::Flat, &x, 0.0, &p, 0.0).unwrap();
        assert_eq!(pc.a, DMatrix::identity(m, m));
        assert_eq!(pc.c, DMatrix::identity(m, m));
        assert!(pc.b.iter().all(|&b| b == 0.0));
        assert_eq!(pc.f, 0.0);
        assert_eq!(pc.d, 0.0);
    }
}

#[test]
fn normal_chart_at_origin_is_the_laplacian() {
    let metric = ChartMetric::Conformal { alpha: 0.7 };
    let pc = point_coefficients(&metric, &[0.0, 0.0], 0.0, &[0.0, 0.0], 0.0).unwrap();
    assert!((pc.c.clone() - DMatrix::identity(2, 2)).abs().max() < 1e-15);
    assert!(approx(pc.d, -pc.f, 1e-15));
}

// Hand expansion for the flat chart: h̃ = I + ppᵀ, so A∇u = p/(1 + |p|²),
// b = 0, and the only surviving part of f is −H₀ g(e_n, ν) = H₀/√(1 + |p|²)
// (downward normal). Differentiating p/(1 + |p|²) in p gives
//   c = I/(1 + |p|²) − 2 ppᵀ/(1 + |p|²)²,   d = −H₀/√(1 + |p|²).
// In 1D this is c = (1 − p²)/(1 + p²)².
#[test]
fn flat_coefficients_match_hand_expansion() {
    let h0 = 0.8;
    let p1 = 0.17;
    let pc = point_coefficients(&ChartMetric::Flat, &[0.2], 0.01, &[p1], h0).unwrap();
    let q = 1.0 + p1 * p1;
    assert!(approx(pc.c[(0, 0)], (1.0 - p1 * p1) / (q * q), 1e-15));
    assert!(approx(pc.d, -h0 / q.sqrt(), 1e-15));

    let p = [0.11, -0.07];
    let pc = point_coefficients(&ChartMetric::Flat, &[0.0, 0.1], 0.0, &p, h0).unwrap();
    let q = 1.0 + p[0] * p[0] + p[1] * p[1];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            let expect = delta / q - 2.0 * p[i] * p[j] / (q * q);
            assert!(approx(pc.c[(i, j)], expect, 1e-15), "c[{i}{j}]");
        }
    }
    assert!(approx(pc.d, -h0 / q.sqrt(), 1e-15));
}

#[test]
fn fd_partials_match_analytic_conformal_partials() {
    let metric = ChartMetric::Conformal { alpha: 0.4 };
    let y = [0.2, -0.3, 0.15];
    let exact = metric.partials(&y);
    let fd = fd_partials(|q| metric.metric(q), &y, 1e-3);
    for (a, b) in exact.iter().zip(&fd) {
        assert!((a - b).abs().max() < 1e-10);
    }
}

#[test]
fn christoffels_of_conformal_metric() {
    // g = e^{2σ} I with σ = α|y|²: Γ^k_ij = δ_ik ∂_jσ + δ_jk ∂_iσ − δ_ij ∂_kσ.
    let alpha = 0.4;
    let metric = ChartMetric::Conformal { alpha };
    let y = [0.2, -0.3, 0.15];
    let gamma = metric.christoffel(&y).unwrap();
    let ds = |k: usize| 2.0 * alpha * y[k];
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    for (k, gk) in gamma.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                let expect = d(i, k) * ds(j) + d(j, k) * ds(i) - d(i, j) * ds(k);
                assert!(approx(gk[(i, j)], expect, 1e-14));
            }
        }
    }
}

/// `div(A∇u + b) − f` by differencing the flux field of a smooth graph,
/// compared with `c : D²u + d` from the closed-form expansion.
fn check_expansion(metric: &ChartMetric, x0: [f64; 2], h0: f64) {
    let u = |x: &[f64]| 0.08 * x[0].sin() + 0.05 * x[0] * x[1] - 0.04 * x[1] * x[1] + 0.01;
    let grad = |x: &[f64]| [0.08 * x[0].cos() + 0.05 * x[1], 0.05 * x[0] - 0.08 * x[1]];
    let hess = [[-0.08 * x0[0].sin(), 0.05], [0.05, -0.08]];
    let flux = |x: &[f64]| {
        let p = grad(x);
        let pc = point_coefficients(metric, x, u(x), &p, h0).unwrap();
        let pv = DVector::from_column_slice(&p);
        &pc.a * pv + pc.b
    };
    let s = 1e-3;
    let mut div = 0.0;
    for i in 0..2 {
        let at = |t: f64| {
            let mut x = x0.to_vec();
            x[i] += t;
            flux(&x)[i]
        };
        div += (at(-2.0 * s) - at(2.0 * s) + 8.0 * (at(s) - at(-s))) / (12.0 * s);
    }
    let pc = point_coefficients(metric, &x0, u(&x0), &grad(&x0), h0).unwrap();
    let direct = div - pc.f;
    let mut expanded = pc.d;
    for i in 0..2 {
        for j in 0..2 {
            expanded += pc.c[(i, j)] * hess[i][j];
        }
    }
    assert!((direct - expanded).abs() < 1e-9, "direct {direct} expanded {expanded}");
}

#[test]
fn expanded_operator_matches_divergence_form() {
    check_expansion(&ChartMetric::Flat, [0.1, -0.2], 0.7);
    check_expansion(&ChartMetric::Conformal { alpha: 0.5 }, [0.15, 0.1], 0.7);
    check_expansion(&tilted_metric(), [0.2, -0.1], 1.3);
}

#[test]
fn singular_metric_is_reported() {
    let metric = ChartMetric::Custom(Arc::new(|y: &[f64]| DMatrix::identity(y.len(), y.len()) * 1e-6));
    let err = point_coefficients(&metric, &[0.0], 0.0, &[0.0], 0.0).unwrap_err();
    assert!(matches!(err, Error::SingularMetric(_)));
}

#[test]
fn boundary_data_below_obstacle_is_rejected() {
    let chart = GraphChart::flat(1, 8, 1.0).unwrap();
    let err = ObstacleProblem::from_fns(chart, OperatorModel::Linearized, |_| 1.0, |_| 0.0, 0.0, quiet());
    assert!(matches!(err, Err(Error::InvalidInput(_))));
}

const A: f64 = 1.0 / 3.0;

#[test]
fn one_d_closed_form_converges_at_second_order() {
    let errs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let sol = solve_vi(&one_d_problem(n, A, quiet()).unwrap()).unwrap();
            assert!(sol.diagnostics.complementarity_residual < 1e-10);
            one_d_error(&sol, A)
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "errors {errs:?}");
    }
}

#[test]
fn one_d_solution_invariants() {
    let p = one_d_problem(64, A, quiet()).unwrap();
    let sol = solve_vi(&p).unwrap();
    let free = solve_vi(&p.unconstrained()).unwrap();
    for k in 0..sol.u.len() {
        assert!(sol.u[k] >= p.psi[k] - 1e-12);
        // Comparison: the constrained solution dominates the free one.
        assert!(sol.u[k] >= free.u[k] - 1e-12);
    }
    let fb: Vec<f64> = sol.free_boundary_nodes().iter().map(|&k| sol.chart().coords(k)[0]).collect();
    assert_eq!(fb.len(), 2);
    for x in fb {
        assert!((x.abs() - A).abs() < sol.chart().spacing(), "{x}");
    }
}

#[test]
fn unconstrained_solve_matches_the_linear_solution() {
    // u'' = 1 with u(±1) = g: the quadratic x²/2 + g − 1/2, exact on the grid.
    let p = one_d_problem(40, A, quiet()).unwrap();
    let deep = ObstacleProblem { psi: vec![-10.0; p.psi.len()], ..p.clone() };
    let a = solve_vi(&deep).unwrap();
    let b = solve_vi(&p.unconstrained()).unwrap();
    let g = 0.5 * (1.0 - A).powi(2);
    for k in 0..a.u.len() {
        let x = a.chart().coords(k)[0];
        assert!(approx(a.u[k], 0.5 * x * x + g - 0.5, 1e-10));
        assert!(approx(a.u[k], b.u[k], 1e-10));
    }
    assert_eq!(a.contact_count(), 0);
    assert!(matches!(quadratic_growth(&a), Err(Error::EmptyContactSet)));
}

#[test]
fn full_contact_when_obstacle_is_a_supersolution() {
    // ψ'' − 1 < 0, so ψ itself satisfies the inequality and is the solution.
    let chart = GraphChart::flat(1, 32, 1.0).unwrap();
    let psi = |x: &[f64]| 0.3 * x[0] * x[0];
    let p = ObstacleProblem::from_fns(chart, OperatorModel::Linearized, psi, psi, 1.0, quiet()).unwrap();
    let sol = solve_vi(&p).unwrap();
    assert!(sol.chart().interior().all(|k| sol.contact[k]));
    assert!(sol.residual.iter().all(|&r| r <= 1e-10));
    assert_eq!(quadratic_growth(&sol).unwrap().global, 0.0);
}

#[test]
fn quadratic_growth_tends_to_one_half() {
    let cq = |n| {
        let sol = solve_vi(&one_d_problem(n, A, quiet()).unwrap()).unwrap();
        quadratic_growth(&sol).unwrap().global
    };
    let (a, b) = (cq(256), cq(512));
    assert!((b - 0.5).abs() < 0.025, "C_q {b}");
    assert!((a - b).abs() < 0.1 * b);
}

#[test]
fn c11_bounds_on_the_closed_form() {
    let coarse = solve_vi(&one_d_problem(64, A, quiet()).unwrap()).unwrap();
    let fine = solve_vi(&one_d_problem(128, A, quiet()).unwrap()).unwrap();
    let rep = refinement_report(&coarse, &fine);
    for c in [rep.coarse, rep.fine] {
        assert!(approx(c.second_difference, 1.0, 1e-6), "{c:?}");
        assert!((c.remainder_bound - 1.0).abs() < 0.1, "{c:?}");
    }
    assert!(rep.bounded);
    assert!(rep.third_difference_growth >= 1.8, "{rep:?}");
}

#[test]
fn c11_of_a_quadratic_is_its_hessian_norm() {
    // Δu = 2 with quadratic boundary data: u = |x|²/2 exactly, no obstacle.
    let chart = GraphChart::flat(2, 16, 0.5).unwrap();
    let q = |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]);
    let p = ObstacleProblem::from_fns(chart, OperatorModel::Linearized, |_| -1.0, q, 2.0, quiet()).unwrap();
    let sol = solve_vi(&p).unwrap();
    let c = c11_check(&sol);
    assert!(approx(c.remainder_bound, 1.0, 1e-7), "{c:?}");
    assert!(approx(c.second_difference, 1.0, 1e-7));
}

/// Spherical-cap obstacle of radius `R` under the graph, boundary lifted by
/// `lift`, on the flat chart with the full quasilinear operator.
fn cap_problem(cells: usize) -> ObstacleProblem {
    let r = 3.0;
    let cap = move |x: &[f64]| r - (r * r - x[0] * x[0] - x[1] * x[1]).sqrt();
    let chart = GraphChart::flat(2, cells, 0.3).unwrap();
    ObstacleProblem::from_fns(chart, OperatorModel::Quasilinear, cap, move |x| cap(x) + 0.005, 1.0, quiet()).unwrap()
}

#[test]
fn two_d_cap_obstacle_is_elliptic_and_solved() {
    let p = cap_problem(32);
    let sol = solve_vi(&p).unwrap();
    assert!(sol.contact_count() > 0);
    assert!(sol.contact_count() < sol.chart().interior().count());
    assert!(sol.diagnostics.complementarity_residual < 1e-10);
    assert!(sol.diagnostics.gradient_within_bound);
    let ell = ellipticity(&p, &sol.u).unwrap();
    assert!(ell.holds, "{ell:?}");
    assert!(sol.diagnostics.quadratic_constant.unwrap().is_finite());
    for k in 0..sol.u.len() {
        assert!(sol.u[k] >= p.psi[k] - 1e-12);
    }
}

#[test]
fn quasilinear_flat_solution_is_near_the_linearized_one() {
    // Slopes stay below 0.2, so the two operators differ by O(|p|²).
    let q = cap_problem(16);
    let l = ObstacleProblem { model: OperatorModel::Linearized, ..q.clone() };
    let (a, b) = (solve_vi(&q).unwrap(), solve_vi(&l).unwrap());
    let diff = a.u.iter().zip(&b.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-3, "{diff}");
}

#[test]
fn conformal_chart_solve_converges() {
    let mut p = cap_problem(16);
    p.chart.metric = ChartMetric::Conformal { alpha: 0.3 };
    let sol = solve_vi(&p).unwrap();
    assert!(sol.diagnostics.complementarity_residual < 1e-10);
    assert!(ellipticity(&p, &sol.u).unwrap().holds);
}

#[test]
fn solution_csv_has_grid_columns() {
    let sol = solve_vi(&one_d_problem(8, A, quiet()).unwrap()).unwrap();
    let csv = sol.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,u,psi,contact,Lu"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn picard_budget_is_enforced() {
    let mut p = cap_problem(16);
    p.params.max_sweeps = 3;
    p.params.max_picard = 2;
    assert!(matches!(solve_vi(&p), Err(Error::NoConvergence(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vi_invariants_on_random_bumps(amp in 0.0f64..0.3, center in -0.5f64..0.5, h0 in 0.0f64..2.0, lift in 0.0f64..0.2) {
        let chart = GraphChart::flat(1, 32, 1.0).unwrap();
        let psi = move |x: &[f64]| amp * (-(x[0] - center).powi(2) * 8.0).exp();
        let p = ObstacleProblem::from_fns(chart, OperatorModel::Linearized, psi, move |x| psi(x) + lift, h0, quiet()).unwrap();
        let sol = solve_vi(&p).unwrap();
        let free = solve_vi(&p.unconstrained()).unwrap();
        for k in sol.chart().interior() {
            prop_assert!(sol.u[k] >= p.psi[k] - 1e-12);
            prop_assert!(sol.u[k] >= free.u[k] - 1e-10);
            prop_assert!((-sol.residual[k]).min(sol.u[k] - p.psi[k]).abs() < 1e-10);
        }
    }
}

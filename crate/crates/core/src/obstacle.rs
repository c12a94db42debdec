//! Obstacle problem for a boundary written as a graph over a flat grid.
//!
//! Near a contact point the boundary of a minimizer is the graph of `u` and
//! the enclosing sphere the graph of `ψ` over a ball of `ℝ^{n−1}`, in a chart
//! of the ambient manifold with metric `g(x, z)`. The region lies above the
//! graph (`z > u`), so its outer normal points down. With
//!
//! ```text
//! h̃_ij(x, z, p) = g_ij + p_i g_jn + p_j g_ni + p_i p_j g_nn,
//! a^ij = g_nn h̃^ij,   b^i = h̃^ij g_jn,
//! L u = div(A ∇u + b) − f,
//! ```
//!
//! the first variation gives the variational inequality `u ≥ ψ`, `Lu ≤ 0`,
//! `Lu = 0` off the contact set. Expanding the divergence gives
//! `Lu = c^ij ∂_ij u + d`, which is the form discretized here. The solver
//! is projected SOR with frozen coefficients inside a Picard loop.
//!
//! Diagnostics measure quadratic detachment from the obstacle and discrete
//! `C^{1,1}` bounds (second-order remainders and second differences), with
//! third differences as evidence that the second derivative jumps.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient scale under which the coefficients are guaranteed elliptic.
pub const DELTA0: f64 = 0.2;

/// Smallest admissible `det h`.
const MIN_DET: f64 = 1e-10;

/// Step of the fourth-order difference used for user-supplied metrics.
const METRIC_FD_STEP: f64 = 1e-3;

/// Ambient metric `g(y)` at `y = (x, z) ∈ ℝⁿ`.
#[derive(Clone)]
pub enum ChartMetric {
    /// Euclidean identity.
    Flat,
    /// `g = exp(2α|y|²)·I`: a normal chart (`g(0) = I`, `∇g(0) = 0`) with
    /// nonzero Christoffel symbols away from the origin.
    Conformal { alpha: f64 },
    /// Arbitrary metric field; partials by fourth-order differences.
    Custom(Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartMetric::Flat => write!(f, "Flat"),
            ChartMetric::Conformal { alpha } => write!(f, "Conformal {{ alpha: {alpha} }}"),
            ChartMetric::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ChartMetric {
    pub fn metric(&self, y: &[f64]) -> DMatrix<f64> {
        let n = y.len();
        match self {
            ChartMetric::Flat => DMatrix::identity(n, n),
            ChartMetric::Conformal { alpha } => {
                let r2: f64 = y.iter().map(|t| t * t).sum();
                DMatrix::identity(n, n) * (2.0 * alpha * r2).exp()
            }
            ChartMetric::Custom(g) => g(y),
        }
    }

    /// `∂g/∂y_k` for `k = 0..n`, the last one being `∂_z`.
    pub fn partials(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let n = y.len();
        match self {
            ChartMetric::Flat => vec![DMatrix::zeros(n, n); n],
            ChartMetric::Conformal { alpha } => {
                let r2: f64 = y.iter().map(|t| t * t).sum();
                let e = (2.0 * alpha * r2).exp();
                y.iter().map(|&t| DMatrix::identity(n, n) * (4.0 * alpha * t * e)).collect()
            }
            ChartMetric::Custom(_) => fd_partials(|q| self.metric(q), y, METRIC_FD_STEP),
        }
    }

    /// Christoffel symbols `Γ^k_ij`, indexed `[k][(i, j)]`.
    pub fn christoffel(&self, y: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        christoffel_from(&self.metric(y), &self.partials(y))
    }
}

/// Fourth-order central differences of a matrix field.
pub fn fd_partials(f: impl Fn(&[f64]) -> DMatrix<f64>, y: &[f64], step: f64) -> Vec<DMatrix<f64>> {
    (0..y.len())
        .map(|k| {
            let at = |s: f64| {
                let mut q = y.to_vec();
                q[k] += s;
                f(&q)
            };
            (at(-2.0 * step) - at(2.0 * step) + (at(step) - at(-step)) * 8.0) / (12.0 * step)
        })
        .collect()
}

fn christoffel_from(g: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let n = g.nrows();
    let ginv = g.clone().try_inverse().ok_or(Error::SingularMetric(g.determinant()))?;
    let mut gamma = vec![DMatrix::zeros(n, n); n];
    for (k, gk) in gamma.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                gk[(i, j)] = 0.5 * (0..n).map(|l| ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).sum::<f64>();
            }
        }
    }
    Ok(gamma)
}

/// Square grid of `cells` intervals per axis on `[−r₀, r₀]^dim`, `dim ∈ {1, 2}`.
#[derive(Clone, Debug)]
pub struct GraphChart {
    pub dim: usize,
    pub cells: usize,
    pub half_width: f64,
    pub metric: ChartMetric,
}

impl GraphChart {
    pub fn new(dim: usize, cells: usize, half_width: f64, metric: ChartMetric) -> Result<Self> {
        if !(1..=2).contains(&dim) || cells < 4 || !(half_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "graph chart needs dim 1 or 2, at least 4 cells and positive width (got {dim}, {cells}, {half_width})"
            )));
        }
        Ok(Self { dim, cells, half_width, metric })
    }

    pub fn flat(dim: usize, cells: usize, half_width: f64) -> Result<Self> {
        Self::new(dim, cells, half_width, ChartMetric::Flat)
    }

    /// Same chart with twice as many cells.
    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, ..self.clone() }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn side(&self) -> usize {
        self.cells + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid indices `(i, j)` of node `k` (`j = 0` in 1D).
    pub fn index(&self, k: usize) -> (usize, usize) {
        (k % self.side(), k / self.side())
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i + self.side() * j
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        let (i, j) = self.index(k);
        let c = |t: usize| -self.half_width + t as f64 * self.spacing();
        if self.dim == 1 {
            vec![c(i)]
        } else {
            vec![c(i), c(j)]
        }
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = self.index(k);
        let edge = |t: usize| t == 0 || t == self.cells;
        edge(i) || (self.dim == 2 && edge(j))
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| !self.is_boundary(k))
    }

    /// Axis neighbours `(minus, plus)` of an interior node along `axis`.
    fn axis_neighbours(&self, k: usize, axis: usize) -> (usize, usize) {
        let stride = if axis == 0 { 1 } else { self.side() };
        (k - stride, k + stride)
    }

    fn neighbours(&self, k: usize) -> Vec<usize> {
        let (i, j) = self.index(k);
        let mut out = Vec::with_capacity(4);
        if i > 0 {
            out.push(k - 1);
        }
        if i < self.cells {
            out.push(k + 1);
        }
        if self.dim == 2 {
            if j > 0 {
                out.push(k - self.side());
            }
            if j < self.cells {
                out.push(k + self.side());
            }
        }
        out
    }

    /// Central-difference gradient at an interior node.
    pub fn gradient(&self, u: &[f64], k: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.dim)
            .map(|a| {
                let (m, p) = self.axis_neighbours(k, a);
                (u[p] - u[m]) / (2.0 * h)
            })
            .collect()
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(&self.coords(k))).collect()
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (self.coords(a), self.coords(b));
        x.iter().zip(&y).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt()
    }
}

/// Which operator the solver discretizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorModel {
    /// `Δu − H₀`: the operator at the normalized origin, with constant
    /// coefficients.
    Linearized,
    /// The full quasilinear operator assembled from the chart metric.
    Quasilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub solver_tol: f64,
    /// `None` means `10·solver_tol`.
    pub contact_tol: Option<f64>,
    pub max_picard: usize,
    pub max_sweeps: usize,
    /// Over-relaxation factor; `None` picks the model-problem optimum.
    pub omega: Option<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { solver_tol: 1e-10, contact_tol: None, max_picard: 200, max_sweeps: 10_000, omega: None }
    }
}

impl SolverParams {
    pub fn contact_tol(&self) -> f64 {
        self.contact_tol.unwrap_or(10.0 * self.solver_tol)
    }

    /// Tighten (or loosen) the stopping and contact tolerances by `s`, so a
    /// residual target scaled by `s` stays reachable.
    pub fn scale_tolerances(&mut self, s: f64) {
        self.solver_tol *= s;
        if let Some(c) = &mut self.contact_tol {
            *c *= s;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObstacleProblem {
    pub chart: GraphChart,
    pub model: OperatorModel,
    /// Obstacle sampled on the grid.
    pub psi: Vec<f64>,
    /// Boundary values (only boundary nodes are read).
    pub dirichlet: Vec<f64>,
    pub h0: f64,
    pub params: SolverParams,
}

impl ObstacleProblem {
    pub fn new(chart: GraphChart, model: OperatorModel, psi: Vec<f64>, dirichlet: Vec<f64>, h0: f64, params: SolverParams) -> Result<Self> {
        let n = chart.len();
        if psi.len() != n || dirichlet.len() != n {
            return Err(Error::InvalidInput(format!(
                "grid has {n} nodes but ψ has {} and the boundary data {}",
                psi.len(),
                dirichlet.len()
            )));
        }
        for k in (0..n).filter(|&k| chart.is_boundary(k)) {
            if dirichlet[k] < psi[k] {
                return Err(Error::InvalidInput(format!(
                    "boundary data below the obstacle at {:?}: {} < {}",
                    chart.coords(k),
                    dirichlet[k],
                    psi[k]
                )));
            }
        }
        Ok(Self { chart, model, psi, dirichlet, h0, params })
    }

    /// Sample obstacle and boundary data from functions of `x`.
    pub fn from_fns(
        chart: GraphChart,
        model: OperatorModel,
        psi: impl Fn(&[f64]) -> f64,
        dirichlet: impl Fn(&[f64]) -> f64,
        h0: f64,
        params: SolverParams,
    ) -> Result<Self> {
        let p = chart.sample(psi);
        let d = chart.sample(dirichlet);
        Self::new(chart, model, p, d, h0, params)
    }

    /// Same problem without the obstacle.
    pub fn unconstrained(&self) -> Self {
        Self { psi: vec![f64::NEG_INFINITY; self.psi.len()], ..self.clone() }
    }

    fn omega(&self) -> f64 {
        self.params.omega.unwrap_or_else(|| 2.0 / (1.0 + (std::f64::consts::PI / self.chart.cells as f64).sin()))
    }
}

/// `h̃(x, z, p)` from the ambient metric at `(x, z)`.
pub fn h_tilde(g: &DMatrix<f64>, p: &[f64]) -> DMatrix<f64> {
    let m = p.len();
    let n = m + 1;
    let nn = n - 1;
    DMatrix::from_fn(m, m, |i, j| g[(i, j)] + p[i] * g[(j, nn)] + p[j] * g[(nn, i)] + p[i] * p[j] * g[(nn, nn)])
}

fn checked_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let det = h.determinant();
    if !(det >= MIN_DET) {
        return Err(Error::SingularMetric(det));
    }
    h.clone().try_inverse().ok_or(Error::SingularMetric(det))
}

/// Induced metric `h_ij` at every interior node (identity-sized zero
/// matrices on the boundary).
pub fn assemble_metric_on_graph(chart: &GraphChart, u: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let m = chart.dim;
    let mut out = vec![DMatrix::zeros(m, m); chart.len()];
    for k in chart.interior() {
        let p = chart.gradient(u, k);
        let mut y = chart.coords(k);
        y.push(u[k]);
        let h = h_tilde(&chart.metric.metric(&y), &p);
        let det = h.determinant();
        if !(det >= MIN_DET) {
            return Err(Error::SingularMetric(det));
        }
        out[k] = h;
    }
    Ok(out)
}

/// Coefficients of `L` at one point `(x, z, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCoefficients {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub f: f64,
    pub c: DMatrix<f64>,
    pub d: f64,
}

/// `g(e_n, ν)` for the downward unit normal of the graph with slope `p`.
fn normal_component(g: &DMatrix<f64>, p: &[f64]) -> Result<f64> {
    let n = g.nrows();
    let ginv = checked_inverse(g)?;
    // ω = dz − p_i dx^i annihilates the tangent space; ν = −ω♯/|ω|.
    let mut w = DVector::zeros(n);
    for (i, &pi) in p.iter().enumerate() {
        w[i] = -pi;
    }
    w[n - 1] = 1.0;
    let norm = w.dot(&(&ginv * &w)).sqrt();
    Ok(-1.0 / norm)
}

/// Assemble `a, b, f, c, d` at `(x, z, p)` by the closed-form expansion of
/// the divergence.
pub fn point_coefficients(metric: &ChartMetric, x: &[f64], z: f64, p: &[f64], h0: f64) -> Result<PointCoefficients> {
    let m = x.len();
    let n = m + 1;
    let nn = n - 1;
    let mut y = x.to_vec();
    y.push(z);
    let g = metric.metric(&y);
    let dg = metric.partials(&y);
    let gamma = christoffel_from(&g, &dg)?;

    let ht = h_tilde(&g, p);
    let hinv = checked_inverse(&ht)?;
    // ∂h̃ in x_k and z: the same formula with g replaced by its partial.
    let dh_inv: Vec<DMatrix<f64>> = dg.iter().map(|d| -&hinv * h_tilde(d, p) * &hinv).collect();
    // ∂h̃_ij/∂p_k = δ_ik (g_jn + p_j g_nn) + δ_jk (g_ni + p_i g_nn).
    let dp_inv: Vec<DMatrix<f64>> = (0..m)
        .map(|k| {
            let dh = DMatrix::from_fn(m, m, |i, j| {
                let mut v = 0.0;
                if i == k {
                    v += g[(j, nn)] + p[j] * g[(nn, nn)];
                }
                if j == k {
                    v += g[(nn, i)] + p[i] * g[(nn, nn)];
                }
                v
            });
            -&hinv * dh * &hinv
        })
        .collect();

    let gnn = g[(nn, nn)];
    let a = &hinv * gnn;
    let gcol = DVector::from_fn(m, |j, _| g[(j, nn)]);
    let b = &hinv * &gcol;

    let nu_n = normal_component(&g, p)?;
    let mut f = 0.0;
    for i in 0..m {
        for j in 0..m {
            let hij = hinv[(i, j)];
            for k in 0..n {
                f += hij * p[i] * gamma[k][(nn, nn)] * g[(j, k)];
                f += hij * p[j] * p[i] * gamma[k][(nn, nn)] * g[(k, nn)];
                f += hij * gamma[k][(i, nn)] * g[(j, k)];
                f += hij * p[j] * gamma[k][(i, nn)] * g[(k, nn)];
            }
        }
    }
    f -= h0 * nu_n;

    let c = DMatrix::from_fn(m, m, |i, j| {
        let mut v = a[(i, j)];
        for l in 0..m {
            v += gnn * p[l] * dp_inv[j][(i, l)] + g[(l, nn)] * dp_inv[j][(i, l)];
        }
        v
    });

    let dz = &dh_inv[nn];
    let mut d = 0.0;
    for i in 0..m {
        for j in 0..m {
            let hij = hinv[(i, j)];
            let dxi = dh_inv[i][(i, j)];
            d += gnn * dxi * p[j];
            d += gnn * dz[(i, j)] * p[i] * p[j];
            d += dg[i][(nn, nn)] * hij * p[j];
            d += dg[nn][(nn, nn)] * hij * p[i] * p[j];
            d += g[(j, nn)] * dxi;
            d += g[(j, nn)] * dz[(i, j)] * p[i];
            d += dg[i][(j, nn)] * hij;
            d += dg[nn][(j, nn)] * hij * p[i];
        }
    }
    d -= f;
    Ok(PointCoefficients { a, b, f, c, d })
}

/// Frozen coefficients on the grid: symmetrized `c` as `(c11, c12, c22)` and
/// `d`, per node (zero on the boundary).
#[derive(Clone, Debug)]
struct Frozen {
    c: Vec<[f64; 3]>,
    d: Vec<f64>,
}

fn freeze(p: &ObstacleProblem, u: &[f64]) -> Result<Frozen> {
    let chart = &p.chart;
    let mut c = vec![[0.0; 3]; chart.len()];
    let mut d = vec![0.0; chart.len()];
    for k in chart.interior() {
        match p.model {
            OperatorModel::Linearized => {
                c[k] = [1.0, 0.0, 1.0];
                d[k] = -p.h0;
            }
            OperatorModel::Quasilinear => {
                let pc = point_coefficients(&chart.metric, &chart.coords(k), u[k], &chart.gradient(u, k), p.h0)?;
                c[k] = if chart.dim == 1 {
                    [pc.c[(0, 0)], 0.0, 0.0]
                } else {
                    [pc.c[(0, 0)], 0.5 * (pc.c[(0, 1)] + pc.c[(1, 0)]), pc.c[(1, 1)]]
                };
                d[k] = pc.d;
            }
        }
    }
    Ok(Frozen { c, d })
}

/// Coefficient assembly on the grid, exposed for diagnostics.
pub fn assemble_operator(p: &ObstacleProblem, u: &[f64]) -> Result<Vec<Option<PointCoefficients>>> {
    let chart = &p.chart;
    (0..chart.len())
        .map(|k| {
            if chart.is_boundary(k) {
                return Ok(None);
            }
            point_coefficients(&chart.metric, &chart.coords(k), u[k], &chart.gradient(u, k), p.h0).map(Some)
        })
        .collect()
}

/// `L_h u = diag·u_k + rest` at an interior node.
fn stencil(chart: &GraphChart, fr: &Frozen, u: &[f64], k: usize) -> (f64, f64) {
    let h2 = chart.spacing().powi(2);
    let [c11, c12, c22] = fr.c[k];
    let (w, e) = chart.axis_neighbours(k, 0);
    let mut diag = -2.0 * c11 / h2;
    let mut rest = c11 * (u[w] + u[e]) / h2 + fr.d[k];
    if chart.dim == 2 {
        let (so, no) = chart.axis_neighbours(k, 1);
        diag -= 2.0 * c22 / h2;
        rest += c22 * (u[so] + u[no]) / h2;
        if c12 != 0.0 {
            let mixed = u[no + 1] - u[so + 1] - u[no - 1] + u[so - 1];
            rest += 2.0 * c12 * mixed / (4.0 * h2);
        }
    }
    (diag, rest)
}

fn apply(chart: &GraphChart, fr: &Frozen, u: &[f64]) -> Vec<f64> {
    let mut lu = vec![0.0; chart.len()];
    for k in chart.interior() {
        let (diag, rest) = stencil(chart, fr, u, k);
        lu[k] = diag * u[k] + rest;
    }
    lu
}

fn complementarity(chart: &GraphChart, lu: &[f64], u: &[f64], psi: &[f64]) -> f64 {
    chart.interior().map(|k| (-lu[k]).min(u[k] - psi[k]).abs()).fold(0.0, f64::max)
}

/// Diagnostics stored with a solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionDiagnostics {
    pub quadratic_constant: Option<f64>,
    pub second_difference_bound: f64,
    pub complementarity_residual: f64,
    pub max_gradient: f64,
    /// `‖∇u‖∞ ≤ δ₀`, the regime where the coefficients are elliptic.
    pub gradient_within_bound: bool,
    pub picard_iterations: usize,
    pub sweeps: usize,
}

#[derive(Clone, Debug)]
pub struct ObstacleSolution {
    pub problem: ObstacleProblem,
    pub u: Vec<f64>,
    pub contact: Vec<bool>,
    /// `L_h u` with coefficients frozen at `u`.
    pub residual: Vec<f64>,
    pub diagnostics: SolutionDiagnostics,
}

impl ObstacleSolution {
    pub fn chart(&self) -> &GraphChart {
        &self.problem.chart
    }

    pub fn contact_count(&self) -> usize {
        self.contact.iter().filter(|&&c| c).count()
    }

    /// Interior contact nodes with at least one non-contact neighbour.
    pub fn free_boundary_nodes(&self) -> Vec<usize> {
        let chart = self.chart();
        chart.interior().filter(|&k| self.contact[k] && chart.neighbours(k).iter().any(|&q| !self.contact[q])).collect()
    }

    /// Grid dump: coordinates, `u`, `ψ`, contact flag, `L_h u`.
    pub fn to_csv(&self) -> Result<String> {
        let chart = self.chart();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = if chart.dim == 1 { vec!["x"] } else { vec!["x", "y"] };
        header.extend(["u", "psi", "contact", "Lu"]);
        w.write_record(&header).map_err(crate::region::csv_err)?;
        for k in 0..chart.len() {
            let mut row: Vec<String> = chart.coords(k).iter().map(|c| c.to_string()).collect();
            let psi = self.problem.psi[k];
            row.push(self.u[k].to_string());
            row.push(if psi.is_finite() { psi.to_string() } else { String::new() });
            row.push(u8::from(self.contact[k]).to_string());
            row.push(self.residual[k].to_string());
            w.write_record(&row).map_err(crate::region::csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Projected SOR sweeps on the frozen operator until the update falls below
/// `tol` and the complementarity residual below `res_tol`.
fn psor(p: &ObstacleProblem, fr: &Frozen, u: &mut [f64], tol: f64, res_tol: f64) -> (usize, bool) {
    let chart = &p.chart;
    let omega = p.omega();
    let interior: Vec<usize> = chart.interior().collect();
    for sweep in 1..=p.params.max_sweeps {
        let mut max_update: f64 = 0.0;
        for &k in &interior {
            let (diag, rest) = stencil(chart, fr, u, k);
            let target = -rest / diag;
            let next = (u[k] + omega * (target - u[k])).max(p.psi[k]);
            max_update = max_update.max((next - u[k]).abs());
            u[k] = next;
        }
        if max_update < tol {
            let lu = apply(chart, fr, u);
            if complementarity(chart, &lu, u, &p.psi) < res_tol {
                return (sweep, true);
            }
        }
    }
    (p.params.max_sweeps, false)
}

/// Solve the variational inequality by Picard iteration on frozen
/// coefficients with a projected SOR inner solve.
pub fn solve_vi(p: &ObstacleProblem) -> Result<ObstacleSolution> {
    let chart = &p.chart;
    let tol = p.params.solver_tol;
    let mut u: Vec<f64> = (0..chart.len())
        .map(|k| {
            if chart.is_boundary(k) {
                p.dirichlet[k]
            } else if p.psi[k].is_finite() {
                p.psi[k]
            } else {
                0.0
            }
        })
        .collect();
    // Start from the larger of ψ and the boundary mean, a cheap supersolution
    // guess for the contact region.
    let boundary_mean = {
        let b: Vec<f64> = (0..chart.len()).filter(|&k| chart.is_boundary(k)).map(|k| p.dirichlet[k]).collect();
        b.iter().sum::<f64>() / b.len() as f64
    };
    for k in chart.interior() {
        u[k] = u[k].max(boundary_mean);
    }

    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    for picard in 1..=p.params.max_picard {
        let fr = freeze(p, &u)?;
        let before = u.clone();
        let inner_tol = if p.model == OperatorModel::Linearized { tol } else { tol.max(1e-3 * last_change) };
        let (s, ok) = psor(p, &fr, &mut u, inner_tol, if inner_tol > tol { f64::INFINITY } else { tol });
        sweeps += s;
        if !ok && inner_tol == tol {
            return Err(Error::NoConvergence(format!(
                "projected SOR did not reach {tol:e} in {} sweeps (Picard step {picard})",
                p.params.max_sweeps
            )));
        }
        last_change = u.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let fr = freeze(p, &u)?;
        let lu = apply(chart, &fr, &u);
        let res = complementarity(chart, &lu, &u, &p.psi);
        if last_change < tol && res < tol {
            return Ok(finish(p, u, lu, res, picard, sweeps));
        }
        if p.model == OperatorModel::Linearized && res < tol {
            return Ok(finish(p, u, lu, res, picard, sweeps));
        }
    }
    Err(Error::NoConvergence(format!("Picard loop did not settle in {} steps (last change {last_change:e})", p.params.max_picard)))
}

fn finish(p: &ObstacleProblem, u: Vec<f64>, lu: Vec<f64>, res: f64, picard: usize, sweeps: usize) -> ObstacleSolution {
    let chart = &p.chart;
    let ctol = p.params.contact_tol();
    let contact: Vec<bool> = (0..chart.len()).map(|k| u[k] - p.psi[k] <= ctol).collect();
    let max_gradient = chart.interior().map(|k| chart.gradient(&u, k).iter().map(|t| t * t).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let mut sol = ObstacleSolution {
        problem: p.clone(),
        u,
        contact,
        residual: lu,
        diagnostics: SolutionDiagnostics {
            quadratic_constant: None,
            second_difference_bound: 0.0,
            complementarity_residual: res,
            max_gradient,
            gradient_within_bound: max_gradient <= DELTA0,
            picard_iterations: picard,
            sweeps,
        },
    };
    sol.diagnostics.second_difference_bound = second_difference_sup(chart, &sol.u);
    sol.diagnostics.quadratic_constant = quadratic_growth(&sol).ok().map(|q| q.global);
    sol
}

/// Quadratic detachment constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticGrowth {
    pub global: f64,
    /// `(node, constant)` for every free-boundary node.
    pub per_point: Vec<(usize, f64)>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

/// `max (u − ψ)(x)/|x − x₀|²` over free-boundary nodes `x₀` and nodes `x`
/// with `r₀/4 ≤ |x − x₀| ≤ r₀/2`.
///
/// The inner cut keeps the quotient away from the cells next to `x₀`, where
/// the discrete free boundary is only located to within `O(h)` and the
/// quotient carries an `O(1)` discretization error.
pub fn quadratic_growth(sol: &ObstacleSolution) -> Result<QuadraticGrowth> {
    let r0 = sol.chart().half_width;
    quadratic_growth_in(sol, 0.25 * r0, 0.5 * r0)
}

pub fn quadratic_growth_in(sol: &ObstacleSolution, inner: f64, outer: f64) -> Result<QuadraticGrowth> {
    if sol.contact_count() == 0 {
        return Err(Error::EmptyContactSet);
    }
    let chart = sol.chart();
    let gap: Vec<f64> = sol.u.iter().zip(&sol.problem.psi).map(|(u, p)| u - p).collect();
    let slack = 1e-12;
    let mut per_point = Vec::new();
    for x0 in sol.free_boundary_nodes() {
        let mut best: f64 = 0.0;
        for x in 0..chart.len() {
            let r = chart.distance(x0, x);
            if r >= inner - slack && r <= outer + slack && r > 0.0 {
                best = best.max(gap[x] / (r * r));
            }
        }
        per_point.push((x0, best));
    }
    let global = per_point.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(QuadraticGrowth { global, per_point, inner_radius: inner, outer_radius: outer })
}

/// Discrete `C^{1,1}` measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct C11Report {
    /// Sup of `2|u(y) − u(x) − ∇u(x)·(y − x)|/|x − y|²` over pairs with
    /// `|x − y| ≤ ball_cells·h`.
    pub remainder_bound: f64,
    /// Sup of `|u(x + he) − 2u(x) + u(x − he)|/h²`.
    pub second_difference: f64,
    /// Sup of `|u(x + 2he) − 3u(x + he) + 3u(x) − u(x − he)|/h³`.
    pub third_difference: f64,
}

/// Grid ball used for the remainder quotient.
pub const C11_BALL_CELLS: usize = 3;

pub fn c11_check(sol: &ObstacleSolution) -> C11Report {
    let chart = sol.chart();
    let u = &sol.u;
    let h = chart.spacing();
    let reach = C11_BALL_CELLS as isize;
    let mut remainder: f64 = 0.0;
    for x in chart.interior() {
        let grad = chart.gradient(u, x);
        let (i, j) = chart.index(x);
        let jr = if chart.dim == 2 { -reach..=reach } else { 0..=0 };
        for dj in jr {
            for di in -reach..=reach {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (yi, yj) = (i as isize + di, j as isize + dj);
                if yi < 0 || yj < 0 || yi > chart.cells as isize || yj > chart.cells as isize {
                    continue;
                }
                let y = chart.node(yi as usize, yj as usize);
                let dx = [di as f64 * h, dj as f64 * h];
                let r2 = dx[0] * dx[0] + dx[1] * dx[1];
                if r2.sqrt() > C11_BALL_CELLS as f64 * h * (1.0 + 1e-12) {
                    continue;
                }
                let lin: f64 = grad.iter().zip(dx).map(|(g, d)| g * d).sum();
                remainder = remainder.max(2.0 * (u[y] - u[x] - lin).abs() / r2);
            }
        }
    }
    C11Report {
        remainder_bound: remainder,
        second_difference: second_difference_sup(chart, u),
        third_difference: third_difference_sup(chart, u),
    }
}

fn axis_strides(chart: &GraphChart) -> Vec<usize> {
    if chart.dim == 1 {
        vec![1]
    } else {
        vec![1, chart.side()]
    }
}

fn in_line(chart: &GraphChart, k: usize, stride: usize, lo: isize, hi: isize) -> bool {
    let (i, j) = chart.index(k);
    let t = if stride == 1 { i } else { j } as isize;
    t + lo >= 0 && t + hi <= chart.cells as isize
}

fn second_difference_sup(chart: &GraphChart, u: &[f64]) -> f64 {
    let h2 = chart.spacing().powi(2);
    let mut best: f64 = 0.0;
    for s in axis_strides(chart) {
        for k in (0..chart.len()).filter(|&k| in_line(chart, k, s, -1, 1)) {
            best = best.max((u[k + s] - 2.0 * u[k] + u[k - s]).abs() / h2);
        }
    }
    best
}

fn third_difference_sup(chart: &GraphChart, u: &[f64]) -> f64 {
    let h3 = chart.spacing().powi(3);
    let mut best: f64 = 0.0;
    for s in axis_strides(chart) {
        for k in (0..chart.len()).filter(|&k| in_line(chart, k, s, -1, 2)) {
            best = best.max((u[k + 2 * s] - 3.0 * u[k + s] + 3.0 * u[k] - u[k - s]).abs() / h3);
        }
    }
    best
}

/// `C^{1,1}` bounds at two resolutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefinementReport {
    pub coarse: C11Report,
    pub fine: C11Report,
    /// Remainder and second-difference bounds change by at most a factor 2.
    pub bounded: bool,
    pub third_difference_growth: f64,
}

pub fn refinement_report(coarse: &ObstacleSolution, fine: &ObstacleSolution) -> RefinementReport {
    let (a, b) = (c11_check(coarse), c11_check(fine));
    let within = |x: f64, y: f64| y <= 2.0 * x && x <= 2.0 * y;
    RefinementReport {
        coarse: a,
        fine: b,
        bounded: within(a.remainder_bound, b.remainder_bound) && within(a.second_difference, b.second_difference),
        third_difference_growth: b.third_difference / a.third_difference,
    }
}

/// Eigenvalue range of the symmetrized `c` over interior nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub nodes: usize,
    /// `Id/2 ≤ c ≤ 2·Id` at every node.
    pub holds: bool,
}

pub fn ellipticity(p: &ObstacleProblem, u: &[f64]) -> Result<EllipticityReport> {
    let (mut lo, mut hi, mut nodes) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for pc in assemble_operator(p, u)?.into_iter().flatten() {
        let sym = (&pc.c + pc.c.transpose()) * 0.5;
        for &e in sym.symmetric_eigenvalues().iter() {
            lo = lo.min(e);
            hi = hi.max(e);
        }
        nodes += 1;
    }
    Ok(EllipticityReport { min_eigenvalue: lo, max_eigenvalue: hi, nodes, holds: lo >= 0.5 && hi <= 2.0 })
}

/// Exact solution of `u'' = 1`, `u ≥ 0` on `[−1, 1]` with free boundary at
/// `±a`: `(|x| − a)²/2` outside `[−a, a]`, zero inside.
pub fn one_d_exact(a: f64, x: f64) -> f64 {
    let t = (x.abs() - a).max(0.0);
    0.5 * t * t
}

/// The 1D problem solved by [`one_d_exact`]: `L = u'' − 1`, `ψ ≡ 0`,
/// `u(±1) = (1 − a)²/2`.
pub fn one_d_problem(cells: usize, a: f64, params: SolverParams) -> Result<ObstacleProblem> {
    let chart = GraphChart::flat(1, cells, 1.0)?;
    let g = 0.5 * (1.0 - a).powi(2);
    ObstacleProblem::from_fns(chart, OperatorModel::Linearized, |_| 0.0, |_| g, 1.0, params)
}

/// Sup-norm error of a 1D solution against [`one_d_exact`].
pub fn one_d_error(sol: &ObstacleSolution, a: f64) -> f64 {
    let chart = sol.chart();
    (0..chart.len()).map(|k| (sol.u[k] - one_d_exact(a, chart.coords(k)[0])).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;

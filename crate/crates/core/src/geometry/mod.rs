//! Model surfaces: metric tensor in one global chart, geodesics, distances
//! and geodesic-ball measures.
//!
//! Every backend lives in a single chart:
//!
//! * Euclidean plane: identity chart.
//! * Hyperbolic plane of curvature `K < 0`: Poincaré disk of radius `1/√−K`,
//!   metric `4/(1 + K|x|²)² · I`.
//! * Sphere of curvature `K > 0`: geodesic polar coordinates around the north
//!   pole written in Cartesian form; the closed disk `|x| ≤ π/√K` covers the
//!   sphere and its boundary circle is the south pole.
//! * Warped surfaces `dr² + φ(r)² dθ²`: the same Cartesian polar chart,
//!   `g = r̂r̂ᵀ + (φ/r)²(I − r̂r̂ᵀ)`.
//! * Embedded surfaces: the helicoid `(u cos v, u sin v, v)` with metric
//!   `diag(1, 1 + u²)`, and the catenoid `(cosh t cos θ, cosh t sin θ, t)` with
//!   conformal metric `cosh²t · I` (the θ coordinate is unwrapped, so the
//!   chart is the universal cover).
//!
//! Distances use closed forms where they exist and a shooting solve of the
//! geodesic boundary-value problem otherwise.

mod fan;
mod profile;

use std::path::Path;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{increasing_root, GAUSS8};

pub use profile::{TabulatedProfile, WarpProfile};

pub type Point = Vector2<f64>;
pub type Vec2 = Vector2<f64>;

/// Sign of the Gauss curvature over the whole surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSign {
    NonPositive,
    NonNegative,
    /// Identically zero; satisfies both one-sided hypotheses.
    Flat,
    Mixed,
}

impl CurvatureSign {
    pub fn allows_nonpositive(self) -> bool {
        matches!(self, CurvatureSign::NonPositive | CurvatureSign::Flat)
    }

    pub fn allows_nonnegative(self) -> bool {
        matches!(self, CurvatureSign::NonNegative | CurvatureSign::Flat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartDomain {
    Plane,
    OpenDisk { radius: f64 },
    ClosedDisk { radius: f64 },
}

impl ChartDomain {
    pub fn contains(&self, p: &Point) -> bool {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return false;
        }
        match *self {
            ChartDomain::Plane => true,
            ChartDomain::OpenDisk { radius } => p.norm() < radius * (1.0 - 1e-12),
            ChartDomain::ClosedDisk { radius } => p.norm() <= radius * (1.0 + 1e-9),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddedKind {
    Helicoid,
    Catenoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendKind {
    EuclideanPlane,
    HyperbolicPlane { curvature: f64 },
    Sphere { curvature: f64 },
    WarpedSurface(WarpProfile),
    EmbeddedSurface(EmbeddedKind),
}

/// JSON descriptor of a backend, e.g. `{"kind": "warped", "a": 0.5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Euclidean,
    Hyperbolic {
        #[serde(default = "minus_one")]
        curvature: f64,
    },
    Sphere {
        #[serde(default = "plus_one")]
        curvature: f64,
    },
    Warped {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
        /// Two-column CSV `(r, φ)`, relative to the config file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<String>,
    },
    Helicoid,
    Catenoid,
}

fn minus_one() -> f64 {
    -1.0
}

fn plus_one() -> f64 {
    1.0
}

/// Numerical knobs of the geodesic machinery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicParams {
    /// Arclength per RK4 step.
    pub step: f64,
    /// Edges with metric chord length below this use chord quadrature
    /// instead of a geodesic solve.
    pub chart_resolution: f64,
    /// Number of geodesics in the fan used for off-center balls.
    pub fan_rays: usize,
}

impl Default for GeodesicParams {
    fn default() -> Self {
        GeodesicParams { step: 1e-2, chart_resolution: 0.05, fan_rays: 512 }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Radial {
    Warp(WarpProfile),
    Sine { kappa: f64 },
}

impl Radial {
    fn phi(&self, r: f64) -> f64 {
        match self {
            Radial::Warp(w) => w.phi(r),
            Radial::Sine { kappa } => (kappa * r).sin() / kappa,
        }
    }

    fn dphi(&self, r: f64) -> f64 {
        match self {
            Radial::Warp(w) => w.dphi(r),
            Radial::Sine { kappa } => (kappa * r).cos(),
        }
    }

    fn integral(&self, r: f64) -> f64 {
        match self {
            Radial::Warp(w) => w.integral(r),
            Radial::Sine { kappa } => {
                let s = (0.5 * kappa * r).sin();
                2.0 * s * s / (kappa * kappa)
            }
        }
    }

    fn gauss(&self, r: f64) -> f64 {
        match self {
            Radial::Warp(w) => w.gauss_curvature(r),
            Radial::Sine { kappa } => kappa * kappa,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Chart {
    Flat,
    Poincare { kappa: f64 },
    Polar(Radial),
    Helicoid,
    Catenoid,
}

/// Length of a boundary edge together with its first variation.
///
/// Gradients are covectors in chart coordinates: moving the endpoint `q` by a
/// chart displacement `X` changes the length by `grad_q · X`. Tangents are
/// metric-unit vectors pointing along the direction of travel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeGeometry {
    pub length: f64,
    pub grad_p: Vec2,
    pub grad_q: Vec2,
    pub tangent_start: Vec2,
    pub tangent_end: Vec2,
}

/// Volume and perimeter of a geodesic ball, plus `r·P/(2V) − 1` evaluated
/// without cancellation where possible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallMeasures {
    pub radius: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub excess: f64,
}

impl BallMeasures {
    pub fn ratio(&self) -> f64 {
        1.0 + self.excess
    }
}

/// A model Riemannian surface. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldBackend {
    kind: BackendKind,
    spec: BackendSpec,
    chart: Chart,
    domain: ChartDomain,
    sign: CurvatureSign,
    params: GeodesicParams,
}

impl ManifoldBackend {
    pub fn euclidean() -> Self {
        ManifoldBackend {
            kind: BackendKind::EuclideanPlane,
            spec: BackendSpec::Euclidean,
            chart: Chart::Flat,
            domain: ChartDomain::Plane,
            sign: CurvatureSign::Flat,
            params: GeodesicParams::default(),
        }
    }

    pub fn hyperbolic(curvature: f64) -> Result<Self> {
        if !(curvature < 0.0 && curvature.is_finite()) {
            return Err(Error::InvalidInput(format!("hyperbolic curvature must be negative, got {curvature}")));
        }
        let kappa = (-curvature).sqrt();
        Ok(ManifoldBackend {
            kind: BackendKind::HyperbolicPlane { curvature },
            spec: BackendSpec::Hyperbolic { curvature },
            chart: Chart::Poincare { kappa },
            domain: ChartDomain::OpenDisk { radius: 1.0 / kappa },
            sign: CurvatureSign::NonPositive,
            params: GeodesicParams::default(),
        })
    }

    pub fn sphere(curvature: f64) -> Result<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::InvalidInput(format!("sphere curvature must be positive, got {curvature}")));
        }
        let kappa = curvature.sqrt();
        Ok(ManifoldBackend {
            kind: BackendKind::Sphere { curvature },
            spec: BackendSpec::Sphere { curvature },
            chart: Chart::Polar(Radial::Sine { kappa }),
            domain: ChartDomain::ClosedDisk { radius: std::f64::consts::PI / kappa },
            sign: CurvatureSign::NonNegative,
            params: GeodesicParams::default(),
        })
    }

    pub fn warped(profile: WarpProfile) -> Self {
        let spec = match &profile {
            WarpProfile::Tanh { a } => BackendSpec::Warped { a: Some(*a), table: None },
            WarpProfile::Tabulated(_) => BackendSpec::Warped { a: None, table: None },
        };
        Self::warped_with_spec(profile, spec)
    }

    fn warped_with_spec(profile: WarpProfile, spec: BackendSpec) -> Self {
        let domain = match profile.max_radius() {
            Some(r) => ChartDomain::ClosedDisk { radius: r },
            None => ChartDomain::Plane,
        };
        let (chart, sign) = if profile.is_flat() {
            (Chart::Flat, CurvatureSign::Flat)
        } else {
            let sign = match &profile {
                WarpProfile::Tanh { a } if *a < 1.0 => CurvatureSign::NonNegative,
                WarpProfile::Tanh { .. } => CurvatureSign::NonPositive,
                WarpProfile::Tabulated(_) => CurvatureSign::Mixed,
            };
            (Chart::Polar(Radial::Warp(profile.clone())), sign)
        };
        let mut b =
            ManifoldBackend { kind: BackendKind::WarpedSurface(profile), spec, chart, domain, sign, params: GeodesicParams::default() };
        if matches!(b.kind, BackendKind::WarpedSurface(WarpProfile::Tabulated(_))) {
            b.sign = b.sampled_curvature_sign();
        }
        b
    }

    pub fn embedded(kind: EmbeddedKind) -> Self {
        let (chart, spec) = match kind {
            EmbeddedKind::Helicoid => (Chart::Helicoid, BackendSpec::Helicoid),
            EmbeddedKind::Catenoid => (Chart::Catenoid, BackendSpec::Catenoid),
        };
        ManifoldBackend {
            kind: BackendKind::EmbeddedSurface(kind),
            spec,
            chart,
            domain: ChartDomain::Plane,
            sign: CurvatureSign::NonPositive,
            params: GeodesicParams::default(),
        }
    }

    /// Build from a JSON descriptor; table paths resolve against `base_dir`.
    pub fn from_spec(spec: &BackendSpec, base_dir: &Path) -> Result<Self> {
        match spec {
            BackendSpec::Euclidean => Ok(Self::euclidean()),
            BackendSpec::Hyperbolic { curvature } => Self::hyperbolic(*curvature),
            BackendSpec::Sphere { curvature } => Self::sphere(*curvature),
            BackendSpec::Warped { a: Some(a), table: None } => Ok(Self::warped_with_spec(WarpProfile::tanh(*a)?, spec.clone())),
            BackendSpec::Warped { a: None, table: Some(t) } => {
                let profile = TabulatedProfile::from_csv(&base_dir.join(t))?;
                Ok(Self::warped_with_spec(WarpProfile::Tabulated(profile), spec.clone()))
            }
            BackendSpec::Warped { .. } => Err(Error::InvalidInput("warped backend needs exactly one of `a` or `table`".into())),
            BackendSpec::Helicoid => Ok(Self::embedded(EmbeddedKind::Helicoid)),
            BackendSpec::Catenoid => Ok(Self::embedded(EmbeddedKind::Catenoid)),
        }
    }

    pub fn with_params(mut self, params: GeodesicParams) -> Self {
        self.params = params;
        self
    }

    pub fn kind(&self) -> &BackendKind {
        &self.kind
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn params(&self) -> &GeodesicParams {
        &self.params
    }

    pub fn chart_domain(&self) -> ChartDomain {
        self.domain
    }

    pub fn curvature_sign(&self) -> CurvatureSign {
        self.sign
    }

    /// Short human-readable label.
    pub fn label(&self) -> String {
        match &self.kind {
            BackendKind::EuclideanPlane => "euclidean".into(),
            BackendKind::HyperbolicPlane { curvature } => format!("hyperbolic(K={curvature})"),
            BackendKind::Sphere { curvature } => format!("sphere(K={curvature})"),
            BackendKind::WarpedSurface(WarpProfile::Tanh { a }) => format!("warped(a={a})"),
            BackendKind::WarpedSurface(WarpProfile::Tabulated(_)) => "warped(table)".into(),
            BackendKind::EmbeddedSurface(EmbeddedKind::Helicoid) => "helicoid".into(),
            BackendKind::EmbeddedSurface(EmbeddedKind::Catenoid) => "catenoid".into(),
        }
    }

    /// True when the chart metric is the identity and every computation
    /// takes the exact Euclidean path.
    pub fn is_flat(&self) -> bool {
        self.chart == Chart::Flat
    }

    /// True when distances and their gradients are available in closed form.
    pub fn has_closed_form_distance(&self) -> bool {
        matches!(self.chart, Chart::Flat | Chart::Poincare { .. } | Chart::Polar(Radial::Sine { .. }))
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.domain.contains(p)
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfChart(format!("({}, {}) on {}", p.x, p.y, self.label())))
        }
    }

    pub fn metric(&self, p: &Point) -> Matrix2<f64> {
        match &self.chart {
            Chart::Flat => Matrix2::identity(),
            Chart::Poincare { kappa } => {
                let w = 1.0 - kappa * kappa * p.norm_squared();
                Matrix2::identity() * (4.0 / (w * w))
            }
            Chart::Polar(rad) => {
                let r = p.norm();
                if r < 1e-12 {
                    return Matrix2::identity();
                }
                let psi = (rad.phi(r) / r).powi(2);
                let q = (1.0 - psi) / (r * r);
                Matrix2::identity() * psi + (p * p.transpose()) * q
            }
            Chart::Helicoid => Matrix2::new(1.0, 0.0, 0.0, 1.0 + p.x * p.x),
            Chart::Catenoid => Matrix2::identity() * p.x.cosh().powi(2),
        }
    }

    /// Chart partial derivatives `[∂₀g, ∂₁g]` of the metric.
    pub fn metric_partials(&self, p: &Point) -> [Matrix2<f64>; 2] {
        let zero = Matrix2::zeros();
        match &self.chart {
            Chart::Flat => [zero, zero],
            Chart::Poincare { kappa } => {
                let k2 = kappa * kappa;
                let w = 1.0 - k2 * p.norm_squared();
                let c = 16.0 * k2 / (w * w * w);
                [Matrix2::identity() * (c * p.x), Matrix2::identity() * (c * p.y)]
            }
            Chart::Polar(rad) => {
                let r = p.norm();
                if r < 1e-9 {
                    return [zero, zero];
                }
                let phi = rad.phi(r);
                let dphi = rad.dphi(r);
                let psi = (phi / r).powi(2);
                let dpsi = 2.0 * phi * (r * dphi - phi) / r.powi(3);
                let q = (1.0 - psi) / (r * r);
                let dq = -dpsi / (r * r) - 2.0 * (1.0 - psi) / r.powi(3);
                let xx = p * p.transpose();
                let mut out = [zero, zero];
                for (k, o) in out.iter_mut().enumerate() {
                    let mut e = Vec2::zeros();
                    e[k] = 1.0;
                    *o = Matrix2::identity() * (dpsi * p[k] / r) + xx * (dq * p[k] / r) + (e * p.transpose() + p * e.transpose()) * q;
                }
                out
            }
            Chart::Helicoid => [Matrix2::new(0.0, 0.0, 0.0, 2.0 * p.x), zero],
            Chart::Catenoid => [Matrix2::identity() * (2.0 * p.x).sinh(), zero],
        }
    }

    /// Riemannian area density `√det g` in the chart.
    pub fn area_density(&self, p: &Point) -> f64 {
        match &self.chart {
            Chart::Flat => 1.0,
            Chart::Poincare { kappa } => {
                let w = 1.0 - kappa * kappa * p.norm_squared();
                4.0 / (w * w)
            }
            Chart::Polar(rad) => {
                let r = p.norm();
                if r < 1e-12 {
                    1.0
                } else {
                    rad.phi(r) / r
                }
            }
            Chart::Helicoid => (1.0 + p.x * p.x).sqrt(),
            Chart::Catenoid => p.x.cosh().powi(2),
        }
    }

    /// A vector field `W` with `div W = √det g` (chart divergence), used to
    /// turn area integrals into boundary integrals.
    pub fn area_flux(&self, p: &Point) -> Vec2 {
        match &self.chart {
            Chart::Flat => p * 0.5,
            Chart::Poincare { kappa } => p * (2.0 / (1.0 - kappa * kappa * p.norm_squared())),
            Chart::Polar(rad) => {
                let r = p.norm();
                if r < 1e-6 {
                    p * 0.5
                } else {
                    p * (rad.integral(r) / (r * r))
                }
            }
            Chart::Helicoid => {
                let u = p.x;
                Vec2::new(0.5 * (u * (1.0 + u * u).sqrt() + u.asinh()), 0.0)
            }
            Chart::Catenoid => Vec2::new(0.5 * p.x + 0.25 * (2.0 * p.x).sinh(), 0.0),
        }
    }

    pub fn gauss_curvature(&self, p: &Point) -> f64 {
        match &self.chart {
            Chart::Flat => 0.0,
            Chart::Poincare { kappa } => -kappa * kappa,
            Chart::Polar(rad) => rad.gauss(p.norm()),
            Chart::Helicoid => -1.0 / (1.0 + p.x * p.x).powi(2),
            Chart::Catenoid => -1.0 / p.x.cosh().powi(4),
        }
    }

    /// Geodesic acceleration `−Γ(v, v)`.
    pub fn geodesic_accel(&self, p: &Point, v: &Vec2) -> Vec2 {
        match &self.chart {
            Chart::Flat => Vec2::zeros(),
            Chart::Poincare { kappa } => {
                let k2 = kappa * kappa;
                let grad_sigma = p * (2.0 * k2 / (1.0 - k2 * p.norm_squared()));
                conformal_accel(&grad_sigma, v)
            }
            Chart::Catenoid => conformal_accel(&Vec2::new(p.x.tanh(), 0.0), v),
            Chart::Helicoid => {
                let u = p.x;
                Vec2::new(u * v.y * v.y, -2.0 * u / (1.0 + u * u) * v.x * v.y)
            }
            Chart::Polar(rad) => {
                let r = p.norm();
                if r < 1e-9 {
                    return Vec2::zeros();
                }
                let rh = p / r;
                let perp = Vec2::new(-rh.y, rh.x);
                let vr = v.dot(&rh);
                let vp = v.dot(&perp);
                let phi = rad.phi(r);
                let dphi = rad.dphi(r);
                let a = (phi * dphi - r) / (r * r);
                let mut acc = rh * (a * vp * vp);
                if vp != 0.0 && phi > 1e-300 {
                    let b = 2.0 * (phi - r * dphi) / (r * phi);
                    acc += perp * (b * vr * vp);
                }
                acc
            }
        }
    }

    /// Metric norm of a tangent vector.
    pub fn norm(&self, p: &Point, v: &Vec2) -> f64 {
        (v.dot(&(self.metric(p) * v))).max(0.0).sqrt()
    }

    /// Raise an index: the vector dual to a covector.
    pub fn sharp(&self, p: &Point, w: &Vec2) -> Vec2 {
        match &self.chart {
            Chart::Flat => *w,
            _ => self.metric(p).try_inverse().map(|gi| gi * w).unwrap_or_else(Vec2::zeros),
        }
    }

    /// Rotate a tangent vector by +90° in the metric (`J_g v`).
    pub fn rotate_quarter(&self, p: &Point, v: &Vec2) -> Vec2 {
        let rot = Vec2::new(-v.y, v.x);
        match &self.chart {
            Chart::Flat => rot,
            _ => {
                let g = self.metric(p);
                let det = g.determinant();
                g.try_inverse().map(|gi| gi * rot * det.sqrt()).unwrap_or_else(Vec2::zeros)
            }
        }
    }

    /// Signed metric angle from `a` to `b` at `p`, positive counterclockwise.
    pub fn signed_angle(&self, p: &Point, a: &Vec2, b: &Vec2) -> f64 {
        let g = self.metric(p);
        let cross = g.determinant().sqrt() * (a.x * b.y - a.y * b.x);
        let dot = a.dot(&(g * b));
        cross.atan2(dot)
    }

    fn steps_for(&self, p: &Point, v: &Vec2) -> usize {
        let len = self.norm(p, v);
        ((len / self.params.step).ceil() as usize).max(1)
    }

    /// Exponential map by RK4 integration of the geodesic equation.
    pub fn exp_map(&self, p: &Point, v: &Vec2) -> Result<Point> {
        let n = self.steps_for(p, v);
        Ok(self.integrate(p, v, n)?.0)
    }

    /// Same as [`Self::exp_map`] with an explicit number of RK4 steps; also
    /// returns the final velocity.
    pub fn integrate(&self, p: &Point, v: &Vec2, steps: usize) -> Result<(Point, Vec2)> {
        self.check_point(p)?;
        if self.chart == Chart::Flat {
            return Ok((p + v, *v));
        }
        let h = 1.0 / steps as f64;
        let (mut x, mut u) = (*p, *v);
        for _ in 0..steps {
            let k1x = u;
            let k1v = self.geodesic_accel(&x, &u);
            let x2 = x + k1x * (0.5 * h);
            let u2 = u + k1v * (0.5 * h);
            let k2v = self.geodesic_accel(&x2, &u2);
            let x3 = x + u2 * (0.5 * h);
            let u3 = u + k2v * (0.5 * h);
            let k3v = self.geodesic_accel(&x3, &u3);
            let x4 = x + u3 * h;
            let u4 = u + k3v * h;
            let k4v = self.geodesic_accel(&x4, &u4);
            x += (k1x + u2 * 2.0 + u3 * 2.0 + u4) * (h / 6.0);
            u += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
            self.check_point(&x)?;
            if !(u.x.is_finite() && u.y.is_finite()) {
                return Err(Error::OutOfChart("geodesic velocity blew up".into()));
            }
        }
        Ok((x, u))
    }

    /// Solve the geodesic two-point problem `exp_p(v) = q` by Newton
    /// shooting. Returns the initial and final velocities.
    pub fn log_map(&self, p: &Point, q: &Point) -> Result<(Vec2, Vec2)> {
        self.check_point(p)?;
        self.check_point(q)?;
        let delta = q - p;
        if delta.norm() == 0.0 {
            return Ok((Vec2::zeros(), Vec2::zeros()));
        }
        let mid = p + delta * 0.5;
        let mut v = delta - self.geodesic_accel(&mid, &delta) * 0.5;
        let steps = self.steps_for(p, &v).max(4);
        let tol = 1e-13 * (1.0 + q.norm());
        let (mut end, mut vend) = self.integrate(p, &v, steps)?;
        let mut res = end - q;
        for _ in 0..60 {
            if res.norm() <= tol {
                return Ok((v, vend));
            }
            let eps = 1e-7 * v.norm().max(1e-3);
            let mut jac = Matrix2::zeros();
            for k in 0..2 {
                let mut vk = v;
                vk[k] += eps;
                let (ek, _) = self.integrate(p, &vk, steps)?;
                jac.set_column(k, &((ek - end) / eps));
            }
            let step = jac.try_inverse().map(|ji| -(ji * res)).ok_or_else(|| Error::NoConvergence("singular shooting Jacobian".into()))?;
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let trial = v + step * lambda;
                if let Ok((e, ve)) = self.integrate(p, &trial, steps) {
                    let r = e - q;
                    if r.norm() < res.norm() {
                        v = trial;
                        end = e;
                        vend = ve;
                        res = r;
                        improved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if res.norm() <= 1e3 * tol {
            return Ok((v, vend));
        }
        Err(Error::NoConvergence(format!("geodesic shooting from ({}, {}) to ({}, {}): residual {:e}", p.x, p.y, q.x, q.y, res.norm())))
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        Ok(self.geodesic(p, q)?.length)
    }

    /// Geodesic distance with gradients and end tangents.
    pub fn geodesic(&self, p: &Point, q: &Point) -> Result<EdgeGeometry> {
        self.check_point(p)?;
        self.check_point(q)?;
        match &self.chart {
            Chart::Flat => Ok(flat_edge(p, q)),
            Chart::Poincare { kappa } => {
                let (d, gq) = poincare_distance(*kappa, p, q);
                let (_, gp) = poincare_distance(*kappa, q, p);
                Ok(self.edge_from_gradients(p, q, d, gp, gq))
            }
            Chart::Polar(Radial::Sine { kappa }) => {
                let (d, gq) = sphere_distance(*kappa, p, q);
                let (_, gp) = sphere_distance(*kappa, q, p);
                Ok(self.edge_from_gradients(p, q, d, gp, gq))
            }
            Chart::Polar(_) if p.norm() == 0.0 || q.norm() == 0.0 => {
                // Radial lines from the apex are geodesics.
                let d = (q - p).norm();
                if d == 0.0 {
                    return Ok(zero_edge());
                }
                let dir = (q - p) / d;
                Ok(EdgeGeometry { length: d, grad_p: -dir, grad_q: dir, tangent_start: dir, tangent_end: dir })
            }
            _ => self.shooting_edge(p, q),
        }
    }

    fn edge_from_gradients(&self, p: &Point, q: &Point, d: f64, gp: Vec2, gq: Vec2) -> EdgeGeometry {
        EdgeGeometry { length: d, grad_p: gp, grad_q: gq, tangent_start: -self.sharp(p, &gp), tangent_end: self.sharp(q, &gq) }
    }

    fn shooting_edge(&self, p: &Point, q: &Point) -> Result<EdgeGeometry> {
        let (v0, v1) = self.log_map(p, q)?;
        let n0 = self.norm(p, &v0);
        if n0 == 0.0 {
            return Ok(zero_edge());
        }
        let n1 = self.norm(q, &v1);
        let t0 = v0 / n0;
        let t1 = v1 / n1;
        Ok(EdgeGeometry { length: n0, grad_p: -(self.metric(p) * t0), grad_q: self.metric(q) * t1, tangent_start: t0, tangent_end: t1 })
    }

    /// Metric length of the chart-straight segment, by 8-point Gauss
    /// quadrature, with its exact gradient. Tangents carry the midpoint
    /// Christoffel correction so that turning angles are geodesic.
    pub fn chord(&self, p: &Point, q: &Point) -> EdgeGeometry {
        let d = q - p;
        let mut length = 0.0;
        let mut gp = Vec2::zeros();
        let mut gq = Vec2::zeros();
        for &(s, w) in GAUSS8.iter() {
            let x = p + d * s;
            let g = self.metric(&x);
            let dg = self.metric_partials(&x);
            let gd = g * d;
            let f = d.dot(&gd);
            if f <= 0.0 {
                continue;
            }
            let sf = f.sqrt();
            length += w * sf;
            let quad = Vec2::new(d.dot(&(dg[0] * d)), d.dot(&(dg[1] * d)));
            gq += (gd * 2.0 + quad * s) * (w / (2.0 * sf));
            gp += (gd * -2.0 + quad * (1.0 - s)) * (w / (2.0 * sf));
        }
        let mid = p + d * 0.5;
        let acc = self.geodesic_accel(&mid, &d);
        let ts = d - acc * 0.5;
        let te = d + acc * 0.5;
        let (ns, ne) = (self.norm(p, &ts), self.norm(q, &te));
        EdgeGeometry {
            length,
            grad_p: gp,
            grad_q: gq,
            tangent_start: if ns > 0.0 { ts / ns } else { ts },
            tangent_end: if ne > 0.0 { te / ne } else { te },
        }
    }

    /// Boundary edge used by perimeter computations: closed-form geodesic
    /// where available, chord quadrature for short edges, shooting otherwise.
    pub fn boundary_edge(&self, p: &Point, q: &Point) -> Result<EdgeGeometry> {
        if self.has_closed_form_distance() {
            return self.geodesic(p, q);
        }
        self.check_point(p)?;
        self.check_point(q)?;
        let c = self.chord(p, q);
        if c.length < self.params.chart_resolution {
            Ok(c)
        } else {
            self.shooting_edge(p, q)
        }
    }

    /// Position in 3-space for backends with a natural embedding.
    pub fn embed(&self, p: &Point) -> Option<Vector3<f64>> {
        match &self.chart {
            Chart::Flat => Some(Vector3::new(p.x, p.y, 0.0)),
            Chart::Polar(Radial::Sine { kappa }) => Some(sphere_unit(*kappa, p) / *kappa),
            Chart::Helicoid => Some(Vector3::new(p.x * p.y.cos(), p.x * p.y.sin(), p.y)),
            Chart::Catenoid => {
                let c = p.x.cosh();
                Some(Vector3::new(c * p.y.cos(), c * p.y.sin(), p.x))
            }
            _ => None,
        }
    }

    /// Inverse of [`Self::embed`] for the sphere chart.
    pub fn sphere_chart_point(&self, x: &Vector3<f64>) -> Option<Point> {
        match &self.chart {
            Chart::Polar(Radial::Sine { kappa }) => {
                let u = x.normalize();
                let rho = (u.x * u.x + u.y * u.y).sqrt();
                let r = rho.atan2(u.z) / kappa;
                if rho == 0.0 {
                    return Some(Point::new(r, 0.0));
                }
                Some(Point::new(u.x / rho * r, u.y / rho * r))
            }
            _ => None,
        }
    }

    /// Geodesic curvature of the boundary of a ball of radius `r` centered
    /// at the origin of the chart (any center on homogeneous backends).
    pub fn circle_curvature(&self, r: f64) -> Option<f64> {
        match &self.chart {
            Chart::Flat => Some(1.0 / r),
            Chart::Poincare { kappa } => Some(kappa / (kappa * r).tanh()),
            Chart::Polar(rad) => Some(rad.dphi(r) / rad.phi(r)),
            _ => None,
        }
    }

    /// Volume and perimeter of the geodesic ball `B_r(center)`.
    pub fn ball_measures(&self, center: &Point, r: f64) -> Result<BallMeasures> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {r}")));
        }
        self.check_point(center)?;
        let closed =
            |volume: f64, perimeter: f64| BallMeasures { radius: r, volume, perimeter, excess: r * perimeter / (2.0 * volume) - 1.0 };
        match &self.chart {
            Chart::Flat => {
                Ok(BallMeasures { radius: r, volume: std::f64::consts::PI * r * r, perimeter: 2.0 * std::f64::consts::PI * r, excess: 0.0 })
            }
            Chart::Poincare { kappa } => {
                let kr = kappa * r;
                let s = (0.5 * kr).sinh();
                let volume = 2.0 * std::f64::consts::PI * 2.0 * s * s / (kappa * kappa);
                Ok(closed(volume, 2.0 * std::f64::consts::PI * kr.sinh() / kappa))
            }
            Chart::Polar(Radial::Sine { kappa }) => {
                if kappa * r > std::f64::consts::PI {
                    return Err(Error::OutOfChart(format!("ball radius {r} exceeds the sphere's diameter")));
                }
                let rad = Radial::Sine { kappa: *kappa };
                Ok(closed(2.0 * std::f64::consts::PI * rad.integral(r), 2.0 * std::f64::consts::PI * rad.phi(r)))
            }
            Chart::Polar(rad) if center.norm() == 0.0 => {
                if let ChartDomain::ClosedDisk { radius } = self.domain {
                    if r > radius {
                        return Err(Error::OutOfChart(format!("ball radius {r} exceeds the tabulated profile")));
                    }
                }
                Ok(closed(2.0 * std::f64::consts::PI * rad.integral(r), 2.0 * std::f64::consts::PI * rad.phi(r)))
            }
            _ => fan::fan_measures(self, center, r),
        }
    }

    /// Radius of the geodesic ball about `center` with volume `volume`.
    pub fn ball_with_volume(&self, center: &Point, volume: f64) -> Result<BallMeasures> {
        if !(volume > 0.0) {
            return Err(Error::InvalidInput(format!("volume must be positive, got {volume}")));
        }
        let guess = (volume / std::f64::consts::PI).sqrt();
        let r = increasing_root(
            |r| {
                if r <= 0.0 {
                    return Ok(-volume);
                }
                Ok(self.ball_measures(center, r)?.volume - volume)
            },
            0.0,
            guess,
            1e-14,
        )
        .map_err(|e| match e {
            Error::RootFindFailed(m) => Error::RootFindFailed(m),
            other => Error::RootFindFailed(other.to_string()),
        })?;
        self.ball_measures(center, r)
    }

    /// Curvature sign observed on a sample grid of the chart.
    pub fn sampled_curvature_sign(&self) -> CurvatureSign {
        let samples: Vec<f64> = match &self.chart {
            Chart::Flat => vec![0.0],
            Chart::Poincare { kappa } => vec![-kappa * kappa],
            Chart::Polar(rad) => {
                let rmax = match self.domain {
                    ChartDomain::ClosedDisk { radius } | ChartDomain::OpenDisk { radius } => radius,
                    ChartDomain::Plane => 20.0,
                };
                (0..=2000).map(|i| rad.gauss(rmax * i as f64 / 2000.0)).collect()
            }
            Chart::Helicoid | Chart::Catenoid => {
                (0..=2000).map(|i| self.gauss_curvature(&Point::new(-20.0 + 0.02 * i as f64, 0.0))).collect()
            }
        };
        let tol = 1e-13;
        let pos = samples.iter().any(|&k| k > tol);
        let neg = samples.iter().any(|&k| k < -tol);
        match (pos, neg) {
            (false, false) => CurvatureSign::Flat,
            (true, false) => CurvatureSign::NonNegative,
            (false, true) => CurvatureSign::NonPositive,
            (true, true) => CurvatureSign::Mixed,
        }
    }

    /// Whether the declared curvature sign agrees with sampling.
    pub fn validate_curvature_sign(&self) -> bool {
        let s = self.sampled_curvature_sign();
        match self.sign {
            CurvatureSign::Flat => s == CurvatureSign::Flat,
            CurvatureSign::NonNegative => s.allows_nonnegative(),
            CurvatureSign::NonPositive => s.allows_nonpositive(),
            CurvatureSign::Mixed => true,
        }
    }

    /// Rotation of the chart about its origin. This is an isometry of every
    /// rotationally symmetric backend.
    pub fn rotate_about_origin(&self, p: &Point, angle: f64) -> Option<Point> {
        match &self.chart {
            Chart::Flat | Chart::Poincare { .. } | Chart::Polar(_) => {
                let (s, c) = angle.sin_cos();
                Some(Point::new(c * p.x - s * p.y, s * p.x + c * p.y))
            }
            _ => None,
        }
    }
}

fn zero_edge() -> EdgeGeometry {
    EdgeGeometry { length: 0.0, grad_p: Vec2::zeros(), grad_q: Vec2::zeros(), tangent_start: Vec2::zeros(), tangent_end: Vec2::zeros() }
}

fn flat_edge(p: &Point, q: &Point) -> EdgeGeometry {
    let d = q - p;
    let n = d.norm();
    if n == 0.0 {
        return zero_edge();
    }
    let t = d / n;
    EdgeGeometry { length: n, grad_p: -t, grad_q: t, tangent_start: t, tangent_end: t }
}

/// `−Γ(v, v)` for the conformal metric `e^{2σ} I`.
fn conformal_accel(grad_sigma: &Vec2, v: &Vec2) -> Vec2 {
    grad_sigma * v.norm_squared() - v * (2.0 * grad_sigma.dot(v))
}

/// Poincaré-disk distance and its gradient in `q`.
fn poincare_distance(kappa: f64, p: &Point, q: &Point) -> (f64, Vec2) {
    let y1 = p * kappa;
    let y2 = q * kappa;
    let delta = y2 - y1;
    let dn = delta.norm();
    if dn == 0.0 {
        return (0.0, Vec2::zeros());
    }
    let a = 1.0 - y1.norm_squared();
    let b = 1.0 - y2.norm_squared();
    let s = dn / (a * b).sqrt();
    let d = 2.0 * s.asinh() / kappa;
    let grad = (delta / (dn * dn) + y2 / b) * (2.0 * s / (1.0 + s * s).sqrt());
    (d, grad)
}

/// Unit-sphere embedding of the polar chart point.
fn sphere_unit(kappa: f64, p: &Point) -> Vector3<f64> {
    let r = p.norm();
    let kr = kappa * r;
    let s = if kr < 1e-8 { kappa * (1.0 - kr * kr / 6.0) } else { kr.sin() / r };
    Vector3::new(s * p.x, s * p.y, kr.cos())
}

/// Jacobian of [`sphere_unit`].
fn sphere_jacobian(kappa: f64, p: &Point) -> nalgebra::Matrix3x2<f64> {
    let r = p.norm();
    let kr = kappa * r;
    let (s, t) = if kr < 1e-3 {
        let k2 = kr * kr;
        (kappa * (1.0 - k2 / 6.0 + k2 * k2 / 120.0), kappa.powi(3) * (-1.0 / 3.0 + k2 / 30.0 - k2 * k2 / 840.0))
    } else {
        (kr.sin() / r, (kr * kr.cos() - kr.sin()) / r.powi(3))
    };
    let top = Matrix2::identity() * s + (p * p.transpose()) * t;
    let bottom = p * (-kappa * s);
    nalgebra::Matrix3x2::new(top[(0, 0)], top[(0, 1)], top[(1, 0)], top[(1, 1)], bottom.x, bottom.y)
}

/// Great-circle distance and its gradient in `q`.
fn sphere_distance(kappa: f64, p: &Point, q: &Point) -> (f64, Vec2) {
    let u1 = sphere_unit(kappa, p);
    let u2 = sphere_unit(kappa, q);
    let cross = u1.cross(&u2).norm();
    let angle = cross.atan2(u1.dot(&u2));
    let diff = u1 - u2;
    let w = diff - u2 * diff.dot(&u2);
    let wn = w.norm();
    if wn == 0.0 || cross == 0.0 {
        return (angle / kappa, Vec2::zeros());
    }
    let t = -w / wn;
    let grad = sphere_jacobian(kappa, q).transpose() * t / kappa;
    (angle / kappa, grad)
}

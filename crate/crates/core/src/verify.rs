//! Numerical checks of `rad·P` against `2V` and the reports they emit.
//!
//! Every check measures `V`, `P` and `rad` on a discrete region or metric
//! ball, forms the ratio `rad·P/(2V)`, and compares it with the bound that
//! holds on that kind of surface: at least one on Cartan-Hadamard surfaces
//! (the plane included), at most one for metric balls under non-negative
//! curvature, exactly one in the flat rigidity cases.
//!
//! A margin counts as strict only if it exceeds three times the change of
//! the ratio under vertex doubling; discrete measurements can bound an
//! exact rigidity statement but never reproduce it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BackendKind, CurvatureSign, EmbeddedKind, ManifoldBackend, Point, Vec2};
use crate::meb;
use crate::numeric::adaptive_simpson;
use crate::obstacle::{self, GraphChart, OperatorModel, SolverParams};
use crate::region::Region;
use crate::shapeopt::{self, CurvatureBoundReport, ShapeParams, ShapeState, Termination};

/// Multiple of the refinement delta a margin must exceed to count as strict.
pub const STRICTNESS_FACTOR: f64 = 3.0;

/// Which side of 1 the ratio `rad·P/(2V)` must lie on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtLeastOne,
    AtMostOne,
    EqualsOne,
}

impl Bound {
    /// Distance from violating the bound; negative when violated.
    pub fn margin(self, ratio: f64) -> f64 {
        match self {
            Bound::AtLeastOne => ratio - 1.0,
            Bound::AtMostOne => 1.0 - ratio,
            Bound::EqualsOne => -(ratio - 1.0).abs(),
        }
    }
}

/// The measured quantities of one region or ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(rename = "P")]
    pub perimeter: f64,
    pub rad: f64,
    pub ratio: f64,
}

/// Measure a discrete region: chart-quadrature volume, geodesic polygon
/// length and the minimal enclosing ball.
pub fn measure_region(region: &Region) -> Result<Measured> {
    let volume = region.volume()?;
    let perimeter = region.perimeter()?;
    let rad = meb::rad(region)?.radius;
    Ok(Measured { volume, perimeter, rad, ratio: rad * perimeter / (2.0 * volume) })
}

/// Measure the metric ball `B_r(center)` from the backend's ball measures.
pub fn measure_ball(m: &ManifoldBackend, center: &Point, r: f64) -> Result<Measured> {
    let b = m.ball_measures(center, r)?;
    Ok(Measured { volume: b.volume, perimeter: b.perimeter, rad: r, ratio: b.ratio() })
}

/// An independent value the measured ratio is compared against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparator {
    /// How the value was obtained.
    pub source: String,
    pub value: f64,
    pub rel_tol: f64,
    pub rel_error: f64,
    pub agrees: bool,
}

impl Comparator {
    pub fn new(source: impl Into<String>, value: f64, measured: f64, rel_tol: f64) -> Self {
        let rel_error = ((measured - value) / value).abs();
        Comparator { source: source.into(), value, rel_tol, rel_error, agrees: rel_error <= rel_tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub id: String,
    /// The statement being checked, in words.
    pub claim: String,
    pub backend: String,
    #[serde(flatten)]
    pub measured: Measured,
    pub bound: Bound,
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
    /// `|ratio(2N) − ratio(N)|` when a refined region was measured.
    pub refinement_delta: Option<f64>,
    /// `margin > 3·refinement_delta`, for inequality bounds.
    pub strict: Option<bool>,
    /// Whether a failed strictness test fails the report.
    pub require_strict: bool,
    /// Ratio within `tol` of 1.
    pub equality: bool,
    pub comparator: Option<Comparator>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(id: impl Into<String>, backend: &ManifoldBackend, measured: Measured, bound: Bound, tol: f64) -> Self {
        let mut r = VerificationReport {
            id: id.into(),
            claim: String::new(),
            backend: backend.label(),
            measured,
            bound,
            margin: bound.margin(measured.ratio),
            tol,
            pass: false,
            refinement_delta: None,
            strict: None,
            require_strict: false,
            equality: (measured.ratio - 1.0).abs() <= tol,
            comparator: None,
            notes: Vec::new(),
        };
        r.settle();
        r
    }

    pub fn with_claim(mut self, claim: impl Into<String>) -> Self {
        self.claim = claim.into();
        self
    }

    /// Record the ratio measured on the refined region.
    pub fn with_refinement(mut self, refined_ratio: f64, require_strict: bool) -> Self {
        let delta = (refined_ratio - self.measured.ratio).abs();
        self.refinement_delta = Some(delta);
        if self.bound != Bound::EqualsOne {
            self.strict = Some(self.margin > STRICTNESS_FACTOR * delta);
        }
        self.require_strict = require_strict;
        self.settle();
        self
    }

    pub fn with_comparator(mut self, c: Comparator) -> Self {
        self.comparator = Some(c);
        self.settle();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    fn settle(&mut self) {
        let bound_ok = self.margin >= -self.tol;
        let strict_ok = !self.require_strict || self.strict.unwrap_or(true);
        let comparator_ok = self.comparator.as_ref().is_none_or(|c| c.agrees);
        self.pass = bound_ok && strict_ok && comparator_ok;
    }
}

/// Perimeter of the ellipse with semi-axes `a`, `b` by the arithmetic-geometric
/// mean form of the complete elliptic integral of the second kind.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    let (mut x, mut y) = (1.0, b / a);
    let mut c = (1.0 - y * y).sqrt();
    let (mut sum, mut pow) = (0.5 * c * c, 0.5);
    while c > 1e-16 {
        let (nx, ny) = (0.5 * (x + y), (x * y).sqrt());
        c = 0.5 * (x - y);
        x = nx;
        y = ny;
        pow *= 2.0;
        sum += pow * c * c;
    }
    4.0 * a * std::f64::consts::PI / (2.0 * x) * (1.0 - sum)
}

/// Closed-form `r·P(B_r)/(2V(B_r))` for balls about the apex (or any center
/// on homogeneous backends), with a description of the formula.
pub fn ball_ratio_closed_form(m: &ManifoldBackend, center: &Point, r: f64) -> Option<(String, f64)> {
    match m.kind() {
        BackendKind::EuclideanPlane => Some(("flat disk: rP = 2V".into(), 1.0)),
        BackendKind::HyperbolicPlane { curvature } => {
            let k = (-curvature).sqrt();
            let kr = k * r;
            Some(("kr sinh(kr) / (2(cosh(kr) - 1))".into(), kr * kr.sinh() / (2.0 * (kr.cosh() - 1.0))))
        }
        BackendKind::Sphere { curvature } => {
            let k = curvature.sqrt();
            let kr = k * r;
            Some(("kr sin(kr) / (2(1 - cos(kr)))".into(), kr * kr.sin() / (2.0 * (1.0 - kr.cos()))))
        }
        BackendKind::WarpedSurface(w) if center.norm() == 0.0 => {
            let integral = adaptive_simpson(&|s| w.phi(s), 0.0, r, 1e-13);
            Some(("r phi(r) / (2 int_0^r phi), adaptive Simpson".into(), r * w.phi(r) / (2.0 * integral)))
        }
        _ => None,
    }
}

/// Regions the checks can be run on, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// Polygon inscribed in the geodesic circle.
    Ball { center: [f64; 2], radius: f64 },
    /// Chart ellipse with semi-axes `a` (along x) and `b`.
    Ellipse { center: [f64; 2], a: f64, b: f64 },
    /// Chart square with side `side`, edges subdivided evenly.
    Square { center: [f64; 2], side: f64 },
    /// Fixed chart vertices, counterclockwise. Refinement inserts midpoints.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Geodesic star `r(θ) = radius·(1 + Σ a_k cos(kθ + φ_k))` with random
    /// coefficients, `Σ|a_k| ≤ amplitude`.
    Star { center: [f64; 2], radius: f64, amplitude: f64, modes: usize, seed: u64 },
}

impl ShapeSpec {
    /// Discretize with (about) `n` boundary vertices.
    pub fn build(&self, m: Arc<ManifoldBackend>, n: usize) -> Result<Region> {
        match self {
            ShapeSpec::Ball { center, radius } => Region::geodesic_ball(m, pt(center), *radius, n),
            ShapeSpec::Ellipse { center, a, b } => Region::ellipse(m, n, pt(center), *a, *b),
            ShapeSpec::Square { center, side } => {
                let per_side = (n / 4).max(2);
                let c = pt(center);
                let h = 0.5 * side;
                let corners = [Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)];
                let mut pts = Vec::with_capacity(4 * per_side);
                for k in 0..4 {
                    let (p, q) = (corners[k], corners[(k + 1) % 4]);
                    for j in 0..per_side {
                        pts.push(c + p + (q - p) * (j as f64 / per_side as f64));
                    }
                }
                Region::new(m, pts)
            }
            ShapeSpec::Polygon { vertices } => {
                let pts: Vec<Point> = vertices.iter().map(pt).collect();
                let mut refined = pts.clone();
                while refined.len() < n {
                    refined = insert_midpoints(&refined);
                }
                Region::new(m, if n > pts.len() { refined } else { pts })
            }
            ShapeSpec::Star { center, radius, amplitude, modes, seed } => {
                let coeffs = star_coefficients(*amplitude, *modes, *seed);
                Region::geodesic_star(m, pt(center), n, |t| *radius * star_factor(&coeffs, t))
            }
        }
    }

    /// Closed-form ratio of the smooth shape, where one is known.
    pub fn closed_form_ratio(&self, m: &ManifoldBackend) -> Option<(String, f64)> {
        match self {
            ShapeSpec::Ball { center, radius } => ball_ratio_closed_form(m, &pt(center), *radius),
            ShapeSpec::Ellipse { a, b, .. } if m.is_flat() => {
                let ratio = a.max(*b) * ellipse_perimeter(*a, *b) / (2.0 * std::f64::consts::PI * a * b);
                Some(("max(a,b) * elliptic-integral perimeter / (2 pi a b)".into(), ratio))
            }
            ShapeSpec::Square { .. } if m.is_flat() => Some(("square: sqrt(2)".into(), std::f64::consts::SQRT_2)),
            _ => None,
        }
    }
}

fn pt(c: &[f64; 2]) -> Point {
    Point::new(c[0], c[1])
}

fn insert_midpoints(v: &[Point]) -> Vec<Point> {
    let n = v.len();
    (0..n).flat_map(|i| [v[i], (v[i] + v[(i + 1) % n]) * 0.5]).collect()
}

fn star_coefficients(amplitude: f64, modes: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<(f64, f64)> =
        (1..=modes).map(|k| (rng.gen_range(-1.0..1.0) / k as f64, rng.gen_range(0.0..std::f64::consts::TAU))).collect();
    let total: f64 = raw.iter().map(|(a, _)| a.abs()).sum();
    let scale = if total > 0.0 { amplitude / total } else { 0.0 };
    raw.into_iter().map(|(a, phase)| (a * scale, phase)).collect()
}

fn star_factor(coeffs: &[(f64, f64)], theta: f64) -> f64 {
    1.0 + coeffs.iter().enumerate().map(|(k, (a, phase))| a * ((k + 1) as f64 * theta + phase).cos()).sum::<f64>()
}

/// Random star-shaped chart polygon about `center`: `n` angles jittered
/// within their sectors, radii uniform in `[0.3, 1]·radius`. Simple by
/// construction.
pub fn random_star_polygon(m: Arc<ManifoldBackend>, n: usize, center: Point, radius: f64, rng: &mut impl Rng) -> Result<Region> {
    let sector = std::f64::consts::TAU / n as f64;
    let pts = (0..n)
        .map(|k| {
            let t = sector * (k as f64 + rng.gen_range(0.05..0.95));
            let r = radius * rng.gen_range(0.3..1.0);
            center + Vec2::new(t.cos(), t.sin()) * r
        })
        .collect();
    Region::new(m, pts)
}

/// `n·V ≤ rad·P` on the plane; equality flagged for disks.
pub fn check_euclidean(region: &Region, tol: f64) -> Result<VerificationReport> {
    let m = region.backend();
    if !m.is_flat() {
        return Err(Error::WrongBackend(format!("{} is not flat", m.label())));
    }
    let r = VerificationReport::new("euclidean", m, measure_region(region)?, Bound::AtLeastOne, tol)
        .with_claim("2V <= rad P for every planar region, equality only for disks");
    Ok(r)
}

/// `n·V ≤ rad·P` on a Cartan-Hadamard surface. With a refined copy of the
/// region, strictness beyond discretization error is required on backends
/// that are not flat.
pub fn check_ch(region: &Region, refined: Option<&Region>, tol: f64) -> Result<VerificationReport> {
    let m = region.backend();
    if !m.curvature_sign().allows_nonpositive() {
        return Err(Error::WrongBackend(format!("{} has positive curvature somewhere", m.label())));
    }
    if matches!(m.kind(), BackendKind::EmbeddedSurface(EmbeddedKind::Catenoid)) {
        return Err(Error::WrongBackend("the catenoid is not simply connected".into()));
    }
    let mut r = VerificationReport::new("cartan_hadamard", m, measure_region(region)?, Bound::AtLeastOne, tol)
        .with_claim("2V <= rad P on a Cartan-Hadamard surface, strict unless flat");
    if let Some(f) = refined {
        r = r.with_refinement(measure_region(f)?.ratio, !m.is_flat());
    }
    Ok(r)
}

/// `r·P(B_r) ≤ n·V(B_r)` for metric balls under non-negative curvature;
/// equality on flat backends.
pub fn check_ricci_ball(m: &ManifoldBackend, center: &Point, r: f64, tol: f64) -> Result<VerificationReport> {
    if !m.curvature_sign().allows_nonnegative() {
        return Err(Error::WrongBackend(format!("{} has negative curvature somewhere", m.label())));
    }
    let bound = if m.is_flat() { Bound::EqualsOne } else { Bound::AtMostOne };
    Ok(VerificationReport::new("ricci_ball", m, measure_ball(m, center, r)?, bound, tol)
        .with_claim("r P(B_r) <= 2V(B_r) under non-negative curvature, equality only for flat balls"))
}

/// Summary of a batch of checks on random regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub id: String,
    pub backend: String,
    pub count: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub failures: usize,
    pub pass: bool,
    pub reports: Vec<VerificationReport>,
}

impl BatchReport {
    fn from_reports(id: &str, m: &ManifoldBackend, reports: Vec<VerificationReport>) -> Self {
        let ratios = reports.iter().map(|r| r.measured.ratio);
        let min_ratio = ratios.clone().fold(f64::INFINITY, f64::min);
        let max_ratio = ratios.fold(f64::NEG_INFINITY, f64::max);
        let failures = reports.iter().filter(|r| !r.pass).count();
        BatchReport {
            id: id.into(),
            backend: m.label(),
            count: reports.len(),
            min_ratio,
            max_ratio,
            failures,
            pass: failures == 0,
            reports,
        }
    }
}

/// `count` random regions about `center`. On the plane: random star
/// polygons with `vertices` corners, checked with tolerance `tol·ratio`.
/// Under non-positive curvature: smooth random geodesic stars with
/// `vertices` vertices. Under non-negative curvature no bound holds for
/// general regions, so each star's volume-matched metric ball about its
/// enclosing center is checked instead and the region's own ratio is kept
/// as a note.
pub fn random_regions(
    m: Arc<ManifoldBackend>,
    count: usize,
    vertices: usize,
    center: Point,
    radius: f64,
    tol: f64,
    seed: u64,
) -> Result<BatchReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(count);
    for i in 0..count {
        let report = if m.is_flat() {
            let region = random_star_polygon(m.clone(), vertices, center, radius, &mut rng)?;
            let measured = measure_region(&region)?;
            let r = check_euclidean(&region, tol * measured.ratio)?;
            VerificationReport { id: format!("random_polygon_{i}"), ..r }
        } else {
            let spec = ShapeSpec::Star {
                center: [center.x, center.y],
                radius: radius * rng.gen_range(0.5..1.0),
                amplitude: rng.gen_range(0.1..0.6),
                modes: rng.gen_range(2..=6),
                seed: rng.gen(),
            };
            let region = spec.build(m.clone(), vertices)?;
            if m.curvature_sign().allows_nonpositive() {
                VerificationReport { id: format!("random_star_{i}"), ..check_ch(&region, None, tol)? }
            } else if m.curvature_sign().allows_nonnegative() {
                let own = measure_region(&region)?;
                let c = meb::rad(&region)?.center;
                let ball = m.ball_with_volume(&c, own.volume)?;
                let r = check_ricci_ball(&m, &c, ball.radius, tol)?;
                VerificationReport { id: format!("random_star_ball_{i}"), ..r }.with_note(format!(
                    "region ratio {:.9}, matched ball ratio {:.9}",
                    own.ratio,
                    ball.ratio()
                ))
            } else {
                return Err(Error::WrongBackend(format!("{} has curvature of both signs", m.label())));
            }
        };
        reports.push(report);
    }
    Ok(BatchReport::from_reports("random_regions", &m, reports))
}

/// What a scan of volume-`V` balls is expected to show.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanExpectation {
    /// Homogeneous backend: `f(d)` independent of `d`.
    Constant,
    /// `f(d) > 2V`, strictly decreasing, gap at the last center below
    /// `gap_tol`: the infimum `2V` is approached but not attained.
    DecreasingToTwoV,
    /// `f(0)` strictly below every far ball: attained at finite distance.
    ApexMinimum,
    /// `f(d) > 2V`, decreasing, on an embedded minimal surface.
    AboveTwoV,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub d: f64,
    pub center: [f64; 2],
    pub radius: f64,
    /// `rad·P` of the ball.
    pub f: f64,
    /// `f/(2V) − 1`.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCheck {
    pub name: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub id: String,
    pub backend: String,
    #[serde(rename = "V")]
    pub volume: f64,
    pub expectation: ScanExpectation,
    pub rows: Vec<ScanRow>,
    /// `f(d)/(2V) − 1` at the farthest center.
    pub last_gap: f64,
    pub tol: f64,
    pub checks: Vec<ScanCheck>,
    pub pass: bool,
}

impl ScanReport {
    /// Two-column `(d, f)` CSV.
    pub fn plot_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["d", "f"]).map_err(crate::region::csv_err)?;
        for r in &self.rows {
            w.write_record([r.d.to_string(), r.f.to_string()]).map_err(crate::region::csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Expected scan behaviour for a backend.
pub fn scan_expectation(m: &ManifoldBackend) -> ScanExpectation {
    match (m.kind(), m.curvature_sign()) {
        (_, CurvatureSign::Flat) => ScanExpectation::Constant,
        (BackendKind::HyperbolicPlane { .. } | BackendKind::Sphere { .. }, _) => ScanExpectation::Constant,
        (BackendKind::EmbeddedSurface(_), _) => ScanExpectation::AboveTwoV,
        (_, CurvatureSign::NonNegative) => ScanExpectation::ApexMinimum,
        _ => ScanExpectation::DecreasingToTwoV,
    }
}

/// Center at distance `d` from the origin along the first chart axis.
fn center_at(m: &ManifoldBackend, d: f64) -> Result<Point> {
    if d == 0.0 {
        return Ok(Point::zeros());
    }
    let o = Point::zeros();
    let e = Vec2::new(1.0, 0.0);
    m.exp_map(&o, &(e * (d / m.norm(&o, &e))))
}

/// `f(d) = rad·P` of the volume-`V` metric ball centered at distance `d` from
/// the origin, for each `d` in `distances` (increasing). `tol` is the
/// relative tolerance of the `Constant` expectation and of the far-ball
/// comparison; `gap_tol` bounds the last gap for `DecreasingToTwoV`.
pub fn infimum_scan(m: &ManifoldBackend, volume: f64, distances: &[f64], tol: f64, gap_tol: f64) -> Result<ScanReport> {
    if distances.is_empty() || distances.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("scan distances must be non-empty and increasing".into()));
    }
    let mut rows = Vec::with_capacity(distances.len());
    for &d in distances {
        let c = center_at(m, d)?;
        let b = m.ball_with_volume(&c, volume)?;
        rows.push(ScanRow { d, center: [c.x, c.y], radius: b.radius, f: b.radius * b.perimeter, excess: b.excess });
    }
    let e: Vec<f64> = rows.iter().map(|r| r.excess).collect();
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    let above = e.iter().all(|&x| x > 0.0);
    let last_gap = *e.last().unwrap();
    let expectation = scan_expectation(m);
    let mut checks = Vec::new();
    let mut check = |name: &str, pass: bool| checks.push(ScanCheck { name: name.into(), pass });
    match expectation {
        ScanExpectation::Constant => {
            check("f(d) constant", e.iter().all(|x| (x - e[0]).abs() <= tol));
            match m.curvature_sign() {
                CurvatureSign::Flat => check("f(d) = 2V", e.iter().all(|x| x.abs() <= tol)),
                CurvatureSign::NonPositive => check("f(d) > 2V", above),
                _ => check("f(d) < 2V", e.iter().all(|&x| x < 0.0)),
            }
        }
        ScanExpectation::DecreasingToTwoV => {
            check("f(d) > 2V", above);
            check("f strictly decreasing", decreasing);
            check("last gap below gap_tol", last_gap < gap_tol);
        }
        ScanExpectation::ApexMinimum => {
            check("f(0) < 2V", e[0] < 0.0);
            check("apex beats every far ball", e[1..].iter().all(|&x| e[0] < x));
            check("2V <= f(d_max) + tol", last_gap >= -tol);
        }
        ScanExpectation::AboveTwoV => {
            check("f(d) > 2V", above);
            check("f decreasing", decreasing);
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ScanReport { id: "infimum_scan".into(), backend: m.label(), volume, expectation, rows, last_gap, tol, checks, pass })
}

/// Tolerances of [`constrained_run`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstrainedTolerances {
    /// Relative agreement of the perimeter with the oracle.
    pub perimeter_rel: f64,
    /// Variance of the discrete curvature off the contact set.
    pub curvature_variance: f64,
    /// Distance from the ball boundary counted as contact.
    pub contact: f64,
}

impl Default for ConstrainedTolerances {
    fn default() -> Self {
        ConstrainedTolerances { perimeter_rel: 2e-3, curvature_variance: 1e-3, contact: 1e-6 }
    }
}

/// Perimeter minimization inside a fixed closed ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstrainedRun {
    pub id: String,
    pub backend: String,
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(rename = "P")]
    pub perimeter: f64,
    pub ball_center: [f64; 2],
    pub ball_radius: f64,
    pub termination: Termination,
    pub iterations: usize,
    pub contact_vertices: usize,
    /// Fraction of the perimeter on edges with both ends in contact.
    pub contact_arc: f64,
    pub curvature: CurvatureBoundReport,
    pub comparator: Option<Comparator>,
    pub max_measured_c1: f64,
    pub projections_within_bound: bool,
    pub obstacle: Option<ObstacleHandOff>,
    pub tolerances: ConstrainedTolerances,
    pub notes: Vec<String>,
    pub pass: bool,
}

/// Minimize `P` at volume `volume` among regions inside the closed metric
/// ball `B(center, radius)`, starting from `init`.
///
/// The perimeter is compared with the volume-`V` metric ball on homogeneous
/// backends (a round disk fits inside `B` whenever `V < V(B)`, so it is the
/// constrained minimizer too). The curvature off the contact set must be
/// constant. If the minimizer touches `∂B` on a flat backend its boundary is
/// handed to the obstacle solver.
pub fn constrained_run(
    volume: f64,
    init: Region,
    center: Point,
    radius: f64,
    params: &ShapeParams,
    tols: ConstrainedTolerances,
) -> Result<ConstrainedRun> {
    let m = init.backend_arc().clone();
    let ball = m.ball_measures(&center, radius)?;
    if volume >= ball.volume {
        return Err(Error::InvalidInput(format!("volume {volume} does not fit in a ball of volume {}", ball.volume)));
    }
    let descent = shapeopt::minimize_in_ball(volume, init, center, radius, params)?;
    let s = &descent.state;
    let eta = m.circle_curvature(radius).unwrap_or(1.0 / radius);
    let curvature = shapeopt::curvature_bound_check(s, eta, f64::INFINITY, tols.contact)?;
    let (contact_vertices, contact_arc) = contact_arc(s, &center, radius, tols.contact)?;
    let perimeter = s.region.perimeter()?;
    let comparator = match m.kind() {
        BackendKind::EuclideanPlane | BackendKind::HyperbolicPlane { .. } | BackendKind::Sphere { .. } => {
            let disk = m.ball_with_volume(&center, volume)?;
            Some(Comparator::new("perimeter of the metric ball of volume V", disk.perimeter, perimeter, tols.perimeter_rel))
        }
        _ => None,
    };
    let mut notes = Vec::new();
    let obstacle = if contact_vertices == 0 {
        notes.push("no contact with the constraint ball; obstacle hand-off skipped".into());
        None
    } else if !m.is_flat() {
        notes.push("obstacle hand-off needs a flat chart; skipped".into());
        None
    } else {
        Some(obstacle_handoff_in(s, center, radius, &HandOffParams::default())?)
    };
    let curvature_ok = curvature.free_vertices == 0 || curvature.free_variance <= tols.curvature_variance;
    let pass = comparator.as_ref().is_none_or(|c| c.agrees)
        && curvature_ok
        && descent.projections_within_bound
        && obstacle.as_ref().is_none_or(|o| o.pass);
    Ok(ConstrainedRun {
        id: "constrained_run".into(),
        backend: m.label(),
        volume,
        perimeter,
        ball_center: [center.x, center.y],
        ball_radius: radius,
        termination: descent.termination,
        iterations: descent.trace.last().map_or(0, |r| r.iteration),
        contact_vertices,
        contact_arc,
        curvature,
        comparator,
        max_measured_c1: descent.max_measured_c1,
        projections_within_bound: descent.projections_within_bound,
        obstacle,
        tolerances: tols,
        notes,
        pass,
    })
}

fn contact_arc(s: &ShapeState, center: &Point, radius: f64, tol: f64) -> Result<(usize, f64)> {
    let m = s.region.backend();
    let v = s.region.vertices();
    let touching: Vec<bool> = v.iter().map(|p| Ok(m.distance(center, p)? >= radius - tol)).collect::<Result<_>>()?;
    let edges = s.region.edges()?;
    let on_arc: f64 = (0..v.len()).filter(|&i| touching[i] && touching[(i + 1) % v.len()]).map(|i| edges[i].length).sum();
    Ok((touching.iter().filter(|&&t| t).count(), on_arc / s.region.perimeter()?))
}

/// Settings of the obstacle hand-off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandOffParams {
    pub cells: usize,
    /// Half width of the graph window as a fraction of the ball radius.
    /// Slopes stay below the ellipticity threshold for fractions up to
    /// about 0.19.
    pub half_width_fraction: f64,
    /// Largest `|u_VI − u_shape|` relative to the ball radius.
    pub deviation_tol: f64,
    pub solver: SolverParams,
}

impl Default for HandOffParams {
    fn default() -> Self {
        HandOffParams { cells: 64, half_width_fraction: 0.15, deviation_tol: 1e-3, solver: SolverParams::default() }
    }
}

/// The boundary of a converged shape near the bottom of its enclosing
/// circle, re-solved as an obstacle problem with that circle as obstacle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObstacleHandOff {
    pub h0: f64,
    pub cells: usize,
    pub half_width: f64,
    /// `max |u_VI − u_shape|` over the grid.
    pub max_deviation: f64,
    pub contact_fraction: f64,
    pub complementarity_residual: f64,
    pub ellipticity_holds: bool,
    pub gradient_within_bound: bool,
    pub pass: bool,
}

/// Hand a converged flat-backend state to the obstacle solver, with its
/// own enclosing circle as obstacle.
pub fn obstacle_handoff(s: &ShapeState, params: &HandOffParams) -> Result<ObstacleHandOff> {
    if !s.region.backend().is_flat() {
        return Err(Error::WrongBackend("obstacle hand-off needs a flat chart".into()));
    }
    obstacle_handoff_in(s, s.ball.center, s.ball.radius, params)
}

fn obstacle_handoff_in(s: &ShapeState, center: Point, radius: f64, params: &HandOffParams) -> Result<ObstacleHandOff> {
    let w = params.half_width_fraction * radius;
    let chart = GraphChart::flat(1, params.cells, w)?;
    let bottom = center.y - radius;
    let v = s.region.vertices();
    let mut shape = Vec::with_capacity(chart.len());
    for k in 0..chart.len() {
        let x = center.x + chart.coords(k)[0];
        let y = lower_envelope(v, x).ok_or_else(|| Error::InvalidRegion(format!("region does not span x = {x} below the center")))?;
        shape.push(y - bottom);
    }
    let psi = chart.sample(|x| radius - (radius * radius - x[0] * x[0]).sqrt());
    let dirichlet: Vec<f64> = shape.iter().zip(&psi).map(|(u, p)| u.max(*p)).collect();
    let problem = obstacle::ObstacleProblem::new(chart, OperatorModel::Quasilinear, psi, dirichlet, s.multiplier_h0, params.solver)?;
    let sol = obstacle::solve_vi(&problem)?;
    let max_deviation = sol.u.iter().zip(&shape).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ell = obstacle::ellipticity(&problem, &sol.u)?;
    let d = &sol.diagnostics;
    let pass = max_deviation <= params.deviation_tol * radius && d.complementarity_residual < 1e-8 && ell.holds && d.gradient_within_bound;
    Ok(ObstacleHandOff {
        h0: s.multiplier_h0,
        cells: params.cells,
        half_width: w,
        max_deviation,
        contact_fraction: sol.contact_count() as f64 / sol.u.len() as f64,
        complementarity_residual: d.complementarity_residual,
        ellipticity_holds: ell.holds,
        gradient_within_bound: d.gradient_within_bound,
        pass,
    })
}

/// Lowest intersection of the vertical line at `x` with the polygon.
fn lower_envelope(v: &[Point], x: f64) -> Option<f64> {
    let n = v.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        let (lo, hi) = if p.x <= q.x { (p, q) } else { (q, p) };
        if x < lo.x || x > hi.x || hi.x == lo.x {
            continue;
        }
        let y = lo.y + (hi.y - lo.y) * (x - lo.x) / (hi.x - lo.x);
        best = Some(best.map_or(y, |b: f64| b.min(y)));
    }
    best
}

#[cfg(test)]
mod tests;

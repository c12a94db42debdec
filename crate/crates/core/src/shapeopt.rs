//! Minimization of `rad(E)·P(E)` at fixed volume.
//!
//! The functional is nonsmooth through `rad`. Its descent direction combines
//! the exact perimeter gradient with a subgradient of the radius supported on
//! the (banded) attainment set, preconditioned by an H¹ smoother along the
//! boundary and projected so that it is volume-neutral to first order. Every
//! trial step is followed by a volume projection and judged on the exact
//! functional, so accepted steps never increase it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldBackend, Point, Vec2};
use crate::meb::{self, EnclosingBall};
use crate::numeric::solve_cyclic_tridiagonal;
use crate::region::{csv_err, Region};

/// Per-vertex chart vectors. Gradients are stored in the same form and pair
/// with displacements through the chart dot product.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation(pub Vec<Vec2>);

impl Perturbation {
    pub fn zeros(n: usize) -> Self {
        Perturbation(vec![Vec2::zeros(); n])
    }

    /// `Σᵢ ⟨self(i), other(i)⟩` in chart coordinates.
    pub fn pair(&self, other: &Perturbation) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.dot(b)).sum()
    }

    /// Largest metric length of a displacement, measured at each vertex.
    pub fn sup_norm(&self, m: &ManifoldBackend, vertices: &[Point]) -> f64 {
        self.0.iter().zip(vertices).map(|(x, p)| m.norm(p, x)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.x.is_finite() && v.y.is_finite())
    }

    fn scaled(&self, t: f64) -> Perturbation {
        Perturbation(self.0.iter().map(|v| v * t).collect())
    }

    fn axpy(&mut self, a: f64, x: &Perturbation) {
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += v * a;
        }
    }
}

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeParams {
    pub max_iterations: usize,
    /// Relative volume tolerance enforced after every accepted step.
    pub vol_tol: f64,
    /// Stop when the relative decrease over `stall_window` iterations is
    /// below `stall_tol`.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Equal-arclength resampling period (0 disables it).
    pub redistribute_every: usize,
    /// H¹ smoothing strength in units of squared vertex spacing.
    pub smoothing: f64,
    /// Largest trial step, as a fraction of the mean edge length.
    pub max_step_fraction: f64,
    pub min_step: f64,
    /// Consecutive rejected trials (self-intersection) before aborting.
    pub max_rejections: usize,
    /// Fraction of the boundary used by the volume-correction patch.
    pub patch_fraction: f64,
    pub seed: u64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            max_iterations: 2000,
            vol_tol: 1e-8,
            stall_window: 20,
            stall_tol: 1e-8,
            redistribute_every: 25,
            smoothing: 4.0,
            max_step_fraction: 0.5,
            min_step: 1e-14,
            max_rejections: 100,
            patch_fraction: 0.25,
            seed: meb::DEFAULT_SEED,
        }
    }
}

/// Shortest run of consecutive non-attaining vertices counted as a free
/// arc when fitting H₀. Isolated dents between contact vertices are not
/// free boundary.
const H0_MIN_RUN: usize = 6;

/// Indices inside runs of `false` of length at least `min_run`, without the
/// two vertices at each end of a run (they carry the contact kink).
fn free_arc_interiors(contact: &[bool], min_run: usize) -> Vec<usize> {
    let n = contact.len();
    let Some(start) = contact.iter().position(|&c| c) else {
        return (0..n).collect();
    };
    let mut out = Vec::new();
    let mut run = Vec::new();
    for k in 1..=n {
        let i = (start + k) % n;
        if contact[i] {
            if run.len() >= min_run {
                out.extend_from_slice(&run[2..run.len() - 2]);
            }
            run.clear();
        } else {
            run.push(i);
        }
    }
    out
}

/// A region at the target volume together with its enclosing ball.
#[derive(Clone, Debug)]
pub struct ShapeState {
    pub region: Region,
    pub ball: EnclosingBall,
    /// Least-squares fit of `∇P ≈ H₀ ∇V` away from the enclosing circle
    /// (over the whole boundary if almost all of it is in contact).
    pub multiplier_h0: f64,
    pub target_volume: f64,
    pub functional_value: f64,
    previous_attainment: Vec<usize>,
}

impl ShapeState {
    /// Wrap a region, computing its enclosing ball and functional.
    pub fn new(region: Region, target_volume: f64, seed: u64) -> Result<Self> {
        let ball = meb::rad_from(&region, None, seed)?;
        Self::with_ball(region, ball, target_volume, Vec::new())
    }

    fn with_ball(region: Region, ball: EnclosingBall, target_volume: f64, previous_attainment: Vec<usize>) -> Result<Self> {
        let functional_value = ball.radius * region.perimeter()?;
        let mut s = ShapeState { region, ball, multiplier_h0: 0.0, target_volume, functional_value, previous_attainment };
        s.multiplier_h0 = s.estimate_h0()?;
        Ok(s)
    }

    /// `rad·P / (2V)`.
    pub fn ratio(&self) -> Result<f64> {
        Ok(self.functional_value / (2.0 * self.region.volume()?))
    }

    /// Indices used by the radius subgradient: the current attainment set
    /// joined with the previous iteration's.
    fn active_set(&self) -> Vec<usize> {
        let mut a = self.ball.attainment.clone();
        a.extend(self.previous_attainment.iter().copied().filter(|i| *i < self.region.len()));
        a.sort_unstable();
        a.dedup();
        a
    }

    fn estimate_h0(&self) -> Result<f64> {
        let gp = perimeter_gradient(&self.region)?;
        let gv = volume_gradient(&self.region);
        let m = self.region.backend();
        let n = self.region.len();
        let contact: Vec<bool> = {
            let mut c = vec![false; n];
            for &i in &self.ball.attainment {
                c[i] = true;
            }
            c
        };
        let mut free = free_arc_interiors(&contact, H0_MIN_RUN);
        if free.len() < n / 10 {
            free = (0..n).collect();
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in free {
            let p = &self.region.vertices()[i];
            let sv = m.sharp(p, &gv.0[i]);
            num += gp.0[i].dot(&sv);
            den += gv.0[i].dot(&sv);
        }
        Ok(if den > 0.0 { num / den } else { 0.0 })
    }
}

/// `rad(E)·P(E)`, recomputed from the region and ball.
pub fn evaluate(s: &ShapeState) -> Result<f64> {
    Ok(s.ball.radius * s.region.perimeter()?)
}

pub fn perimeter_gradient(region: &Region) -> Result<Perturbation> {
    Ok(Perturbation(region.perimeter_gradient()?))
}

pub fn volume_gradient(region: &Region) -> Perturbation {
    Perturbation(region.volume_gradient())
}

/// Subgradient of `rad` supported on the attainment set: the radial
/// covector at each attaining vertex times its support weight (uniform for
/// balanced configurations).
pub fn radius_subgradient(s: &ShapeState) -> Result<Perturbation> {
    radius_subgradient_on(&s.region, &s.ball, &s.active_set())
}

fn radius_subgradient_on(region: &Region, ball: &EnclosingBall, active: &[usize]) -> Result<Perturbation> {
    if active.is_empty() {
        return Err(Error::EmptyAttainment);
    }
    let m = region.backend();
    let v = region.vertices();
    let w = meb::support_weights(m, &ball.center, v, active)?;
    let mut g = Perturbation::zeros(region.len());
    for (&i, wi) in active.iter().zip(w) {
        if wi > 0.0 {
            g.0[i] = m.geodesic(&ball.center, &v[i])?.grad_q * wi;
        }
    }
    Ok(g)
}

/// Outcome of a volume correction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub deficit: f64,
    pub newton_iterations: usize,
    pub perimeter_change: f64,
    /// Measured `|ΔP| / |v|` (zero when no correction was needed).
    pub measured_c1: f64,
    /// `(max |curvature| + 1) × patch factor`.
    pub c1_bound: f64,
    /// False when the correction fell back to the whole boundary.
    pub used_patch: bool,
}

impl ProjectionReport {
    pub fn within_bound(&self) -> bool {
        self.measured_c1 <= self.c1_bound
    }
}

/// Safety factor of the perimeter bound for the tapered patch.
const PATCH_FACTOR: f64 = 2.0;

/// Contiguous arc of `len` vertices avoiding `avoid`, chosen with the largest
/// clearance from it.
pub fn choose_patch(n: usize, len: usize, avoid: &[usize]) -> Result<Vec<usize>> {
    let len = len.clamp(1, n);
    if avoid.is_empty() {
        return Ok((0..len).collect());
    }
    let mut blocked = vec![false; n];
    for &i in avoid {
        blocked[i % n] = true;
    }
    // Cyclic distance to the nearest blocked vertex.
    let mut dist = vec![usize::MAX; n];
    for _ in 0..2 {
        let mut d = usize::MAX;
        for k in 0..2 * n {
            let i = k % n;
            d = if blocked[i] { 0 } else { d.saturating_add(1) };
            dist[i] = dist[i].min(d);
        }
        let mut d = usize::MAX;
        for k in (0..2 * n).rev() {
            let i = k % n;
            d = if blocked[i] { 0 } else { d.saturating_add(1) };
            dist[i] = dist[i].min(d);
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for start in 0..n {
        let arc = (0..len).map(|k| (start + k) % n);
        if arc.clone().any(|i| blocked[i]) {
            continue;
        }
        let clearance = arc.map(|i| dist[i]).min().unwrap_or(0);
        if best.is_none_or(|(_, c)| clearance > c) {
            best = Some((start, clearance));
        }
    }
    best.map(|(s, _)| (0..len).map(|k| (s + k) % n).collect()).ok_or(Error::PatchUnavailable)
}

/// Restore `target` volume by a tapered outward normal displacement on a
/// boundary patch away from `avoid` (or on the whole boundary if no patch
/// exists), sized by Newton iteration on the volume.
pub fn project_volume(region: &Region, target: f64, avoid: &[usize], params: &ShapeParams) -> Result<(Region, ProjectionReport)> {
    let v0 = region.volume()?;
    let deficit = target - v0;
    let p0 = region.perimeter()?;
    let kmax = region.discrete_mean_curvature()?.iter().fold(0.0f64, |a, k| a.max(k.abs()));
    let c1_bound = (kmax + 1.0) * PATCH_FACTOR;
    if deficit.abs() <= params.vol_tol * target {
        let report =
            ProjectionReport { deficit, newton_iterations: 0, perimeter_change: 0.0, measured_c1: 0.0, c1_bound, used_patch: true };
        return Ok((region.clone(), report));
    }
    if deficit.abs() > 0.1 * target {
        return Err(Error::InvalidInput(format!("volume deficit {deficit:e} exceeds 10% of the target")));
    }
    let n = region.len();
    let patch_len = ((params.patch_fraction * n as f64).round() as usize).max(3);
    let (weights, used_patch) = match choose_patch(n, patch_len, avoid) {
        Ok(patch) => {
            let mut w = vec![0.0; n];
            let len = patch.len() as f64;
            for (k, &i) in patch.iter().enumerate() {
                w[i] = (std::f64::consts::PI * (k as f64 + 1.0) / (len + 1.0)).sin().powi(2);
            }
            (w, true)
        }
        Err(Error::PatchUnavailable) => (vec![1.0; n], false),
        Err(e) => return Err(e),
    };
    let normals = region.inward_normals()?;
    let shape: Vec<Vec2> = normals.iter().zip(&weights).map(|(nv, w)| -nv * *w).collect();
    let base = region.vertices().to_vec();
    let displaced = |s: f64| -> Result<Region> { region.with_vertices(base.iter().zip(&shape).map(|(p, x)| p + x * s).collect()) };
    let mut s = 0.0;
    let mut current = region.clone();
    let mut iterations = 0;
    for _ in 0..50 {
        let v = current.volume()?;
        let err = target - v;
        if err.abs() <= params.vol_tol * target {
            break;
        }
        let gv = volume_gradient(&current);
        let slope: f64 = gv.0.iter().zip(&shape).map(|(g, x)| g.dot(x)).sum();
        if !(slope > 0.0) {
            return Err(Error::NoConvergence("volume projection has no outward slope".into()));
        }
        s += err / slope;
        current = displaced(s)?;
        iterations += 1;
    }
    let err = target - current.volume()?;
    if err.abs() > params.vol_tol * target {
        return Err(Error::NoConvergence(format!("volume projection left deficit {err:e}")));
    }
    let dp = current.perimeter()? - p0;
    let report = ProjectionReport {
        deficit,
        newton_iterations: iterations,
        perimeter_change: dp,
        measured_c1: dp.abs() / deficit.abs(),
        c1_bound,
        used_patch,
    };
    Ok((current, report))
}

/// Resample the boundary at equal metric arclength (chart-linear between
/// the old vertices).
pub fn redistribute(region: &Region) -> Result<Region> {
    let edges = region.edges()?;
    let v = region.vertices();
    let n = v.len();
    let total: f64 = edges.iter().map(|e| e.length).sum();
    let mut pts = Vec::with_capacity(n);
    let mut edge = 0;
    let mut acc = 0.0;
    for k in 0..n {
        let target = total * k as f64 / n as f64;
        while edge < n - 1 && acc + edges[edge].length < target {
            acc += edges[edge].length;
            edge += 1;
        }
        let s = ((target - acc) / edges[edge].length).clamp(0.0, 1.0);
        pts.push(v[edge] + (v[(edge + 1) % n] - v[edge]) * s);
    }
    region.with_vertices(pts)
}

/// Riesz representative of a covector field: pointwise metric inverse and
/// lumped mass, then the cyclic H¹ smoother `(I − s Δ) X = X₀`.
fn precondition(region: &Region, g: &Perturbation, smoothing: f64) -> Result<Perturbation> {
    let m = region.backend();
    let w = region.dual_lengths()?;
    let mean_w = w.iter().sum::<f64>() / w.len() as f64;
    let x0: Vec<Vec2> = g.0.iter().zip(region.vertices()).zip(&w).map(|((gi, p), wi)| m.sharp(p, gi) * (mean_w / wi)).collect();
    if smoothing <= 0.0 {
        return Ok(Perturbation(x0));
    }
    let n = x0.len();
    let off = vec![-smoothing; n];
    let diag = vec![1.0 + 2.0 * smoothing; n];
    let xs = solve_cyclic_tridiagonal(&off, &diag, &off, &x0.iter().map(|v| v.x).collect::<Vec<_>>());
    let ys = solve_cyclic_tridiagonal(&off, &diag, &off, &x0.iter().map(|v| v.y).collect::<Vec<_>>());
    Ok(Perturbation(xs.into_iter().zip(ys).map(|(x, y)| Vec2::new(x, y)).collect()))
}

/// Descent direction for `weight_r·rad + weight_p·P`-type combinations:
/// `−M⁻¹G` with the component along `M⁻¹∇V` removed so that the first-order
/// volume change vanishes.
fn volume_neutral_direction(region: &Region, g: &Perturbation, smoothing: f64) -> Result<Perturbation> {
    let gv = volume_gradient(region);
    let xg = precondition(region, g, smoothing)?;
    let xv = precondition(region, &gv, smoothing)?;
    let c = gv.pair(&xg) / gv.pair(&xv);
    let mut d = xg.scaled(-1.0);
    d.axpy(c, &xv);
    Ok(d)
}

/// One row of the descent trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub functional: f64,
    pub ratio: f64,
    pub rad: f64,
    #[serde(rename = "P")]
    pub perimeter: f64,
    #[serde(rename = "V")]
    pub volume: f64,
    #[serde(rename = "H0_estimate")]
    pub h0_estimate: f64,
    pub step: f64,
    pub rejected_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative decrease over the stall window fell below the tolerance.
    Converged,
    /// No trial step decreased the functional.
    Stalled,
    IterationBudget,
}

#[derive(Clone, Debug)]
pub struct Descent {
    pub state: ShapeState,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    /// Largest measured perimeter-bound constant over all volume projections.
    pub max_measured_c1: f64,
    pub projections_within_bound: bool,
}

impl Descent {
    /// Trace as CSV with the columns of [`TraceRow`].
    pub fn trace_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.trace {
            w.serialize(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// True if the functional never increased between trace rows.
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].functional <= w[0].functional * (1.0 + 1e-12))
    }
}

/// What is being minimized and how trial shapes are constrained.
enum Objective {
    /// `rad·P` with the enclosing ball recomputed per trial.
    RadTimesPerimeter,
    /// `P` alone, vertices clamped to a fixed closed ball.
    PerimeterInBall { center: Point, radius: f64 },
}

/// Minimize `rad·P` at volume `target` starting from `init`.
pub fn minimize(target: f64, init: Region, params: &ShapeParams) -> Result<Descent> {
    run(target, init, params, Objective::RadTimesPerimeter)
}

/// Minimize the perimeter at volume `target` among regions inside the closed
/// metric ball `B(center, radius)`. The reported `ball` is the fixed one.
pub fn minimize_in_ball(target: f64, init: Region, center: Point, radius: f64, params: &ShapeParams) -> Result<Descent> {
    run(target, init, params, Objective::PerimeterInBall { center, radius })
}

/// Bring the initial volume within the projection range by scaling the
/// chart polygon about its vertex centroid.
fn prepare_initial(target: f64, init: Region) -> Result<Region> {
    let v = init.volume()?;
    if (v - target).abs() <= 0.1 * target {
        return Ok(init);
    }
    let c = init.vertices().iter().sum::<Point>() / init.len() as f64;
    let scaled = |s: f64| init.with_vertices(init.vertices().iter().map(|p| c + (p - c) * s).collect());
    let excess = |s: f64| -> f64 {
        match scaled(s).and_then(|r| r.volume()) {
            Ok(vs) => vs - target,
            // Shrunk to nothing, or pushed out of the chart.
            Err(_) if s < 1.0 => -target,
            Err(_) => f64::INFINITY,
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while excess(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidInput(format!("cannot scale the initial region to volume {target}")));
        }
    }
    let s = crate::numeric::bisect(excess, lo, hi, 1e-12)?;
    scaled(s)
}

/// Closest point of the closed ball to `p` along the radial geodesic.
fn clamp_to_ball(m: &ManifoldBackend, center: &Point, radius: f64, p: &Point) -> Result<Point> {
    let d = m.distance(center, p)?;
    if d <= radius {
        return Ok(*p);
    }
    if m.is_flat() {
        return Ok(center + (p - center) * (radius / d));
    }
    let (v, _) = m.log_map(center, p)?;
    m.exp_map(center, &(v * (radius / d)))
}

struct Evaluated {
    region: Region,
    ball: EnclosingBall,
    value: f64,
    projection: ProjectionReport,
}

fn run(target: f64, init: Region, params: &ShapeParams, objective: Objective) -> Result<Descent> {
    let backend: Arc<ManifoldBackend> = init.backend_arc().clone();
    let m = backend.as_ref();
    let init = prepare_initial(target, init)?;

    // Fixed-ball mode reports the fixed ball; contact = vertices on its sphere.
    let fixed_ball = |region: &Region, center: Point, radius: f64| -> Result<EnclosingBall> {
        let mut attainment = Vec::new();
        for (i, p) in region.vertices().iter().enumerate() {
            if m.distance(&center, p)? >= radius * (1.0 - 1e-6) {
                attainment.push(i);
            }
        }
        Ok(EnclosingBall { center, radius, attainment, ambient_radius: None })
    };
    let evaluate_region = |candidate: Region, warm: Option<Point>, avoid: &[usize]| -> Result<Evaluated> {
        let (region, projection) = project_volume(&candidate, target, avoid, params)?;
        let (ball, value) = match objective {
            Objective::RadTimesPerimeter => {
                let ball = meb::rad_from(&region, warm, params.seed)?;
                let value = ball.radius * region.perimeter()?;
                (ball, value)
            }
            Objective::PerimeterInBall { center, radius } => {
                let ball = fixed_ball(&region, center, radius)?;
                if region.vertices().iter().any(|p| m.distance(&center, p).is_ok_and(|d| d > radius * (1.0 + 1e-9))) {
                    return Err(Error::InvalidRegion("volume projection left the constraint ball".into()));
                }
                let value = radius * region.perimeter()?;
                (ball, value)
            }
        };
        Ok(Evaluated { region, ball, value, projection })
    };

    let start = match objective {
        Objective::RadTimesPerimeter => {
            let ball = meb::rad_from(&init, None, params.seed)?;
            let attained = ball.attainment.clone();
            evaluate_region(init, Some(ball.center), &attained)?
        }
        Objective::PerimeterInBall { center, radius } => {
            let clamped: Vec<Point> = init.vertices().iter().map(|p| clamp_to_ball(m, &center, radius, p)).collect::<Result<_>>()?;
            let region = init.with_vertices(clamped)?;
            let avoid = fixed_ball(&region, center, radius)?.attainment;
            evaluate_region(region, None, &avoid)?
        }
    };
    let mut max_c1 = start.projection.measured_c1;
    let mut within = start.projection.within_bound();
    let mut state = ShapeState::with_ball(start.region, start.ball, target, Vec::new())?;
    state.functional_value = start.value;

    let row = |s: &ShapeState, iteration: usize, step: f64, rejected: usize| -> Result<TraceRow> {
        let v = s.region.volume()?;
        Ok(TraceRow {
            iteration,
            functional: s.functional_value,
            ratio: s.functional_value / (2.0 * v),
            rad: s.ball.radius,
            perimeter: s.region.perimeter()?,
            volume: v,
            h0_estimate: s.multiplier_h0,
            step,
            rejected_steps: rejected,
        })
    };
    let mut trace = vec![row(&state, 0, 0.0, 0)?];
    let mut step = f64::INFINITY;
    let mut termination = Termination::IterationBudget;
    let mut rejected_total = 0;

    for iteration in 1..=params.max_iterations {
        let region = &state.region;
        let perimeter = region.perimeter()?;
        let gp = perimeter_gradient(region)?;
        let mut g = gp.scaled(state.ball.radius);
        if let Objective::RadTimesPerimeter = objective {
            let gr = radius_subgradient(&state)?;
            g.axpy(perimeter, &gr);
        }
        let mut dir = volume_neutral_direction(region, &g, params.smoothing)?;
        let sup = dir.sup_norm(m, region.vertices());
        if !(sup > 0.0) || !dir.is_finite() {
            termination = Termination::Converged;
            break;
        }
        dir = dir.scaled(1.0 / sup);
        let max_step = params.max_step_fraction * perimeter / region.len() as f64;
        let mut t = (2.0 * step).min(max_step);
        let mut consecutive_rejections = 0;
        let mut accepted: Option<Evaluated> = None;
        while t >= params.min_step {
            let moved: Vec<Point> = region.vertices().iter().zip(&dir.0).map(|(p, d)| p + d * t).collect();
            let moved = match objective {
                Objective::PerimeterInBall { center, radius } => {
                    moved.iter().map(|p| clamp_to_ball(m, &center, radius, p)).collect::<Result<Vec<_>>>()
                }
                Objective::RadTimesPerimeter => Ok(moved),
            };
            let trial = moved.and_then(|v| region.with_vertices(v)).and_then(|r| {
                let avoid = match objective {
                    Objective::RadTimesPerimeter => state.active_set(),
                    Objective::PerimeterInBall { center, radius } => fixed_ball(&r, center, radius)?.attainment,
                };
                evaluate_region(r, Some(state.ball.center), &avoid)
            });
            match trial {
                Ok(e) if e.value < state.functional_value => {
                    accepted = Some(e);
                    break;
                }
                Ok(_) => {}
                Err(Error::InvalidRegion(_)) | Err(Error::OutOfChart(_)) | Err(Error::DegeneratePolygon(_)) => {
                    consecutive_rejections += 1;
                    rejected_total += 1;
                    if consecutive_rejections >= params.max_rejections {
                        return Err(Error::SelfIntersection(consecutive_rejections));
                    }
                }
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some(e) = accepted else {
            if iteration == 1 && state.ball.attainment.len() < 2 && state.functional_value > 0.0 {
                return Err(Error::LineSearchFailed(t));
            }
            termination = Termination::Stalled;
            break;
        };
        step = t;
        max_c1 = max_c1.max(e.projection.measured_c1);
        within &= e.projection.within_bound();
        let previous = std::mem::take(&mut state.ball.attainment);
        state = ShapeState::with_ball(e.region, e.ball, target, previous)?;
        state.functional_value = e.value;

        if params.redistribute_every > 0 && iteration % params.redistribute_every == 0 {
            if let Ok(r) = redistribute(&state.region) {
                let avoid = state.active_set();
                if let Ok(e) = evaluate_region(r, Some(state.ball.center), &avoid) {
                    if e.value <= state.functional_value {
                        let previous = state.previous_attainment.clone();
                        state = ShapeState::with_ball(e.region, e.ball, target, previous)?;
                        state.functional_value = e.value;
                    }
                }
            }
        }
        trace.push(row(&state, iteration, step, rejected_total)?);
        if trace.len() > params.stall_window {
            let old = trace[trace.len() - 1 - params.stall_window].functional;
            if (old - state.functional_value) <= params.stall_tol * old {
                termination = Termination::Converged;
                break;
            }
        }
    }
    Ok(Descent { state, trace, termination, max_measured_c1: max_c1, projections_within_bound: within })
}

/// Discrete curvature bounds on a converged state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureBoundReport {
    pub h0: f64,
    pub ball_curvature: f64,
    pub epsilon: f64,
    pub contact_vertices: usize,
    pub free_vertices: usize,
    /// Worst violation of `η − ε ≤ κ ≤ H₀ + ε` on the contact set.
    pub contact_violation: f64,
    /// Worst `|κ − H₀| − ε` off the contact set.
    pub free_violation: f64,
    /// Mean and variance of the curvature off the contact set.
    pub free_mean: f64,
    pub free_variance: f64,
    pub pass: bool,
}

/// Check `η − ε ≤ κ ≤ H₀ + ε` on vertices within `contact_tol` of the
/// enclosing sphere and `|κ − H₀| ≤ ε` elsewhere.
pub fn curvature_bound_check(s: &ShapeState, ball_curvature: f64, epsilon: f64, contact_tol: f64) -> Result<CurvatureBoundReport> {
    let m = s.region.backend();
    let kappa = s.region.discrete_mean_curvature()?;
    let h0 = s.multiplier_h0;
    let (mut nc, mut nf) = (0, 0);
    let (mut cv, mut fv): (f64, f64) = (0.0, 0.0);
    let mut free = Vec::new();
    for (p, &k) in s.region.vertices().iter().zip(&kappa) {
        let d = m.distance(&s.ball.center, p)?;
        if d >= s.ball.radius - contact_tol {
            nc += 1;
            cv = cv.max((ball_curvature - epsilon) - k).max(k - (h0 + epsilon));
        } else {
            nf += 1;
            fv = fv.max((k - h0).abs() - epsilon);
            free.push(k);
        }
    }
    let free_mean = if free.is_empty() { 0.0 } else { free.iter().sum::<f64>() / free.len() as f64 };
    let free_variance = if free.is_empty() { 0.0 } else { free.iter().map(|k| (k - free_mean).powi(2)).sum::<f64>() / free.len() as f64 };
    let contact_violation = if nc > 0 { cv } else { f64::NEG_INFINITY };
    let free_violation = if nf > 0 { fv } else { f64::NEG_INFINITY };
    Ok(CurvatureBoundReport {
        h0,
        ball_curvature,
        epsilon,
        contact_vertices: nc,
        free_vertices: nf,
        contact_violation,
        free_violation,
        free_mean,
        free_variance,
        pass: contact_violation <= 0.0 && free_violation <= 0.0,
    })
}

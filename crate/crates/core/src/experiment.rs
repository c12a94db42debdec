//! JSON experiment configs and the runner behind the command-line tool.
//!
//! A config names one experiment of kind `verify`, `optimize`, `obstacle`,
//! `catalog` or `scan`, the backend it runs on, and its numeric parameters.
//! Unknown keys are rejected. Running a config produces a [`RunReport`]
//! (pass/fail per check plus the raw measurements) and a set of CSV files:
//! traces, grids, and two-column plot data. Nothing time- or
//! thread-dependent goes into the files, so reruns are byte-identical.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{self, MobiusBand, TruncatedCatenoid};
use crate::error::Error;
use crate::geometry::{BackendSpec, ManifoldBackend, Point};
use crate::obstacle::{self, GraphChart, ObstacleProblem, OperatorModel, SolverParams};
use crate::shapeopt::{self, ShapeParams};
use crate::verify::{self, Comparator, ConstrainedTolerances, HandOffParams, ShapeSpec, VerificationReport};

/// Errors of loading or running an experiment.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config {path}: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("experiment failed: {0}")]
    Numeric(#[from] Error),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl RunError {
    /// 2 for a bad config, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::ConfigInvalid { .. } => 2,
            _ => 1,
        }
    }

    fn config(path: &Path, message: impl Into<String>) -> Self {
        RunError::ConfigInvalid { path: path.display().to_string(), message: message.into() }
    }
}

fn default_seed() -> u64 {
    crate::meb::DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Identifier; also the name of the output subdirectory.
    pub name: String,
    /// The statement the experiment checks, echoed into the report.
    pub claim: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Defaults to the Euclidean plane.
    #[serde(default)]
    pub backend: Option<BackendSpec>,
    /// Failures under tightened tolerances (`--tol-scale` below 1) are
    /// expected from discretization and are flagged instead of failing.
    #[serde(default)]
    pub discretization_limited: bool,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Verify(VerifySetup),
    Optimize(OptimizeSetup),
    Obstacle(ObstacleSetup),
    Catalog(CatalogSetup),
    Scan(ScanSetup),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Verify(_) => "verify",
            Experiment::Optimize(_) => "optimize",
            Experiment::Obstacle(_) => "obstacle",
            Experiment::Catalog(_) => "catalog",
            Experiment::Scan(_) => "scan",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Euclidean,
    CartanHadamard,
    RicciBall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub count: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

fn default_vertices() -> usize {
    512
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySetup {
    pub check: CheckKind,
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
    #[serde(default)]
    pub random: Option<RandomSpec>,
    #[serde(default = "default_vertices")]
    pub vertices: usize,
    pub tol: f64,
    /// Relative tolerance against closed-form ratios, where known.
    #[serde(default)]
    pub comparator_tol: Option<f64>,
    /// Also measure at twice the vertex count.
    #[serde(default = "yes")]
    pub refine: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConstraint {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub tolerances: ConstrainedTolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSetup {
    #[serde(rename = "V")]
    pub volume: f64,
    pub init: ShapeSpec,
    #[serde(default = "default_vertices")]
    pub vertices: usize,
    #[serde(default)]
    pub params: ShapeParams,
    /// Final `rad·P/(2V)` must be below this.
    #[serde(default)]
    pub max_ratio: Option<f64>,
    /// Relative agreement of the final ratio with the volume-`V` metric
    /// ball about the final enclosing center.
    #[serde(default)]
    pub ball_rel_tol: Option<f64>,
    #[serde(default = "yes")]
    pub require_monotone: bool,
    /// Re-solve the converged boundary as an obstacle problem (flat only).
    #[serde(default)]
    pub handoff: Option<HandOffParams>,
    /// Minimize `P` inside this fixed ball instead of `rad·P`.
    #[serde(default)]
    pub constraint_ball: Option<BallConstraint>,
}

fn default_order_band() -> [f64; 2] {
    [3.5, 4.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSetup {
    /// `u'' = 1`, `u ≥ 0` on `[−1, 1]`, free boundary at `±a`, solved on
    /// each grid of `cells`.
    OneDClosedForm {
        a: f64,
        cells: Vec<usize>,
        #[serde(default = "default_order_band")]
        order_band: [f64; 2],
        residual_tol: f64,
        /// Limit of the quadratic-growth constant and its relative tolerance.
        cq_target: f64,
        cq_rel_tol: f64,
        /// Smallest growth of third differences across the last refinement.
        min_third_growth: f64,
        #[serde(default)]
        solver: SolverParams,
    },
    /// Quasilinear operator on a flat 2D chart with a spherical-cap obstacle
    /// `R − √(R² − |x|²)` and boundary data `ψ + clearance`.
    SphericalCap {
        obstacle_radius: f64,
        half_width: f64,
        cells: usize,
        clearance: f64,
        h0: f64,
        residual_tol: f64,
        #[serde(default)]
        solver: SolverParams,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSetup {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    /// `(n_θ, n_t)` of the surface mesh.
    pub mesh: [usize; 2],
    pub discrepancy_tol: f64,
    /// Tolerance on the ratio being 1 at the critical catenoid and Möbius band.
    pub equality_tol: f64,
    /// `ρ(T) < 1 − gap` away from `T₀`.
    pub gap: f64,
    /// Distance from `T₀` beyond which the gap is required.
    pub exclusion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSetup {
    #[serde(rename = "V")]
    pub volume: f64,
    pub distances: Vec<f64>,
    pub tol: f64,
    pub gap_tol: f64,
}

impl ExperimentConfig {
    /// Parse a config file; errors name the offending key.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::config(path, e.to_string()))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, RunError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            RunError::config(path, format!("at `{at}`: {}", e.inner()))
        })?;
        cfg.validate().map_err(|m| RunError::config(path, m))?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(format!("`name` must be a non-empty file name, got {:?}", self.name));
        }
        let positive =
            |key: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(format!("`{key}` must be positive, got {v}")) };
        match &self.experiment {
            Experiment::Verify(v) => {
                if !(v.tol >= 0.0 && v.tol.is_finite()) {
                    return Err(format!("`experiment.tol` must be non-negative, got {}", v.tol));
                }
                match (v.shapes.is_empty(), &v.random) {
                    (true, None) => return Err("`experiment` needs `shapes` or `random`".into()),
                    (false, Some(_)) => return Err("`experiment` takes `shapes` or `random`, not both".into()),
                    _ => {}
                }
                if v.check == CheckKind::RicciBall && v.shapes.iter().any(|s| !matches!(s, ShapeSpec::Ball { .. })) {
                    return Err("`ricci_ball` checks take only `ball` shapes".into());
                }
                if v.vertices < crate::region::MIN_VERTICES {
                    return Err(format!("`experiment.vertices` must be at least {}", crate::region::MIN_VERTICES));
                }
            }
            Experiment::Optimize(o) => positive("experiment.V", o.volume)?,
            Experiment::Obstacle(ObstacleSetup::OneDClosedForm { a, cells, .. }) => {
                if !(0.0..1.0).contains(a) {
                    return Err(format!("`experiment.a` must lie in [0, 1), got {a}"));
                }
                if cells.len() < 2 || cells.windows(2).any(|w| w[1] != 2 * w[0]) {
                    return Err("`experiment.cells` must list at least two grids, each twice the previous".into());
                }
            }
            Experiment::Obstacle(ObstacleSetup::SphericalCap { obstacle_radius, half_width, .. }) => {
                positive("experiment.obstacle_radius", *obstacle_radius)?;
                positive("experiment.half_width", *half_width)?;
                if 2f64.sqrt() * half_width >= *obstacle_radius {
                    return Err("`experiment.half_width` must keep the grid inside the cap".into());
                }
            }
            Experiment::Catalog(c) => {
                if !(c.lo > 0.0 && c.hi > c.lo && c.samples >= 3) {
                    return Err("catalog sweep needs 0 < lo < hi and at least 3 samples".into());
                }
            }
            Experiment::Scan(s) => {
                positive("experiment.V", s.volume)?;
                if s.distances.is_empty() || s.distances.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("`experiment.distances` must be non-empty and increasing".into());
                }
            }
        }
        Ok(())
    }

    /// Multiply every tolerance by `s`.
    pub fn scale_tolerances(&mut self, s: f64) {
        match &mut self.experiment {
            Experiment::Verify(v) => {
                v.tol *= s;
                if let Some(c) = &mut v.comparator_tol {
                    *c *= s;
                }
            }
            Experiment::Optimize(o) => {
                if let Some(m) = &mut o.max_ratio {
                    *m = 1.0 + (*m - 1.0) * s;
                }
                if let Some(t) = &mut o.ball_rel_tol {
                    *t *= s;
                }
                if let Some(h) = &mut o.handoff {
                    h.deviation_tol *= s;
                }
                if let Some(b) = &mut o.constraint_ball {
                    b.tolerances.perimeter_rel *= s;
                    b.tolerances.curvature_variance *= s;
                }
            }
            // The solver tolerance stays put here: at 512 cells the residual
            // carries a 1/h² factor and 1e-11 is below double resolution.
            Experiment::Obstacle(ObstacleSetup::OneDClosedForm { order_band, residual_tol, cq_rel_tol, .. }) => {
                let mid = 4.0;
                *order_band = [mid - (mid - order_band[0]) * s, mid + (order_band[1] - mid) * s];
                *residual_tol *= s;
                *cq_rel_tol *= s;
            }
            Experiment::Obstacle(ObstacleSetup::SphericalCap { residual_tol, solver, .. }) => {
                *residual_tol *= s;
                solver.scale_tolerances(s);
            }
            Experiment::Catalog(c) => {
                c.discrepancy_tol *= s;
                c.equality_tol *= s;
            }
            Experiment::Scan(sc) => {
                sc.tol *= s;
                sc.gap_tol *= s;
            }
        }
    }
}

/// One assertion of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    /// The bound `value` is held to, in words.
    pub limit: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, value: f64, limit: impl Into<String>) -> Self {
        Check { name: name.into(), pass, value, limit: limit.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub kind: String,
    pub claim: String,
    pub backend: String,
    pub seed: u64,
    pub tol_scale: f64,
    pub discretization_limited: bool,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Files written next to `report.json`.
    pub artifacts: Vec<String>,
    /// Experiment-specific measurements.
    pub details: serde_json::Value,
}

/// A report and the CSV files that go with it.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
}

impl Outcome {
    /// Write `report.json` and the CSV files into `dir/<name>/`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, RunError> {
        let out = dir.join(&self.report.name);
        let io = |p: &Path, e: std::io::Error| RunError::Output { path: p.display().to_string(), message: e.to_string() };
        std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
        let json = serde_json::to_string_pretty(&self.report).map_err(|e| Error::Io(e.to_string()))?;
        let p = out.join("report.json");
        std::fs::write(&p, json + "\n").map_err(|e| io(&p, e))?;
        for (name, contents) in &self.files {
            let p = out.join(name);
            std::fs::write(&p, contents).map_err(|e| io(&p, e))?;
        }
        Ok(out)
    }
}

/// Overrides applied on top of a config.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: None, tol_scale: 1.0 }
    }
}

struct Builder {
    checks: Vec<Check>,
    files: Vec<(String, String)>,
    details: serde_json::Map<String, serde_json::Value>,
}

impl Builder {
    fn check(&mut self, name: impl Into<String>, pass: bool, value: f64, limit: impl Into<String>) {
        self.checks.push(Check::new(name, pass, value, limit));
    }

    fn detail(&mut self, key: &str, value: impl Serialize) -> Result<(), Error> {
        let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
        self.details.insert(key.into(), v);
        Ok(())
    }

    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.into(), contents));
    }
}

/// Run a config. `base_dir` resolves relative paths inside the config.
pub fn run(config: &ExperimentConfig, base_dir: &Path, opts: RunOptions) -> Result<Outcome, RunError> {
    let mut cfg = config.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if opts.tol_scale != 1.0 {
        cfg.scale_tolerances(opts.tol_scale);
    }
    let spec = cfg.backend.clone().unwrap_or(BackendSpec::Euclidean);
    let backend = Arc::new(ManifoldBackend::from_spec(&spec, base_dir).map_err(|e| RunError::config(base_dir, format!("backend: {e}")))?);
    let mut b = Builder { checks: Vec::new(), files: Vec::new(), details: serde_json::Map::new() };
    match &cfg.experiment {
        Experiment::Verify(v) => run_verify(&mut b, &backend, v, cfg.seed).map_err(|e| map_setup(e, base_dir))?,
        Experiment::Optimize(o) => run_optimize(&mut b, &backend, o, cfg.seed)?,
        Experiment::Obstacle(o) => run_obstacle(&mut b, o)?,
        Experiment::Catalog(c) => run_catalog(&mut b, c)?,
        Experiment::Scan(s) => run_scan(&mut b, &backend, s)?,
    }
    let pass = !b.checks.is_empty() && b.checks.iter().all(|c| c.pass);
    let report = RunReport {
        name: cfg.name.clone(),
        kind: cfg.experiment.kind().into(),
        claim: cfg.claim.clone(),
        backend: backend.label(),
        seed: cfg.seed,
        tol_scale: opts.tol_scale,
        discretization_limited: cfg.discretization_limited,
        pass,
        checks: b.checks,
        artifacts: b.files.iter().map(|f| f.0.clone()).collect(),
        details: serde_json::Value::Object(b.details),
    };
    Ok(Outcome { report, files: b.files })
}

/// A backend that does not meet the check's hypothesis is a config error.
fn map_setup(e: Error, base_dir: &Path) -> RunError {
    match e {
        Error::WrongBackend(m) => RunError::config(base_dir, format!("backend does not fit the check: {m}")),
        other => RunError::Numeric(other),
    }
}

fn two_column(header: [&str; 2], rows: impl IntoIterator<Item = (f64, f64)>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(crate::region::csv_err)?;
    for (x, y) in rows {
        w.write_record([x.to_string(), y.to_string()]).map_err(crate::region::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn run_verify(b: &mut Builder, m: &Arc<ManifoldBackend>, v: &VerifySetup, seed: u64) -> Result<(), Error> {
    let sign = m.curvature_sign();
    let fits = match v.check {
        CheckKind::Euclidean => m.is_flat(),
        CheckKind::CartanHadamard => sign.allows_nonpositive(),
        CheckKind::RicciBall => sign.allows_nonnegative(),
    };
    if !fits {
        return Err(Error::WrongBackend(format!("{:?} on {}", v.check, m.label())));
    }
    let reports: Vec<VerificationReport> = if let Some(r) = &v.random {
        let batch = verify::random_regions(m.clone(), r.count, v.vertices, Point::new(r.center[0], r.center[1]), r.radius, v.tol, seed)?;
        b.check("all random regions respect the bound", batch.pass, batch.failures as f64, "failures = 0");
        b.detail("min_ratio", batch.min_ratio)?;
        b.detail("max_ratio", batch.max_ratio)?;
        batch.reports
    } else {
        let mut out = Vec::new();
        for (i, shape) in v.shapes.iter().enumerate() {
            let mut r = match (v.check, shape) {
                (CheckKind::RicciBall, ShapeSpec::Ball { center, radius }) => {
                    verify::check_ricci_ball(m, &Point::new(center[0], center[1]), *radius, v.tol)?
                }
                (CheckKind::RicciBall, _) => unreachable!("validated"),
                (check, _) => {
                    let region = shape.build(m.clone(), v.vertices)?;
                    let fine = if v.refine { Some(shape.build(m.clone(), 2 * v.vertices)?) } else { None };
                    match check {
                        CheckKind::Euclidean => {
                            let r = verify::check_euclidean(&region, v.tol)?;
                            match &fine {
                                Some(f) => r.with_refinement(verify::measure_region(f)?.ratio, false),
                                None => r,
                            }
                        }
                        _ => verify::check_ch(&region, fine.as_ref(), v.tol)?,
                    }
                }
            };
            if let (Some(tol), Some((source, value))) = (v.comparator_tol, shape.closed_form_ratio(m)) {
                let measured = r.measured.ratio;
                r = r.with_comparator(Comparator::new(source, value, measured, tol));
            }
            r.id = format!("shape_{i}");
            let bound = format!("{:?} within {:e}", r.bound, r.tol);
            b.check(format!("shape {i}: bound"), r.margin >= -r.tol, r.measured.ratio, bound);
            if let Some(c) = &r.comparator {
                b.check(format!("shape {i}: closed form"), c.agrees, c.rel_error, format!("rel. error <= {:e}", c.rel_tol));
            }
            if r.require_strict {
                let delta = r.refinement_delta.unwrap_or(0.0);
                b.check(format!("shape {i}: strict margin"), r.strict == Some(true), r.margin, format!("> 3 x {delta:e}"));
            }
            out.push(r);
        }
        out
    };
    b.file("plot-ratio.csv", two_column(["index", "ratio"], reports.iter().enumerate().map(|(i, r)| (i as f64, r.measured.ratio)))?);
    b.detail("reports", &reports)
}

fn run_optimize(b: &mut Builder, m: &Arc<ManifoldBackend>, o: &OptimizeSetup, seed: u64) -> Result<(), Error> {
    let init = o.init.build(m.clone(), o.vertices)?;
    let params = ShapeParams { seed, ..o.params.clone() };
    if let Some(c) = &o.constraint_ball {
        let center = Point::new(c.center[0], c.center[1]);
        let run = verify::constrained_run(o.volume, init, center, c.radius, &params, c.tolerances)?;
        if let Some(cmp) = &run.comparator {
            b.check("perimeter matches the volume-V ball", cmp.agrees, cmp.rel_error, format!("rel. error <= {:e}", cmp.rel_tol));
        }
        let var_ok = run.curvature.free_vertices == 0 || run.curvature.free_variance <= c.tolerances.curvature_variance;
        b.check(
            "curvature constant off the contact set",
            var_ok,
            run.curvature.free_variance,
            format!("variance <= {:e}", c.tolerances.curvature_variance),
        );
        b.check("volume projections within the perimeter bound", run.projections_within_bound, run.max_measured_c1, "measured C1 finite");
        if let Some(h) = &run.obstacle {
            b.check("obstacle hand-off", h.pass, h.max_deviation, "deviation, residual and ellipticity within bounds");
        }
        return b.detail("run", &run);
    }
    let d = shapeopt::minimize(o.volume, init, &params)?;
    let ratio = d.state.ratio()?;
    let last = d.trace.last().map_or(0, |r| r.iteration);
    b.check("iterations within budget", last <= params.max_iterations, last as f64, format!("<= {}", params.max_iterations));
    if let Some(max) = o.max_ratio {
        b.check("final ratio", ratio < max, ratio, format!("< {max}"));
    }
    if o.require_monotone {
        b.check("monotone descent", d.is_monotone(), d.state.functional_value, "functional never increases");
    }
    b.check("volume projections within the perimeter bound", d.projections_within_bound, d.max_measured_c1, "measured C1 finite");
    let ball = m.ball_with_volume(&d.state.ball.center, o.volume)?;
    if let Some(tol) = o.ball_rel_tol {
        let c = Comparator::new("volume-V metric ball", ball.ratio(), ratio, tol);
        b.check("final ratio matches the metric ball", c.agrees, c.rel_error, format!("rel. error <= {tol:e}"));
        b.detail("comparator", &c)?;
    }
    if let Some(hp) = &o.handoff {
        let h = verify::obstacle_handoff(&d.state, hp)?;
        b.check("obstacle hand-off", h.pass, h.max_deviation, "deviation, residual and ellipticity within bounds");
        b.detail("handoff", &h)?;
    }
    b.file("trace.csv", d.trace_csv()?);
    b.file("boundary.csv", d.state.region.diagnostics_csv()?);
    b.file("plot-functional.csv", two_column(["iteration", "functional"], d.trace.iter().map(|r| (r.iteration as f64, r.functional)))?);
    b.detail("ratio", ratio)?;
    b.detail("ball_ratio", ball.ratio())?;
    b.detail("rad", d.state.ball.radius)?;
    b.detail("H0", d.state.multiplier_h0)?;
    b.detail("termination", d.termination)?;
    b.detail("iterations", last)?;
    b.detail("max_measured_c1", d.max_measured_c1)
}

fn run_obstacle(b: &mut Builder, o: &ObstacleSetup) -> Result<(), Error> {
    match o {
        ObstacleSetup::OneDClosedForm { a, cells, order_band, residual_tol, cq_target, cq_rel_tol, min_third_growth, solver } => {
            let mut sols = Vec::with_capacity(cells.len());
            let mut errors = Vec::with_capacity(cells.len());
            for &n in cells {
                let sol = obstacle::solve_vi(&obstacle::one_d_problem(n, *a, *solver)?)?;
                errors.push(obstacle::one_d_error(&sol, *a));
                sols.push(sol);
            }
            for (i, w) in errors.windows(2).enumerate() {
                let q = w[0] / w[1];
                let band = format!("in [{}, {}]", order_band[0], order_band[1]);
                b.check(format!("error ratio N={} / N={}", cells[i], cells[i + 1]), q >= order_band[0] && q <= order_band[1], q, band);
            }
            let worst = sols.iter().map(|s| s.diagnostics.complementarity_residual).fold(0.0, f64::max);
            b.check("complementarity residual", worst < *residual_tol, worst, format!("< {residual_tol:e}"));
            let finest = sols.last().unwrap();
            let cq = obstacle::quadratic_growth(finest)?.global;
            b.check(
                "quadratic-growth constant",
                ((cq - cq_target) / cq_target).abs() <= *cq_rel_tol,
                cq,
                format!("{cq_target} within {cq_rel_tol}"),
            );
            let rep = obstacle::refinement_report(&sols[sols.len() - 2], finest);
            let ratio = rep.fine.second_difference / rep.coarse.second_difference;
            b.check("second differences bounded across refinement", rep.bounded, ratio, "within a factor 2");
            b.check(
                "third differences grow",
                rep.third_difference_growth >= *min_third_growth,
                rep.third_difference_growth,
                format!(">= {min_third_growth}"),
            );
            b.file("solution.csv", finest.to_csv()?);
            b.file("plot-u.csv", two_column(["x", "u"], (0..finest.u.len()).map(|k| (finest.chart().coords(k)[0], finest.u[k])))?);
            b.file("plot-error.csv", two_column(["h", "error"], cells.iter().zip(&errors).map(|(&n, &e)| (1.0 / n as f64, e)))?);
            b.detail("errors", &errors)?;
            b.detail("quadratic_constant", cq)?;
            b.detail("refinement", rep)?;
            b.detail("diagnostics", &finest.diagnostics)
        }
        ObstacleSetup::SphericalCap { obstacle_radius, half_width, cells, clearance, h0, residual_tol, solver } => {
            let r = *obstacle_radius;
            let cap = move |x: &[f64]| r - (r * r - x.iter().map(|t| t * t).sum::<f64>()).sqrt();
            let chart = GraphChart::flat(2, *cells, *half_width)?;
            let c = *clearance;
            let p = ObstacleProblem::from_fns(chart, OperatorModel::Quasilinear, cap, move |x| cap(x) + c, *h0, *solver)?;
            let sol = obstacle::solve_vi(&p)?;
            let ell = obstacle::ellipticity(&p, &sol.u)?;
            let res = sol.diagnostics.complementarity_residual;
            let interior = sol.chart().interior().count();
            b.check("ellipticity Id/2 <= c <= 2 Id", ell.holds, ell.min_eigenvalue, "eigenvalues in [0.5, 2]");
            b.check("complementarity residual", res < *residual_tol, res, format!("< {residual_tol:e}"));
            b.check(
                "gradient within the ellipticity regime",
                sol.diagnostics.gradient_within_bound,
                sol.diagnostics.max_gradient,
                format!("<= {}", obstacle::DELTA0),
            );
            let cc = sol.contact_count();
            b.check("contact set is partial", cc > 0 && cc < interior, cc as f64, format!("in (0, {interior})"));
            b.file("solution.csv", sol.to_csv()?);
            let side = sol.chart().side();
            let mid = side / 2;
            let row = (0..side).map(|i| sol.chart().node(i, mid));
            b.file("plot-u.csv", two_column(["x", "u"], row.map(|k| (sol.chart().coords(k)[0], sol.u[k])))?);
            b.detail("ellipticity", ell)?;
            b.detail("contact_nodes", cc)?;
            b.detail("diagnostics", &sol.diagnostics)
        }
    }
}

fn run_catalog(b: &mut Builder, c: &CatalogSetup) -> Result<(), Error> {
    let t0 = catalog::critical_catenoid_t0();
    let residual = (t0 * t0.tanh() - 1.0).abs();
    b.check("T0 = coth T0", residual < 1e-10, residual, "residual < 1e-10");
    let crit = TruncatedCatenoid::critical();
    let eq = (crit.ratio() - 1.0).abs();
    b.check("rho(T0) = 1", eq <= c.equality_tol, crit.ratio(), format!("within {:e}", c.equality_tol));
    let rows = catalog::catenoid_sweep(c.lo, c.hi, c.samples, (c.mesh[0], c.mesh[1]))?;
    let rho: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let step = (c.hi - c.lo) / (c.samples - 1) as f64;
    let peak = catalog::unique_maximum(&rho);
    let at = peak.map_or(f64::NAN, |i| rows[i].t);
    b.check("unique maximum of rho at T0", peak.is_some() && (at - t0).abs() <= step, at, format!("within {step} of {t0}"));
    let away = rows.iter().filter(|r| (r.t - t0).abs() > c.exclusion).map(|r| r.rho).fold(f64::NEG_INFINITY, f64::max);
    b.check(format!("rho < 1 - gap for |T - T0| > {}", c.exclusion), away < 1.0 - c.gap, away, format!("< 1 - {:e}", c.gap));
    let worst = rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
    b.check("mesh agrees with closed forms", worst < c.discrepancy_tol, worst, format!("< {:e}", c.discrepancy_tol));
    let defect = crit.conormal_defect(64);
    b.check("conormal radial at T0", defect < 1e-3, defect, "< 1e-3 rad");
    let mobius = MobiusBand::critical();
    b.check(
        "Mobius band ratio at its critical height",
        (mobius.ratio() - 1.0).abs() <= c.equality_tol,
        mobius.ratio(),
        format!("within {:e}", c.equality_tol),
    );
    let disk = catalog::equatorial_disk_check(4096, Point::zeros())?;
    b.check("equatorial disk ratio", (disk.ratio - 1.0).abs() < 1e-6, disk.ratio, "within 1e-6 of 1");
    b.file("sweep.csv", catalog::sweep_csv(&rows)?);
    b.file("plot-rho.csv", two_column(["T", "rho"], rows.iter().map(|r| (r.t, r.rho)))?);
    b.detail("T0", t0)?;
    b.detail("rho_0.8", catalog::minimal_ratio(0.8))?;
    b.detail("mobius_T0", mobius.t)?;
    b.detail("max_discrepancy", worst)
}

fn run_scan(b: &mut Builder, m: &Arc<ManifoldBackend>, s: &ScanSetup) -> Result<(), Error> {
    let r = verify::infimum_scan(m, s.volume, &s.distances, s.tol, s.gap_tol)?;
    for c in &r.checks {
        b.check(c.name.clone(), c.pass, r.last_gap, format!("{:?}", r.expectation));
    }
    b.file("plot-f.csv", r.plot_csv()?);
    b.detail("scan", &r)
}

/// Outcome class of one config in a suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Failed under tightened tolerances on a config marked
    /// `discretization_limited`; not counted as a failure.
    Flagged,
    /// The config could not be loaded or run.
    Error,
}

impl Status {
    pub fn of(report: &RunReport) -> Self {
        if report.pass {
            Status::Pass
        } else if report.discretization_limited && report.tol_scale < 1.0 {
            Status::Flagged
        } else {
            Status::Fail
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Flagged => "FLAGGED",
            Status::Error => "ERROR",
        }
    }
}

/// One line of the suite summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub name: String,
    pub kind: String,
    pub status: Status,
    pub checks_passed: usize,
    pub checks: usize,
    pub claim: String,
}

impl SummaryRow {
    pub fn from_report(r: &RunReport) -> Self {
        SummaryRow {
            name: r.name.clone(),
            kind: r.kind.clone(),
            status: Status::of(r),
            checks_passed: r.checks.iter().filter(|c| c.pass).count(),
            checks: r.checks.len(),
            claim: r.claim.clone(),
        }
    }
}

/// Summary as CSV, one row per config.
pub fn summary_csv(rows: &[SummaryRow]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(crate::region::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Config files (`*.json`) in `dir`, sorted by file name.
pub fn list_configs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect();
    v.sort();
    Ok(v)
}

#[cfg(test)]
mod tests;

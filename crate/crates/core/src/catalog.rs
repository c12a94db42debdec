//! Free-boundary minimal surfaces in a ball and the ratio
//! `2·Area/(rad·Length)` that measures how far a minimal surface is from the
//! equality case.
//!
//! Closed forms, derived from the parametrizations:
//!
//! * Catenoid `φ(t, θ) = (cosh t cos θ, cosh t sin θ, t)`:
//!   `φ_t = (sinh t cos θ, sinh t sin θ, 1)`, `φ_θ = (−cosh t sin θ, cosh t cos θ, 0)`,
//!   so `|φ_t|² = |φ_θ|² = cosh²t`, `φ_t·φ_θ = 0` and the area element is
//!   `cosh²t`. On `[−T, T] × S¹`: area `2π(T + sinh T cosh T)`, boundary
//!   length `4π cosh T`, farthest distance from the origin `√(cosh²T + T²)`.
//!   The conormal `φ_t` is radial at `t = T` iff `tanh T = 1/T`.
//! * Möbius band `φ(t, θ) = (2 sinh t cos θ, 2 sinh t sin θ, cosh 2t cos 2θ, cosh 2t sin 2θ)`
//!   with `(t, θ) ~ (−t, θ + π)`: conformal with `|φ_t|² = |φ_θ|² = 4(sinh²t + cosh²2t)`.
//!   One fundamental domain is `[0, T] × S¹`: area `2π(sinh 2T + sinh 4T/2)`,
//!   a single boundary circle of length `4π√(sinh²T + cosh²2T)`, farthest
//!   distance `√(4 sinh²T + cosh²2T)`. The conormal is radial iff
//!   `coth T = 2 tanh 2T`.
//! * Flat disks: ratio 1; annuli `r < |x| < 1`: ratio `1 − r`.

use std::sync::Arc;

use nalgebra::{SVector, Vector3, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{EmbeddedKind, ManifoldBackend, Point};
use crate::meb::{self, DEFAULT_SEED};
use crate::numeric::bisect;
use crate::region::Region;

/// Bisection tolerance for the critical truncations.
const ROOT_TOL: f64 = 1e-12;

/// Unique positive root of `t = coth t`, bracketed on `[1, 1.5]`.
pub fn critical_catenoid_t0() -> f64 {
    bisect(|t| t - 1.0 / t.tanh(), 1.0, 1.5, ROOT_TOL).expect("t − coth t changes sign on [1, 1.5]")
}

/// Unique positive root of `coth t = 2 tanh 2t`, bracketed on `[0.1, 2]`.
pub fn critical_mobius_t0() -> f64 {
    bisect(|t| 1.0 / t.tanh() - 2.0 * (2.0 * t).tanh(), 0.1, 2.0, ROOT_TOL).expect("coth t − 2 tanh 2t changes sign on [0.1, 2]")
}

/// `ρ(T) = 2·Area/(rad·Length)` of the catenoid truncated at `|t| ≤ T`.
pub fn minimal_ratio(t: f64) -> f64 {
    let (s, c) = (t.sinh(), t.cosh());
    (t + s * c) / (c * (c * c + t * t).sqrt())
}

/// Area, boundary length and ambient radius measured on a sampled mesh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeshMeasures {
    pub area: f64,
    pub length: f64,
    pub radius: f64,
}

impl MeshMeasures {
    pub fn ratio(&self) -> f64 {
        2.0 * self.area / (self.radius * self.length)
    }
}

/// A parametrized surface `(t, θ) ↦ ℝ^D` over `[t_lo, T] × [0, 2π)` whose
/// boundary is the circle `t = T` (and `t = t_lo` when `two_sided`).
trait ParamSurface<const D: usize> {
    fn point(&self, t: f64, theta: f64) -> SVector<f64, D>;
    fn partials(&self, t: f64, theta: f64) -> (SVector<f64, D>, SVector<f64, D>);
    fn t_range(&self) -> (f64, f64);
    fn two_sided(&self) -> bool;

    /// Area by Simpson in `t` and the periodic trapezoid rule in `θ` of the
    /// Gram determinant, boundary length as inscribed polygons, radius by
    /// Welzl on all mesh vertices.
    fn mesh_measures(&self, n_theta: usize, n_t: usize) -> MeshMeasures {
        let n_t = n_t + n_t % 2;
        let (lo, hi) = self.t_range();
        let ht = (hi - lo) / n_t as f64;
        let hth = std::f64::consts::TAU / n_theta as f64;
        let mut area = 0.0;
        let mut cloud = Vec::with_capacity((n_t + 1) * n_theta);
        for i in 0..=n_t {
            let t = lo + i as f64 * ht;
            let w = if i == 0 || i == n_t {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let mut ring = 0.0;
            for j in 0..n_theta {
                let th = j as f64 * hth;
                let (a, b) = self.partials(t, th);
                ring += (a.norm_squared() * b.norm_squared() - a.dot(&b).powi(2)).max(0.0).sqrt();
                cloud.push(self.point(t, th));
            }
            area += w * ring * hth;
        }
        area *= ht / 3.0;
        let circle = |t: f64| -> f64 {
            (0..n_theta)
                .map(|j| {
                    let a = self.point(t, j as f64 * hth);
                    let b = self.point(t, (j + 1) as f64 * hth);
                    (b - a).norm()
                })
                .sum()
        };
        let mut length = circle(hi);
        if self.two_sided() {
            length += circle(lo);
        }
        let radius = meb::welzl::<D>(&cloud, DEFAULT_SEED).radius;
        MeshMeasures { area, length, radius }
    }

    /// Largest angle between the outward conormal `±φ_t` and the radial
    /// direction at sampled boundary points.
    fn conormal_defect(&self, samples: usize) -> f64 {
        let (lo, hi) = self.t_range();
        let mut ends = vec![(hi, 1.0)];
        if self.two_sided() {
            ends.push((lo, -1.0));
        }
        let mut worst: f64 = 0.0;
        for (t, sign) in ends {
            for j in 0..samples {
                let th = std::f64::consts::TAU * j as f64 / samples as f64;
                let x = self.point(t, th);
                let eta = self.partials(t, th).0 * sign;
                let cos = (x.dot(&eta) / (x.norm() * eta.norm())).clamp(-1.0, 1.0);
                worst = worst.max(cos.acos());
            }
        }
        worst
    }
}

/// Catenoid truncated at `|t| ≤ T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncatedCatenoid {
    pub t: f64,
}

impl TruncatedCatenoid {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("catenoid half-height must be positive, got {t}")));
        }
        Ok(Self { t })
    }

    pub fn critical() -> Self {
        Self { t: critical_catenoid_t0() }
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::TAU * (self.t + self.t.sinh() * self.t.cosh())
    }

    pub fn boundary_length(&self) -> f64 {
        2.0 * std::f64::consts::TAU * self.t.cosh()
    }

    pub fn ambient_radius(&self) -> f64 {
        (self.t.cosh().powi(2) + self.t * self.t).sqrt()
    }

    pub fn ratio(&self) -> f64 {
        minimal_ratio(self.t)
    }

    pub fn point(&self, t: f64, theta: f64) -> Vector3<f64> {
        Vector3::new(t.cosh() * theta.cos(), t.cosh() * theta.sin(), t)
    }

    pub fn mesh_measures(&self, n_theta: usize, n_t: usize) -> MeshMeasures {
        ParamSurface::mesh_measures(self, n_theta, n_t)
    }

    pub fn conormal_defect(&self, samples: usize) -> f64 {
        ParamSurface::conormal_defect(self, samples)
    }
}

impl ParamSurface<3> for TruncatedCatenoid {
    fn point(&self, t: f64, theta: f64) -> Vector3<f64> {
        TruncatedCatenoid::point(self, t, theta)
    }

    fn partials(&self, t: f64, theta: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (s, c) = (t.sinh(), t.cosh());
        (Vector3::new(s * theta.cos(), s * theta.sin(), 1.0), Vector3::new(-c * theta.sin(), c * theta.cos(), 0.0))
    }

    fn t_range(&self) -> (f64, f64) {
        (-self.t, self.t)
    }

    fn two_sided(&self) -> bool {
        true
    }
}

/// Minimal Möbius band in ℝ⁴ truncated at `|t| ≤ T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MobiusBand {
    pub t: f64,
}

impl MobiusBand {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("Möbius half-height must be positive, got {t}")));
        }
        Ok(Self { t })
    }

    pub fn critical() -> Self {
        Self { t: critical_mobius_t0() }
    }

    pub fn point(&self, t: f64, theta: f64) -> Vector4<f64> {
        let (s, c2) = (t.sinh(), (2.0 * t).cosh());
        Vector4::new(2.0 * s * theta.cos(), 2.0 * s * theta.sin(), c2 * (2.0 * theta).cos(), c2 * (2.0 * theta).sin())
    }

    pub fn area(&self) -> f64 {
        let t = self.t;
        std::f64::consts::TAU * ((2.0 * t).sinh() + 0.5 * (4.0 * t).sinh())
    }

    pub fn boundary_length(&self) -> f64 {
        let t = self.t;
        2.0 * std::f64::consts::TAU * (t.sinh().powi(2) + (2.0 * t).cosh().powi(2)).sqrt()
    }

    pub fn ambient_radius(&self) -> f64 {
        let t = self.t;
        (4.0 * t.sinh().powi(2) + (2.0 * t).cosh().powi(2)).sqrt()
    }

    pub fn ratio(&self) -> f64 {
        2.0 * self.area() / (self.ambient_radius() * self.boundary_length())
    }

    pub fn mesh_measures(&self, n_theta: usize, n_t: usize) -> MeshMeasures {
        ParamSurface::mesh_measures(self, n_theta, n_t)
    }

    pub fn conormal_defect(&self, samples: usize) -> f64 {
        ParamSurface::conormal_defect(self, samples)
    }
}

impl ParamSurface<4> for MobiusBand {
    fn point(&self, t: f64, theta: f64) -> Vector4<f64> {
        MobiusBand::point(self, t, theta)
    }

    fn partials(&self, t: f64, theta: f64) -> (Vector4<f64>, Vector4<f64>) {
        let (s, c) = (t.sinh(), t.cosh());
        let (s2, c2) = ((2.0 * t).sinh(), (2.0 * t).cosh());
        let (a, b) = (theta.cos(), theta.sin());
        let (a2, b2) = ((2.0 * theta).cos(), (2.0 * theta).sin());
        (
            Vector4::new(2.0 * c * a, 2.0 * c * b, 2.0 * s2 * a2, 2.0 * s2 * b2),
            Vector4::new(-2.0 * s * b, 2.0 * s * a, -2.0 * c2 * b2, 2.0 * c2 * a2),
        )
    }

    // [0, T] × S¹ covers the band once.
    fn t_range(&self) -> (f64, f64) {
        (0.0, self.t)
    }

    fn two_sided(&self) -> bool {
        false
    }
}

/// One row of a catenoid sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub rho: f64,
    pub rho_mesh: f64,
    pub discrepancy: f64,
}

/// `ρ(T)` on `samples` evenly spaced `T ∈ [lo, hi]`, with mesh cross-checks.
pub fn catenoid_sweep(lo: f64, hi: f64, samples: usize, mesh: (usize, usize)) -> Result<Vec<SweepRow>> {
    if !(0.0 < lo && lo < hi) || samples < 2 {
        return Err(Error::InvalidInput(format!("bad sweep range [{lo}, {hi}] with {samples} samples")));
    }
    (0..samples)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let c = TruncatedCatenoid::new(t)?;
            let rho = c.ratio();
            let rho_mesh = c.mesh_measures(mesh.0, mesh.1).ratio();
            Ok(SweepRow { t, rho, rho_mesh, discrepancy: (rho - rho_mesh).abs() })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["T", "rho", "rho_mesh", "discrepancy"]).map_err(crate::region::csv_err)?;
    for r in rows {
        w.serialize((r.t, r.rho, r.rho_mesh, r.discrepancy)).map_err(crate::region::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Index of the strict maximum of a sampled sequence, if it is unique.
pub fn unique_maximum(values: &[f64]) -> Option<usize> {
    let peak = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?.0;
    values.iter().enumerate().all(|(i, &v)| i == peak || v < values[peak]).then_some(peak)
}

/// Flat disk and annulus measurements in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiskReport {
    pub area: f64,
    pub length: f64,
    pub radius: f64,
    pub ratio: f64,
}

/// Polygonal disk of radius 1 at `center`: `2·Area/(rad·Length)`.
pub fn equatorial_disk_check(n: usize, center: Point) -> Result<DiskReport> {
    let disk = Region::regular_polygon(n, 1.0, center)?;
    let (area, length) = (disk.volume()?, disk.perimeter()?);
    let radius = meb::rad(&disk)?.radius;
    Ok(DiskReport { area, length, radius, ratio: 2.0 * area / (radius * length) })
}

/// Unit disk minus the concentric disk of radius `hole`, both as `n`-gons.
pub fn annulus_check(n: usize, hole: f64) -> Result<DiskReport> {
    if !(0.0 < hole && hole < 1.0) {
        return Err(Error::InvalidInput(format!("annulus hole must lie in (0, 1), got {hole}")));
    }
    let outer = Region::regular_polygon(n, 1.0, Point::zeros())?;
    let inner = Region::regular_polygon(n, hole, Point::zeros())?;
    let area = outer.volume()? - inner.volume()?;
    let length = outer.perimeter()? + inner.perimeter()?;
    let radius = meb::rad(&outer)?.radius;
    Ok(DiskReport { area, length, radius, ratio: 2.0 * area / (radius * length) })
}

/// Sampled comparison of intrinsic and ambient radii of a truncated
/// catenoid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntrinsicRadiusSample {
    pub ambient: f64,
    /// `min` over sampled centers of the `max` surface distance to sampled
    /// points.
    pub intrinsic: f64,
    pub centers: usize,
    pub points: usize,
}

/// Intrinsic distances come from geodesic shooting in the `(t, θ)` chart of
/// the catenoid (metric `cosh²t·I`). By rotation symmetry centers are taken
/// at `θ = 0`, and by reflection symmetry targets at `θ ∈ [0, π]`.
pub fn intrinsic_radius_sample(cat: &TruncatedCatenoid, centers: usize, rings: usize, per_ring: usize) -> Result<IntrinsicRadiusSample> {
    let m = Arc::new(ManifoldBackend::embedded(EmbeddedKind::Catenoid));
    let t = cat.t;
    let mut targets = Vec::new();
    for i in 0..rings {
        let ti = -t + 2.0 * t * i as f64 / (rings - 1) as f64;
        for j in 0..per_ring {
            targets.push(Point::new(ti, std::f64::consts::PI * j as f64 / (per_ring - 1) as f64));
        }
    }
    let mut best = f64::INFINITY;
    for c in 0..centers {
        let tc = if centers == 1 { 0.0 } else { -t + 2.0 * t * c as f64 / (centers - 1) as f64 };
        let center = Point::new(tc, 0.0);
        let mut ecc: f64 = 0.0;
        for p in &targets {
            if (p - center).norm() > 0.0 {
                ecc = ecc.max(m.distance(&center, p)?);
            }
        }
        best = best.min(ecc);
    }
    Ok(IntrinsicRadiusSample { ambient: cat.ambient_radius(), intrinsic: best, centers, points: targets.len() })
}

//! Closed polygonal regions in a backend chart.
//!
//! Vertices are ordered counterclockwise; edge `i` joins vertex `i` to vertex
//! `i + 1`. Volumes integrate the area density over the chart polygon, edge
//! lengths are geodesic (or metric chord lengths for short edges on backends
//! without a closed-form distance). Gradients are covectors in chart
//! coordinates and are the exact derivatives of the discrete measures.

use std::cell::OnceCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BackendSpec, EdgeGeometry, ManifoldBackend, Point, Vec2};
use crate::meb;
use crate::numeric::GAUSS8;

/// Minimum number of vertices of a region.
pub const MIN_VERTICES: usize = 8;

#[derive(Clone, Debug)]
struct Boundary {
    edges: Vec<EdgeGeometry>,
    perimeter: f64,
}

#[derive(Clone, Debug)]
pub struct Region {
    vertices: Vec<Point>,
    backend: Arc<ManifoldBackend>,
    volume: OnceCell<f64>,
    boundary: OnceCell<Boundary>,
}

impl Region {
    /// Validate and wrap a counterclockwise simple polygon.
    pub fn new(backend: Arc<ManifoldBackend>, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < MIN_VERTICES {
            return Err(Error::InvalidRegion(format!("need at least {MIN_VERTICES} vertices, got {}", vertices.len())));
        }
        if let Some(p) = vertices.iter().find(|p| !backend.contains(p)) {
            return Err(Error::OutOfChart(format!("vertex ({}, {})", p.x, p.y)));
        }
        if signed_chart_area(&vertices) <= 0.0 {
            return Err(Error::InvalidRegion("polygon is not counterclockwise".into()));
        }
        if !is_simple(&vertices) {
            return Err(Error::InvalidRegion("polygon self-intersects".into()));
        }
        Ok(Region { vertices, backend, volume: OnceCell::new(), boundary: OnceCell::new() })
    }

    /// Polygon with vertices `f(2πk/n)`, `k = 0..n`.
    pub fn from_fn(backend: Arc<ManifoldBackend>, n: usize, f: impl Fn(f64) -> Point) -> Result<Self> {
        let pts = (0..n).map(|k| f(2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect();
        Self::new(backend, pts)
    }

    /// Regular Euclidean polygon inscribed in the circle of radius `radius`.
    pub fn regular_polygon(n: usize, radius: f64, center: Point) -> Result<Self> {
        Self::from_fn(Arc::new(ManifoldBackend::euclidean()), n, |t| center + Vec2::new(t.cos(), t.sin()) * radius)
    }

    /// Ellipse with semi-axes `a` (along x) and `b`.
    pub fn ellipse(backend: Arc<ManifoldBackend>, n: usize, center: Point, a: f64, b: f64) -> Result<Self> {
        Self::from_fn(backend, n, |t| center + Vec2::new(a * t.cos(), b * t.sin()))
    }

    /// Polygon inscribed in the geodesic circle of radius `r` about `center`,
    /// vertices placed by the exponential map at equal angles.
    pub fn geodesic_ball(backend: Arc<ManifoldBackend>, center: Point, r: f64, n: usize) -> Result<Self> {
        Self::geodesic_star(backend, center, n, |_| r)
    }

    /// Star-shaped polygon whose vertex at angle `θ` (measured in an
    /// orthonormal frame at `center`) lies at geodesic distance `radius(θ)`.
    pub fn geodesic_star(backend: Arc<ManifoldBackend>, center: Point, n: usize, radius: impl Fn(f64) -> f64) -> Result<Self> {
        let g = backend.metric(&center);
        let l11 = g[(0, 0)].sqrt();
        let l21 = g[(1, 0)] / l11;
        let l22 = (g[(1, 1)] - l21 * l21).sqrt();
        let mut pts = Vec::with_capacity(n);
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (s, c) = theta.sin_cos();
            let u2 = s / l22;
            let u1 = (c - l21 * u2) / l11;
            pts.push(backend.exp_map(&center, &(Vec2::new(u1, u2) * radius(theta)))?);
        }
        Self::new(backend, pts)
    }

    /// Same backend, new vertices.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        Self::new(self.backend.clone(), vertices)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn backend(&self) -> &ManifoldBackend {
        &self.backend
    }

    pub fn backend_arc(&self) -> &Arc<ManifoldBackend> {
        &self.backend
    }

    fn boundary(&self) -> Result<&Boundary> {
        if let Some(b) = self.boundary.get() {
            return Ok(b);
        }
        let n = self.len();
        let mut edges = Vec::with_capacity(n);
        for i in 0..n {
            edges.push(self.backend.boundary_edge(&self.vertices[i], &self.vertices[(i + 1) % n])?);
        }
        let perimeter = edges.iter().map(|e| e.length).sum();
        Ok(self.boundary.get_or_init(|| Boundary { edges, perimeter }))
    }

    /// Area of the region.
    pub fn volume(&self) -> Result<f64> {
        if let Some(v) = self.volume.get() {
            return Ok(*v);
        }
        let v = if self.backend.is_flat() {
            signed_chart_area(&self.vertices)
        } else {
            let n = self.len();
            let mut acc = 0.0;
            for i in 0..n {
                let p = self.vertices[i];
                let d = self.vertices[(i + 1) % n] - p;
                let nrm = Vec2::new(d.y, -d.x);
                acc += GAUSS8.iter().map(|&(s, w)| w * self.backend.area_flux(&(p + d * s)).dot(&nrm)).sum::<f64>();
            }
            acc
        };
        let p = self.perimeter()?;
        if !(v > 1e-12 * p * p) {
            return Err(Error::DegeneratePolygon(format!("area {v:e} against perimeter {p:e}")));
        }
        Ok(*self.volume.get_or_init(|| v))
    }

    pub fn perimeter(&self) -> Result<f64> {
        Ok(self.boundary()?.perimeter)
    }

    /// Geometry of edge `i` (from vertex `i` to `i + 1`).
    pub fn edges(&self) -> Result<&[EdgeGeometry]> {
        Ok(&self.boundary()?.edges)
    }

    /// Half the sum of the two edges adjacent to each vertex.
    pub fn dual_lengths(&self) -> Result<Vec<f64>> {
        let e = self.edges()?;
        let n = e.len();
        Ok((0..n).map(|i| 0.5 * (e[(i + n - 1) % n].length + e[i].length)).collect())
    }

    /// Signed geodesic turning angle at each vertex.
    pub fn turning_angles(&self) -> Result<Vec<f64>> {
        let e = self.edges()?;
        let n = e.len();
        Ok((0..n)
            .map(|i| {
                let incoming = e[(i + n - 1) % n].tangent_end;
                let outgoing = e[i].tangent_start;
                self.backend.signed_angle(&self.vertices[i], &incoming, &outgoing)
            })
            .collect())
    }

    /// Turning angle over dual length; positive where the boundary bends
    /// toward the inward normal.
    pub fn discrete_mean_curvature(&self) -> Result<Vec<f64>> {
        let t = self.turning_angles()?;
        let l = self.dual_lengths()?;
        Ok(t.iter().zip(&l).map(|(a, b)| a / b).collect())
    }

    /// Metric-unit inward normals (left of the averaged tangent).
    pub fn inward_normals(&self) -> Result<Vec<Vec2>> {
        let e = self.edges()?;
        let n = e.len();
        Ok((0..n)
            .map(|i| {
                let p = &self.vertices[i];
                let t = e[(i + n - 1) % n].tangent_end + e[i].tangent_start;
                let nv = self.backend.rotate_quarter(p, &t);
                let len = self.backend.norm(p, &nv);
                if len > 0.0 {
                    nv / len
                } else {
                    nv
                }
            })
            .collect())
    }

    /// Exact gradient of the discrete perimeter.
    pub fn perimeter_gradient(&self) -> Result<Vec<Vec2>> {
        let e = self.edges()?;
        let n = e.len();
        Ok((0..n).map(|i| e[(i + n - 1) % n].grad_q + e[i].grad_p).collect())
    }

    /// Exact gradient of the discrete volume (Reynolds transport along each
    /// chart-straight edge).
    pub fn volume_gradient(&self) -> Vec<Vec2> {
        let n = self.len();
        let mut g = vec![Vec2::zeros(); n];
        for i in 0..n {
            let j = (i + 1) % n;
            let p = self.vertices[i];
            let d = self.vertices[j] - p;
            let nrm = Vec2::new(d.y, -d.x);
            let (mut a, mut b) = (0.0, 0.0);
            if self.backend.is_flat() {
                a = 0.5;
                b = 0.5;
            } else {
                for &(s, w) in GAUSS8.iter() {
                    let rho = self.backend.area_density(&(p + d * s));
                    a += w * rho * (1.0 - s);
                    b += w * rho * s;
                }
            }
            g[i] += nrm * a;
            g[j] += nrm * b;
        }
        g
    }

    /// Vertices in 3-space for backends with an embedding.
    pub fn embedded_vertices(&self) -> Option<Vec<nalgebra::Vector3<f64>>> {
        self.vertices.iter().map(|p| self.backend.embed(p)).collect()
    }

    /// Serializable snapshot.
    pub fn to_file(&self) -> RegionFile {
        RegionFile { backend: self.backend.spec().clone(), vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect() }
    }

    /// Per-vertex diagnostics as CSV: `x,y,nx,ny,curvature`.
    pub fn diagnostics_csv(&self) -> Result<String> {
        let normals = self.inward_normals()?;
        let curv = self.discrete_mean_curvature()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y", "nx", "ny", "curvature"]).map_err(csv_err)?;
        for ((p, nv), k) in self.vertices.iter().zip(&normals).zip(&curv) {
            w.serialize((p.x, p.y, nv.x, nv.y, *k)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// JSON form of a region: backend descriptor plus `[x, y]` chart vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionFile {
    pub backend: BackendSpec,
    pub vertices: Vec<[f64; 2]>,
}

impl RegionFile {
    pub fn into_region(self, base_dir: &std::path::Path) -> Result<Region> {
        let b = ManifoldBackend::from_spec(&self.backend, base_dir)?;
        Region::new(Arc::new(b), self.vertices.iter().map(|v| Point::new(v[0], v[1])).collect())
    }
}

/// Shoelace area of the chart polygon.
pub fn signed_chart_area(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (v[i], v[(i + 1) % n]);
        s += p.x * q.y - p.y * q.x;
    }
    0.5 * s
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: &Point, b: &Point, p: &Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Whether the closed polygon has no self-intersections. Edges are swept in
/// order of their left end so only x-overlapping pairs are tested.
pub fn is_simple(v: &[Point]) -> bool {
    let n = v.len();
    if n < 3 {
        return false;
    }
    if (0..n).any(|i| v[i] == v[(i + 1) % n]) {
        return false;
    }
    let mut order: Vec<usize> = (0..n).collect();
    let xmin = |i: usize| v[i].x.min(v[(i + 1) % n].x);
    let xmax = |i: usize| v[i].x.max(v[(i + 1) % n].x);
    order.sort_by(|&a, &b| xmin(a).total_cmp(&xmin(b)));
    for (k, &i) in order.iter().enumerate() {
        let hi = xmax(i);
        for &j in &order[k + 1..] {
            if xmin(j) > hi {
                break;
            }
            let adjacent = j == (i + 1) % n || i == (j + 1) % n;
            if adjacent {
                // Adjacent edges may only share their common vertex: reject
                // a fold back onto the previous edge.
                let (a, s, b) = if j == (i + 1) % n { (i, j, (j + 1) % n) } else { (j, i, (i + 1) % n) };
                if orient(&v[a], &v[s], &v[b]) == 0.0 && (v[a] - v[s]).dot(&(v[b] - v[s])) > 0.0 {
                    return false;
                }
                continue;
            }
            if segments_intersect(&v[i], &v[(i + 1) % n], &v[j], &v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Outcome of a lower-semicontinuity check of the radius along a sequence.
#[derive(Clone, Debug, Serialize)]
pub struct LscReport {
    pub radii: Vec<f64>,
    pub limit_radius: f64,
    pub tail_min: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Radius of every element and of the limit; checks `rad(limit) ≤ min` over
/// the second half of the sequence, up to `tolerance`.
pub fn is_lower_semicontinuity_witness(sequence: &[Region], limit: &Region, tolerance: f64) -> Result<LscReport> {
    let radii = sequence.iter().map(|r| meb::rad(r).map(|b| b.radius)).collect::<Result<Vec<_>>>()?;
    let limit_radius = meb::rad(limit)?.radius;
    let tail = &radii[radii.len() / 2..];
    let tail_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LscReport { holds: limit_radius <= tail_min + tolerance, radii, limit_radius, tail_min, tolerance })
}

//! Extrinsic radius: smallest enclosing balls.
//!
//! In Euclidean space the exact ball comes from Welzl's move-to-front
//! algorithm (dimensions 2 and 3). On curved backends the geodesic 1-center
//! is found by annealed log-sum-exp descent followed by a minimax polish
//! along the minimum-norm element of the active gradients.

use nalgebra::{DMatrix, DVector, SVector, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldBackend, Point, Vec2};
use crate::region::Region;

/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Relative tolerance for membership in the attainment set.
pub const ATTAIN_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnclosingBall {
    pub center: Point,
    pub radius: f64,
    /// Indices of points at distance ≥ `radius·(1 − ATTAIN_TOL)`.
    pub attainment: Vec<usize>,
    /// Radius of the vertex cloud in the ambient 3-space, for embedded
    /// surfaces.
    pub ambient_radius: Option<f64>,
}

/// Euclidean ball in dimension `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball<const D: usize> {
    pub center: SVector<f64, D>,
    pub radius: f64,
}

impl<const D: usize> Ball<D> {
    fn contains(&self, p: &SVector<f64, D>) -> bool {
        if self.radius < 0.0 {
            return false;
        }
        let d2 = (p - self.center).norm_squared();
        d2 <= self.radius * self.radius * (1.0 + 1e-12) + 1e-300
    }
}

/// Smallest ball through all points of `support` (at most `D + 1` points in
/// general position). Degenerate supports fall back to their farthest pair.
fn circumball<const D: usize>(support: &[SVector<f64, D>]) -> Ball<D> {
    match support.len() {
        0 => Ball { center: SVector::zeros(), radius: -1.0 },
        1 => Ball { center: support[0], radius: 0.0 },
        _ => {
            let p0 = support[0];
            let m = support.len() - 1;
            let q: Vec<SVector<f64, D>> = support[1..].iter().map(|p| p - p0).collect();
            let mut a = DMatrix::zeros(m, m);
            let mut b = DVector::zeros(m);
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] = 2.0 * q[i].dot(&q[j]);
                }
                b[i] = q[i].norm_squared();
            }
            let scale = a.amax();
            let solved = a.clone().lu().solve(&b).filter(|_| {
                let det = a.determinant().abs();
                det > 1e-14 * scale.powi(m as i32)
            });
            match solved {
                Some(lambda) => {
                    let mut c = p0;
                    for i in 0..m {
                        c += q[i] * lambda[i];
                    }
                    let radius = support.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                    Ball { center: c, radius }
                }
                None => {
                    let mut best = (0.0, 0, 0);
                    for i in 0..support.len() {
                        for j in i + 1..support.len() {
                            let d = (support[i] - support[j]).norm();
                            if d > best.0 {
                                best = (d, i, j);
                            }
                        }
                    }
                    Ball { center: (support[best.1] + support[best.2]) * 0.5, radius: 0.5 * best.0 }
                }
            }
        }
    }
}

fn mtf<const D: usize>(list: &mut Vec<SVector<f64, D>>, end: usize, support: &mut Vec<SVector<f64, D>>) -> Ball<D> {
    let mut ball = circumball(support);
    if support.len() == D + 1 {
        return ball;
    }
    let mut i = 0;
    while i < end {
        let p = list[i];
        if !ball.contains(&p) {
            support.push(p);
            ball = mtf(list, i, support);
            support.pop();
            // move to front
            list[..=i].rotate_right(1);
        }
        i += 1;
    }
    ball
}

/// Exact smallest enclosing ball of Euclidean points in dimension `D`.
/// The input order is shuffled with `seed` before the move-to-front pass.
pub fn welzl<const D: usize>(points: &[SVector<f64, D>], seed: u64) -> Ball<D> {
    assert!(!points.is_empty(), "welzl needs at least one point");
    let mut list = points.to_vec();
    list.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut support = Vec::with_capacity(D + 1);
    let n = list.len();
    let mut ball = mtf(&mut list, n, &mut support);
    // Guard against rounding in the support solve: one more pass over all
    // points with the final ball.
    if points.iter().any(|p| !ball.contains(p)) {
        ball = mtf(&mut list, points.len(), &mut support);
    }
    ball
}

/// Euclidean enclosing ball of chart points as an [`EnclosingBall`].
pub fn welzl_points(points: &[Point], seed: u64) -> EnclosingBall {
    let b = welzl::<2>(points, seed);
    let attainment = attainment_set(points.iter().map(|p| (p - b.center).norm()), b.radius);
    EnclosingBall { center: b.center, radius: b.radius, attainment, ambient_radius: None }
}

fn attainment_set(d: impl Iterator<Item = f64>, radius: f64) -> Vec<usize> {
    let cut = radius * (1.0 - ATTAIN_TOL);
    d.enumerate().filter(|(_, x)| *x >= cut).map(|(i, _)| i).collect()
}

/// Extrinsic radius of a region, with the default shuffle seed.
pub fn rad(region: &Region) -> Result<EnclosingBall> {
    rad_from(region, None, DEFAULT_SEED)
}

/// Extrinsic radius; `warm_start` seeds the curved-backend solver.
pub fn rad_from(region: &Region, warm_start: Option<Point>, seed: u64) -> Result<EnclosingBall> {
    let m = region.backend();
    let mut ball =
        if m.is_flat() { welzl_points(region.vertices(), seed) } else { geodesic_one_center_from(region.vertices(), m, warm_start)? };
    if matches!(m.kind(), crate::geometry::BackendKind::EmbeddedSurface(_)) {
        if let Some(cloud) = region.embedded_vertices() {
            ball.ambient_radius = Some(welzl::<3>(&cloud, seed).radius);
        }
    }
    Ok(ball)
}

/// Smallest enclosing ball in 3-space of an embedded point cloud.
pub fn ambient_ball(points: &[Vector3<f64>], seed: u64) -> Ball<3> {
    welzl::<3>(points, seed)
}

/// Geodesic 1-center of chart points.
pub fn geodesic_one_center(points: &[Point], m: &ManifoldBackend) -> Result<EnclosingBall> {
    geodesic_one_center_from(points, m, None)
}

struct Evaluator<'a> {
    points: &'a [Point],
    m: &'a ManifoldBackend,
}

impl Evaluator<'_> {
    fn distances(&self, c: &Point) -> Result<Vec<(f64, Vec2)>> {
        self.points
            .iter()
            .map(|p| {
                let e = self.m.geodesic(c, p)?;
                Ok((e.length, e.grad_p))
            })
            .collect()
    }

    fn max_distance(&self, c: &Point) -> Result<f64> {
        let mut best: f64 = 0.0;
        for p in self.points {
            best = best.max(self.m.distance(c, p)?);
        }
        Ok(best)
    }

    fn softmax(&self, c: &Point, beta: f64) -> Result<(f64, Vec2)> {
        let d = self.distances(c)?;
        let top = d.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut g = Vec2::zeros();
        for (di, gi) in &d {
            let w = (beta * (di - top)).exp();
            z += w;
            g += gi * w;
        }
        Ok((top + z.ln() / beta, g / z))
    }
}

/// Cholesky factor of the metric: `g = L Lᵀ`, returned as (l11, l21, l22).
fn chol(m: &ManifoldBackend, c: &Point) -> (f64, f64, f64) {
    let g = m.metric(c);
    let l11 = g[(0, 0)].sqrt();
    let l21 = g[(1, 0)] / l11;
    (l11, l21, (g[(1, 1)] - l21 * l21).max(0.0).sqrt())
}

/// Covector to orthonormal-frame components: `L⁻¹ w`.
fn to_frame(l: (f64, f64, f64), w: &Vec2) -> Vec2 {
    let a = w.x / l.0;
    Vec2::new(a, (w.y - l.1 * a) / l.2)
}

/// Orthonormal-frame components back to a chart vector: `L⁻ᵀ u`.
fn from_frame(l: (f64, f64, f64), u: &Vec2) -> Vec2 {
    let y = u.y / l.2;
    Vec2::new((u.x - l.1 * y) / l.0, y)
}

pub fn geodesic_one_center_from(points: &[Point], m: &ManifoldBackend, warm_start: Option<Point>) -> Result<EnclosingBall> {
    if points.is_empty() {
        return Err(Error::InvalidInput("one-center of an empty point set".into()));
    }
    if points.len() == 1 {
        return Ok(EnclosingBall { center: points[0], radius: 0.0, attainment: vec![0], ambient_radius: None });
    }
    let ev = Evaluator { points, m };
    let mut c = warm_start.filter(|p| m.contains(p)).unwrap_or_else(|| welzl_points(points, DEFAULT_SEED).center);
    if !m.contains(&c) {
        c = points[0];
    }
    let spread = ev.max_distance(&c)?;
    if spread == 0.0 {
        return Ok(EnclosingBall { center: c, radius: 0.0, attainment: (0..points.len()).collect(), ambient_radius: None });
    }
    // Smoothed descent from the chart-Euclidean center; the diameter lies
    // between `spread` and `2·spread`.
    let beta0 = 32.0 / (2.0 * spread);
    let mut step = 0.25 * spread;
    for stage in 0..2 {
        let beta = beta0 * f64::powi(2.0, stage);
        let (mut f, mut g) = ev.softmax(&c, beta)?;
        for _ in 0..10 {
            let l = chol(m, &c);
            let gf = to_frame(l, &g);
            let gn = gf.norm();
            if gn < 1e-6 || step < 1e-7 * spread {
                break;
            }
            let dir = from_frame(l, &(-gf / gn));
            let mut t = (2.0 * step).min(spread);
            let mut moved = false;
            while t > 1e-8 * spread {
                let trial = c + dir * t;
                if m.contains(&trial) {
                    let (ft, gt) = ev.softmax(&trial, beta)?;
                    if ft <= f - 1e-4 * t * gn {
                        c = trial;
                        f = ft;
                        g = gt;
                        step = t;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }
    // Minimax polish.
    let mut d = ev.distances(&c)?;
    let mut radius = d.iter().map(|x| x.0).fold(0.0, f64::max);
    let mut eps = 1e-3 * radius;
    let mut last_move = 0.0;
    for _ in 0..100 {
        let l = chol(m, &c);
        let active: Vec<Vec2> = d.iter().filter(|x| x.0 >= radius - eps).map(|x| to_frame(l, &x.1)).collect();
        let (mn, _) = min_norm_point(&active);
        if mn.norm() < 1e-12 {
            if eps < 1e-7 * radius {
                break;
            }
            eps *= 0.1;
            continue;
        }
        let dir = from_frame(l, &(-mn / mn.norm()));
        let mut t = (4.0 * step).min(radius);
        let mut moved = false;
        while t > 1e-9 * radius {
            let trial = c + dir * t;
            if m.contains(&trial) {
                let dt = ev.distances(&trial)?;
                let rt = dt.iter().map(|x| x.0).fold(0.0, f64::max);
                if rt < radius {
                    last_move = m.norm(&c, &(dir * t));
                    c = trial;
                    d = dt;
                    radius = rt;
                    step = t;
                    moved = true;
                    // Points within a step of the maximum can overtake it
                    // on the next move; keep them active.
                    eps = eps.max(2.0 * last_move).min(1e-3 * radius);
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            last_move = 0.0;
            if eps < 1e-7 * radius {
                break;
            }
            eps *= 0.1;
        }
    }
    match refine_support(&ev, &c, &d, radius)? {
        Some((cs, ds, rs)) => {
            c = cs;
            d = ds;
            radius = rs;
        }
        None if last_move > 1e-3 * radius => {
            return Err(Error::NoConvergence(format!("one-center still moving by {last_move:e}")));
        }
        None => {}
    }
    let attainment = attainment_set(d.iter().map(|x| x.0), radius);
    Ok(EnclosingBall { center: c, radius, attainment, ambient_radius: None })
}

/// Exact center on a small support. The optimum is the smallest ball
/// through two or three points that encloses everything, and its radius is
/// the largest among the balls of such subsets; after the polish its support
/// is among the farthest few points and surrounds the polished center.
/// Candidates are therefore checked in decreasing radius until one encloses
/// all points. Returns `None` if none improves on `radius`.
#[allow(clippy::type_complexity)]
fn refine_support(ev: &Evaluator<'_>, c: &Point, d: &[(f64, Vec2)], radius: f64) -> Result<Option<(Point, Vec<(f64, Vec2)>, f64)>> {
    const CANDIDATES: usize = 8;
    let m = ev.m;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[j].0.total_cmp(&d[i].0));
    order.truncate(CANDIDATES);
    // Candidates farther than this (in the chart) are not the support sought.
    let reach = 0.25 * ev.points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    let l = chol(m, c);
    let unit: Vec<Vec2> = d
        .iter()
        .map(|x| {
            let u = to_frame(l, &x.1);
            u / u.norm().max(f64::MIN_POSITIVE)
        })
        .collect();
    let surrounds = |ids: &[usize]| min_norm_point(&ids.iter().map(|&i| unit[i]).collect::<Vec<_>>()).0.norm() < 0.3;
    let mut candidates: Vec<(Point, f64)> = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if !surrounds(&[i, j]) {
                continue;
            }
            let (p, q) = (ev.points[i], ev.points[j]);
            let (v, _) = if m.is_flat() { (q - p, q - p) } else { m.log_map(&p, &q)? };
            let half = 0.5 * m.norm(&p, &v);
            if half > radius {
                continue;
            }
            let steps = ((10.0 * half / m.params().step).ceil() as usize).max(16);
            candidates.push((m.integrate(&p, &(v * 0.5), steps)?.0, half));
        }
    }
    for (a, &i) in order.iter().enumerate() {
        for (b, &j) in order.iter().enumerate().skip(a + 1) {
            for &k in &order[b + 1..] {
                if !surrounds(&[i, j, k]) {
                    continue;
                }
                if let Some(found) = equidistant_point(m, [ev.points[i], ev.points[j], ev.points[k]], *c, reach)? {
                    if found.1 <= radius {
                        candidates.push(found);
                    }
                }
            }
        }
    }
    candidates.sort_by(|x, y| y.1.total_cmp(&x.1));
    for (cand, r) in candidates {
        if !m.contains(&cand) {
            continue;
        }
        let dc = ev.distances(&cand)?;
        let rc = dc.iter().map(|x| x.0).fold(0.0, f64::max);
        if rc < radius && rc <= r * (1.0 + 1e-8) {
            return Ok(Some((cand, dc, rc)));
        }
    }
    Ok(None)
}

/// Newton solve for the point equidistant from three points, from `start`,
/// abandoned if an iterate moves more than `reach` (chart distance) away.
fn equidistant_point(m: &ManifoldBackend, pts: [Point; 3], start: Point, reach: f64) -> Result<Option<(Point, f64)>> {
    let mut cand = start;
    for _ in 0..30 {
        let e = match pts.iter().map(|p| m.geodesic(&cand, p)).collect::<Result<Vec<_>>>() {
            Ok(e) => e,
            Err(_) => return Ok(None),
        };
        let f = Vec2::new(e[0].length - e[1].length, e[0].length - e[2].length);
        if f.norm() <= 1e-15 * e[0].length.max(1e-300) {
            return Ok(Some((cand, e[0].length.max(e[1].length).max(e[2].length))));
        }
        let jac = nalgebra::Matrix2::from_rows(&[(e[0].grad_p - e[1].grad_p).transpose(), (e[0].grad_p - e[2].grad_p).transpose()]);
        let Some(ji) = jac.try_inverse() else { return Ok(None) };
        cand -= ji * f;
        if !m.contains(&cand) || (cand - start).norm() > reach {
            return Ok(None);
        }
    }
    // Accept a stalled Newton iterate only if it is equidistant to rounding.
    let e: Vec<f64> = pts.iter().map(|p| m.distance(&cand, p)).collect::<Result<_>>()?;
    let spread = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - e.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((spread <= 1e-12 * e[0]).then(|| (cand, e.iter().cloned().fold(0.0, f64::max))))
}

/// Minimum-norm point of the convex hull of 2-vectors, with convex weights
/// over the input indices.
pub fn min_norm_point(v: &[Vec2]) -> (Vec2, Vec<f64>) {
    let n = v.len();
    let mut w = vec![0.0; n];
    if n == 0 {
        return (Vec2::zeros(), w);
    }
    let hull = convex_hull(v);
    if hull.len() == 1 {
        w[hull[0]] = 1.0;
        return (v[hull[0]], w);
    }
    let cross = |a: &Vec2, b: &Vec2| a.x * b.y - a.y * b.x;
    if hull.len() >= 3 {
        let inside = (0..hull.len()).all(|k| {
            let a = v[hull[k]];
            let b = v[hull[(k + 1) % hull.len()]];
            cross(&(b - a), &(-a)) >= 0.0
        });
        if inside {
            // Triangle of the fan from hull[0] that contains the origin.
            let a = v[hull[0]];
            for k in 1..hull.len() - 1 {
                let b = v[hull[k]];
                let c = v[hull[k + 1]];
                let area = cross(&(b - a), &(c - a));
                if area <= 0.0 {
                    continue;
                }
                let wb = cross(&(-a), &(c - a)) / area;
                let wc = cross(&(b - a), &(-a)) / area;
                let wa = 1.0 - wb - wc;
                if wa >= -1e-12 && wb >= -1e-12 && wc >= -1e-12 {
                    w[hull[0]] = wa.max(0.0);
                    w[hull[k]] = wb.max(0.0);
                    w[hull[k + 1]] = wc.max(0.0);
                    let s: f64 = w.iter().sum();
                    w.iter_mut().for_each(|x| *x /= s);
                    return (Vec2::zeros(), w);
                }
            }
        }
    }
    // Closest point on the hull boundary.
    let mut best = (f64::INFINITY, Vec2::zeros(), 0, 0, 0.0);
    let k_max = if hull.len() == 2 { 1 } else { hull.len() };
    for k in 0..k_max {
        let (i, j) = (hull[k], hull[(k + 1) % hull.len()]);
        let (a, b) = (v[i], v[j]);
        let ab = b - a;
        let t = if ab.norm_squared() > 0.0 { (-a.dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        let p = a + ab * t;
        if p.norm() < best.0 {
            best = (p.norm(), p, i, j, t);
        }
    }
    w[best.2] += 1.0 - best.4;
    w[best.3] += best.4;
    (best.1, w)
}

/// Andrew's monotone chain; returns indices of the hull in counterclockwise
/// order without collinear points.
fn convex_hull(v: &[Vec2]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].x.total_cmp(&v[b].x).then(v[a].y.total_cmp(&v[b].y)));
    idx.dedup_by(|a, b| v[*a] == v[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| (v[a].x - v[o].x) * (v[b].y - v[o].y) - (v[a].y - v[o].y) * (v[b].x - v[o].x);
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in &idx {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let lower = hull.len() + 1;
    for &i in idx.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// Convex multipliers `λ` on the attaining points with `Σ λᵢ ∇_c d(c, pᵢ) = 0`,
/// i.e. the weights that turn per-point radial derivatives into the
/// derivative of the radius. Uses the minimum-norm multiplier vector when it
/// is nonnegative (uniform for symmetric configurations), else the sparse
/// weights of the minimum-norm hull point.
pub fn support_weights(m: &ManifoldBackend, center: &Point, points: &[Point], indices: &[usize]) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::EmptyAttainment);
    }
    let l = chol(m, center);
    let u: Vec<Vec2> = indices
        .iter()
        .map(|&i| {
            let e = m.geodesic(center, &points[i])?;
            let n = to_frame(l, &e.grad_p);
            Ok(if n.norm() > 0.0 { n / n.norm() } else { n })
        })
        .collect::<Result<_>>()?;
    let k = u.len();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let mean: Vec2 = u.iter().sum::<Vec2>() / k as f64;
    if mean.norm() < 1e-9 {
        return Ok(vec![1.0 / k as f64; k]);
    }
    // Least-norm λ with Σλu = 0, Σλ = 1; clip negatives and re-solve.
    let mut free: Vec<bool> = vec![true; k];
    for _ in 0..k {
        let ids: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
        if ids.len() < 2 {
            break;
        }
        let a = DMatrix::from_fn(3, ids.len(), |r, c| match r {
            0 => u[ids[c]].x,
            1 => u[ids[c]].y,
            _ => 1.0,
        });
        let aat = &a * a.transpose();
        let Some(y) = aat.clone().lu().solve(&DVector::from_vec(vec![0.0, 0.0, 1.0])) else { break };
        if aat.determinant().abs() < 1e-14 {
            break;
        }
        let lam = a.transpose() * y;
        if lam.iter().all(|&x| x >= -1e-14) {
            let mut out = vec![0.0; k];
            for (c, &i) in ids.iter().enumerate() {
                out[i] = lam[c].max(0.0);
            }
            let s: f64 = out.iter().sum();
            return Ok(out.into_iter().map(|x| x / s).collect());
        }
        for (c, &i) in ids.iter().enumerate() {
            if lam[c] < 0.0 {
                free[i] = false;
            }
        }
    }
    Ok(min_norm_point(&u).1)
}

#[cfg(test)]
mod tests;

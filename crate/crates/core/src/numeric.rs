//! Small numerical helpers shared across modules: Gauss-Legendre rules,
//! bracketing root finders, adaptive quadrature and a cyclic tridiagonal
//! solver.

use crate::error::{Error, Result};

/// 8-point Gauss-Legendre nodes and weights on [0, 1].
pub const GAUSS8: [(f64, f64); 8] = {
    // nodes/weights on [-1, 1], mapped below
    const X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
    const W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
    [
        (0.5 - 0.5 * X[3], 0.5 * W[3]),
        (0.5 - 0.5 * X[2], 0.5 * W[2]),
        (0.5 - 0.5 * X[1], 0.5 * W[1]),
        (0.5 - 0.5 * X[0], 0.5 * W[0]),
        (0.5 + 0.5 * X[0], 0.5 * W[0]),
        (0.5 + 0.5 * X[1], 0.5 * W[1]),
        (0.5 + 0.5 * X[2], 0.5 * W[2]),
        (0.5 + 0.5 * X[3], 0.5 * W[3]),
    ]
};

/// Integrate `f` over [0, 1] with the 8-point Gauss rule.
pub fn gauss01(mut f: impl FnMut(f64) -> f64) -> f64 {
    GAUSS8.iter().map(|&(s, w)| w * f(s)).sum()
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to absolute tolerance `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::RootFindFailed(format!("no sign change on [{lo}, {hi}] (f = {flo:e}, {fhi:e})")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of an increasing function `f` with `f(lo) < 0`; the upper end of the
/// bracket is found by doubling from `guess`. Safeguarded secant/bisection.
pub fn increasing_root(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, guess: f64, rel_tol: f64) -> Result<f64> {
    let mut a = lo;
    let mut fa = f(a)?;
    if fa > 0.0 {
        return Err(Error::RootFindFailed(format!("f({lo}) = {fa:e} > 0")));
    }
    let mut b = guess.max(lo + f64::EPSILON);
    let mut fb = f(b)?;
    let mut expand = 0;
    while fb < 0.0 {
        a = b;
        fa = fb;
        b *= 2.0;
        fb = f(b)?;
        expand += 1;
        if expand > 60 {
            return Err(Error::RootFindFailed("could not bracket root".into()));
        }
    }
    for _ in 0..200 {
        if fb == 0.0 {
            return Ok(b);
        }
        if (b - a).abs() <= rel_tol * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        // Illinois-style false position, with bisection fallback.
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a && x < b) || !x.is_finite() {
            x = 0.5 * (a + b);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        let shrink_a = x - a;
        let shrink_b = b - x;
        if fx < 0.0 {
            a = x;
            fa = fx;
            if shrink_a < 0.1 * (b - a + shrink_a) {
                // stagnating on one side: take a bisection step too
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm < 0.0 {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                    fb = fm;
                }
            }
        } else {
            b = x;
            fb = fx;
            if shrink_b < 0.1 * (b - a + shrink_b) {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm < 0.0 {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                    fb = fm;
                }
            }
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Adaptive Gauss-Kronrod-free quadrature: recursive Simpson with Richardson
/// correction. Adequate for the smooth one-dimensional profiles used here.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Solve a cyclic (periodic) tridiagonal system with constant structure
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` (indices mod n)
/// by Sherman-Morrison on top of the Thomas algorithm.
pub fn solve_cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert!(n >= 3);
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= upper[n - 1] * lower[0] / gamma;
    let x = thomas(lower, &b, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = upper[n - 1];
    let z = thomas(lower, &b, upper, &u);
    let vx = x[0] + lower[0] / gamma * x[n - 1];
    let vz = z[0] + lower[0] / gamma * z[n - 1];
    let fact = vx / (1.0 + vz);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

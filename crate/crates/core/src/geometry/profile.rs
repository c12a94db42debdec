//! Warp profiles φ for surfaces of revolution `dr² + φ(r)² dθ²`.
//!
//! The closed-form family is `φ_a(r) = a·r + (1 − a)·tanh r`. Its Gauss
//! curvature `K = −φ″/φ` has the sign of `1 − a`, and `a = 1` is the flat
//! plane. Tabulated profiles are interpolated by a cubic spline clamped to
//! slope 1 at the apex and natural at the far end.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum WarpProfile {
    Tanh { a: f64 },
    Tabulated(TabulatedProfile),
}

impl WarpProfile {
    pub fn tanh(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("warp parameter a must be positive, got {a}")));
        }
        Ok(WarpProfile::Tanh { a })
    }

    /// True for the profile `φ(r) = r`, which is the Euclidean plane.
    pub fn is_flat(&self) -> bool {
        matches!(self, WarpProfile::Tanh { a } if *a == 1.0)
    }

    pub fn phi(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Tanh { a } => a * r + (1.0 - a) * r.tanh(),
            WarpProfile::Tabulated(t) => t.eval(r).0,
        }
    }

    pub fn dphi(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Tanh { a } => a + (1.0 - a) * sech2(r),
            WarpProfile::Tabulated(t) => t.eval(r).1,
        }
    }

    pub fn ddphi(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Tanh { a } => -2.0 * (1.0 - a) * r.tanh() * sech2(r),
            WarpProfile::Tabulated(t) => t.eval(r).2,
        }
    }

    /// `∫₀^r φ`.
    pub fn integral(&self, r: f64) -> f64 {
        match self {
            WarpProfile::Tanh { a } => 0.5 * a * r * r + (1.0 - a) * ln_cosh(r),
            WarpProfile::Tabulated(t) => t.integral(r),
        }
    }

    /// Largest radius at which the profile is defined.
    pub fn max_radius(&self) -> Option<f64> {
        match self {
            WarpProfile::Tanh { .. } => None,
            WarpProfile::Tabulated(t) => Some(*t.r.last().expect("non-empty table")),
        }
    }

    /// Gauss curvature `−φ″/φ` at distance `r` from the apex.
    pub fn gauss_curvature(&self, r: f64) -> f64 {
        let r = r.max(1e-8);
        -self.ddphi(r) / self.phi(r)
    }
}

pub(crate) fn sech2(r: f64) -> f64 {
    let c = r.abs().min(700.0).cosh();
    1.0 / (c * c)
}

/// `ln cosh r` without overflow or cancellation.
pub(crate) fn ln_cosh(r: f64) -> f64 {
    let r = r.abs();
    if r < 1.0 {
        let s = (0.5 * r).sinh();
        (2.0 * s * s).ln_1p()
    } else {
        r + (-2.0 * r).exp().ln_1p() - std::f64::consts::LN_2
    }
}

/// Cubic-spline warp profile through tabulated samples `(r_i, φ_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedProfile {
    r: Vec<f64>,
    phi: Vec<f64>,
    second: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Deserialize)]
struct Row(f64, f64);

impl TabulatedProfile {
    pub fn new(r: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let n = r.len();
        if n < 3 || phi.len() != n {
            return Err(Error::InvalidInput("warp table needs at least 3 (r, φ) rows".into()));
        }
        if r[0] != 0.0 || phi[0] != 0.0 {
            return Err(Error::InvalidInput("warp table must start at r = 0 with φ = 0".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("warp table radii must be strictly increasing".into()));
        }
        if phi[1..].iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput("warp table φ must be positive for r > 0".into()));
        }
        let h: Vec<f64> = r.windows(2).map(|w| w[1] - w[0]).collect();
        // Tridiagonal system for the second derivatives: clamped φ′(0) = 1,
        // natural at the far end.
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        upper[0] = h[0];
        rhs[0] = 6.0 * ((phi[1] - phi[0]) / h[0] - 1.0);
        for i in 1..n - 1 {
            lower[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            rhs[i] = 6.0 * ((phi[i + 1] - phi[i]) / h[i] - (phi[i] - phi[i - 1]) / h[i - 1]);
        }
        diag[n - 1] = 1.0;
        let second = thomas(&lower, &diag, &upper, &rhs);
        let mut t = TabulatedProfile { r, phi, second, cumulative: vec![0.0; n] };
        for i in 1..n {
            t.cumulative[i] = t.cumulative[i - 1] + t.piece_integral(i - 1, t.r[i]);
        }
        Ok(t)
    }

    /// Load a two-column CSV `(r, φ)` without header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut r = Vec::new();
        let mut phi = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let Row(a, b) = row.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            r.push(a);
            phi.push(b);
        }
        Self::new(r, phi)
    }

    fn segment(&self, x: f64) -> usize {
        match self.r.partition_point(|&v| v <= x) {
            0 => 0,
            k => (k - 1).min(self.r.len() - 2),
        }
    }

    fn coefficients(&self, i: usize) -> (f64, f64, f64) {
        let h = self.r[i + 1] - self.r[i];
        let c1 = self.phi[i] / h - self.second[i] * h / 6.0;
        let c2 = self.phi[i + 1] / h - self.second[i + 1] * h / 6.0;
        (h, c1, c2)
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let i = self.segment(x);
        let (h, c1, c2) = self.coefficients(i);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let a = self.r[i + 1] - x;
        let b = x - self.r[i];
        let v = m0 * a.powi(3) / (6.0 * h) + m1 * b.powi(3) / (6.0 * h) + c1 * a + c2 * b;
        let d = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - c1 + c2;
        let dd = (m0 * a + m1 * b) / h;
        (v, d, dd)
    }

    fn piece_integral(&self, i: usize, x: f64) -> f64 {
        let (h, c1, c2) = self.coefficients(i);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let a = self.r[i + 1] - x;
        let b = x - self.r[i];
        m0 * (h.powi(4) - a.powi(4)) / (24.0 * h) + m1 * b.powi(4) / (24.0 * h) + c1 * (h * h - a * a) / 2.0 + c2 * b * b / 2.0
    }

    fn integral(&self, x: f64) -> f64 {
        let i = self.segment(x);
        self.cumulative[i] + self.piece_integral(i, x)
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

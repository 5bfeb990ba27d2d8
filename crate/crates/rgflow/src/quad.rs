//! Quadrature backends: adaptive Gauss–Kronrod in one dimension, fixed
//! Gauss–Legendre rules, and a Halton point set for Gaussian-weighted
//! integrals over four dimensions.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("adaptive quadrature did not converge: value {value:e}, error {error:e}")]
    NotConverged { value: f64, error: f64 },
    #[error("non-finite integrand value at x = {0}")]
    NonFinite(f64),
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadError::NonFinite(c + x));
        }
        k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

struct Piece {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive 15-point Gauss–Kronrod over `[a, b]`, bisecting the
/// piece with the largest error until `err <= max(abs_tol, rel_tol |I|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    integrate_breaks(f, &[a, b], rel_tol, abs_tol)
}

/// As [`integrate`] with the range pre-split at the given increasing points.
pub fn integrate_breaks(
    f: impl Fn(f64) -> f64,
    points: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    const MAX_PIECES: usize = 4000;
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = gk15(&f, w[0], w[1])?;
        total += v;
        err += e;
        heap.push(Piece { a: w[0], b: w[1], val: v, err: e });
    }
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_PIECES {
            return Err(QuadError::NotConverged { value: total, error: err });
        }
        let p = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // cannot split further; accept this piece
            heap.push(Piece { err: 0.0, ..p });
            err = heap.iter().map(|q| q.err).sum();
            continue;
        }
        let (v1, e1) = gk15(&f, p.a, m)?;
        let (v2, e2) = gk15(&f, m, p.b)?;
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, val: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, val: v2, err: e2 });
    }
    // re-sum to shed accumulated rounding from the running updates
    Ok(heap.iter().map(|p| p.val).sum())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gl_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(&x, &w)| (c + h * x, h * w)).collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Standard normal points in four dimensions from the Halton sequence
/// (bases 2, 3, 5, 7) through Box–Muller.
pub fn normal_points_4d(n: usize) -> Vec<[f64; 4]> {
    (1..=n as u64)
        .map(|i| {
            let u: Vec<f64> = [2, 3, 5, 7].iter().map(|&b| radical_inverse(i, b)).collect();
            let r1 = (-2.0 * u[0].ln()).sqrt();
            let r2 = (-2.0 * u[2].ln()).sqrt();
            let t1 = 2.0 * std::f64::consts::PI * u[1];
            let t2 = 2.0 * std::f64::consts::PI * u[3];
            [r1 * t1.cos(), r1 * t1.sin(), r2 * t2.cos(), r2 * t2.sin()]
        })
        .collect()
}

/// `∫ e^{-α|x|²} g(x) d⁴x` estimated on a fixed quasi-random normal set.
pub fn gaussian_average_4d(alpha: f64, pts: &[[f64; 4]], g: impl Fn([f64; 4]) -> f64) -> f64 {
    let s = (2.0 * alpha).sqrt().recip();
    let mean = pts
        .iter()
        .map(|z| g([z[0] * s, z[1] * s, z[2] * s, z[3] * s]))
        .sum::<f64>()
        / pts.len() as f64;
    (std::f64::consts::PI / alpha).powi(2) * mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_and_singular() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12, 0.0).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate(|x: f64| x.ln(), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((v + 1.0).abs() < 1e-9);
    }

    #[test]
    fn gl_exactness() {
        let r = gl_on(6, -1.0, 2.0);
        let v: f64 = r.iter().map(|&(x, w)| w * x.powi(11)).sum();
        assert!((v - (2f64.powi(12) - 1.0) / 12.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_normalisation() {
        let pts = normal_points_4d(4096);
        let v = gaussian_average_4d(1.0, &pts, |x| x[0] * x[0]);
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        assert!((v / exact - 1.0).abs() < 1e-2);
    }
}

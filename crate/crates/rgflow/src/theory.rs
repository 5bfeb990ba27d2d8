//! Field content, the Gaussian regulator and regularized covariances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{dot, norm, Vec4};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("gauge parameter must be nonzero")]
    ZeroXi,
    #[error("cutoffs must satisfy 0 <= lambda <= lambda0 (got {0}, {1})")]
    Cutoffs(f64, f64),
    #[error("unknown regulator {0:?}")]
    Regulator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub dim: i32,
    pub form_degree: u8,
    pub ghost: i32,
    /// +1 for commuting, -1 for anticommuting.
    pub grading: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldKind {
    pub name: String,
    pub field: FieldEntry,
    pub antifield: FieldEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kinds: Vec<FieldKind>,
}

impl FieldSpec {
    /// Gauge field, ghost, antighost and auxiliary field with their
    /// antifields.
    pub fn yang_mills() -> Self {
        let e = |dim, form_degree, ghost, grading| FieldEntry { dim, form_degree, ghost, grading };
        let k = |name: &str, field, antifield| FieldKind { name: name.into(), field, antifield };
        FieldSpec {
            kinds: vec![
                k("A", e(1, 1, 0, 1), e(2, 3, -1, -1)),
                k("c", e(1, 0, 1, -1), e(2, 4, -2, 1)),
                k("cbar", e(1, 0, -1, -1), e(2, 4, 0, 1)),
                k("B", e(2, 0, 0, 1), e(1, 4, -1, -1)),
            ],
        }
    }

    pub fn scalar() -> Self {
        FieldSpec {
            kinds: vec![FieldKind {
                name: "phi".into(),
                field: FieldEntry { dim: 1, form_degree: 0, ghost: 0, grading: 1 },
                antifield: FieldEntry { dim: 2, form_degree: 4, ghost: -1, grading: -1 },
            }],
        }
    }

    pub fn get(&self, name: &str) -> Option<&FieldKind> {
        self.kinds.iter().find(|k| k.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    #[serde(default = "default_regulator")]
    pub regulator: String,
    pub mu: f64,
    pub lambda0: f64,
    #[serde(default = "one")]
    pub xi: f64,
    pub g: f64,
}

fn default_regulator() -> String {
    "gaussian".into()
}

fn one() -> f64 {
    1.0
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<(), TheoryError> {
        if self.regulator != "gaussian" {
            return Err(TheoryError::Regulator(self.regulator.clone()));
        }
        if self.xi == 0.0 {
            return Err(TheoryError::ZeroXi);
        }
        if !(self.mu > 0.0 && self.lambda0 > 0.0) {
            return Err(TheoryError::Cutoffs(self.mu, self.lambda0));
        }
        Ok(())
    }
}

/// Physicists' Hermite polynomial.
pub fn hermite(n: u32, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `lam^{-j} h^{(j)}(x/lam)` with `h(t) = exp(-t^2)`; without the Gaussian
/// factor unless `gauss`.
fn g_factor(j: u32, x: f64, lam: f64, gauss: bool) -> f64 {
    let t = x / lam;
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let e = if gauss { (-t * t).exp() } else { 1.0 };
    sign * hermite(j, t) * e * lam.powi(-(j as i32))
}

/// `d^m/dlam^m [lam^{-j} h^{(j)}(x/lam)]`, expanded as a sum of
/// `coef * lam^{-a} * x^b * G_c` terms.
fn g_factor_dlambda(j: u32, m: u32, x: f64, lam: f64, gauss: bool) -> f64 {
    // (coef, a, b, c)
    let mut terms: Vec<(f64, i32, i32, u32)> = vec![(1.0, 0, 0, j)];
    for _ in 0..m {
        let mut next = Vec::with_capacity(terms.len() * 2);
        for &(cf, a, b, c) in &terms {
            next.push((-cf * (a as f64 + c as f64), a + 1, b, c));
            next.push((-cf, a + 1, b + 1, c + 1));
        }
        terms = next;
    }
    terms
        .iter()
        .filter(|t| t.0 != 0.0)
        .map(|&(cf, a, b, c)| cf * lam.powi(-a) * x.powi(b) * g_factor(c, x, lam, gauss))
        .sum()
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianRegulator;

impl GaussianRegulator {
    pub fn value(&self, p: Vec4, lam: f64) -> f64 {
        if lam <= 0.0 {
            return 0.0;
        }
        if lam.is_infinite() {
            return 1.0;
        }
        (-dot(p, p) / (lam * lam)).exp()
    }

    /// `∂^w ∂_Λ^k R^Λ(p)`.
    pub fn deriv(&self, p: Vec4, w: [u32; 4], k: u32, lam: f64) -> f64 {
        self.deriv_with(p, w, k, lam, true)
    }

    /// `e^{p²/Λ²} ∂^w ∂_Λ^k R^Λ(p)`, finite where the derivative itself underflows.
    pub fn deriv_stripped(&self, p: Vec4, w: [u32; 4], k: u32, lam: f64) -> f64 {
        self.deriv_with(p, w, k, lam, false)
    }

    fn deriv_with(&self, p: Vec4, w: [u32; 4], k: u32, lam: f64, gauss: bool) -> f64 {
        if lam <= 0.0 {
            return 0.0;
        }
        if lam.is_infinite() {
            return if k == 0 && w == [0; 4] { 1.0 } else { 0.0 };
        }
        // Leibniz over the four separable directions
        let mut total = 0.0;
        let mut split = [0u32; 4];
        fn rec(
            a: usize,
            left: u32,
            split: &mut [u32; 4],
            p: Vec4,
            w: [u32; 4],
            lam: f64,
            k: u32,
            gauss: bool,
            total: &mut f64,
        ) {
            if a == 3 {
                split[3] = left;
                let mut coef = 1.0;
                let mut rem = k;
                for s in split.iter() {
                    coef *= binom(rem, *s);
                    rem -= s;
                }
                let prod: f64 = (0..4).map(|d| g_factor_dlambda(w[d], split[d], p[d], lam, gauss)).product();
                *total += coef * prod;
                return;
            }
            for m in 0..=left {
                split[a] = m;
                rec(a + 1, left - m, split, p, w, lam, k, gauss, total);
            }
        }
        rec(0, k, &mut split, p, w, lam, k, gauss, &mut total);
        total
    }
}

/// `(R^{Λ₀}(p) − R^Λ(p))/p²` with a series branch near `p = 0`.
pub fn covariance_scalar(p2: f64, lam: f64, lam0: f64) -> f64 {
    if lam >= lam0 {
        return 0.0;
    }
    if lam <= 0.0 {
        return if p2 == 0.0 { f64::INFINITY } else { (-p2 / (lam0 * lam0)).exp() / p2 };
    }
    let (l2, l02) = (lam * lam, lam0 * lam0);
    if p2 < 1e-8 * l2 {
        let a = 1.0 / l2 - 1.0 / l02;
        let b = 1.0 / (l2 * l2) - 1.0 / (l02 * l02);
        return a - 0.5 * p2 * b;
    }
    // e^{-x0} - e^{-x} = -e^{-x0} expm1(-(x - x0))
    let x0 = p2 / l02;
    let x = p2 / l2;
    -(-x0).exp() * (-(x - x0)).exp_m1() / p2
}

/// `∂_Λ C(p) = −(2/Λ³) exp(−p²/Λ²)`, independent of the upper cutoff.
pub fn covariance_scalar_dlambda(p2: f64, lam: f64) -> f64 {
    if lam <= 0.0 {
        return 0.0;
    }
    -2.0 / lam.powi(3) * (-p2 / (lam * lam)).exp()
}

/// `∂^w ∂_Λ C(p)` for the scalar covariance.
pub fn covariance_scalar_dlambda_deriv(p: Vec4, w: [u32; 4], lam: f64) -> f64 {
    scalar_dlambda_deriv(p, w, lam, true)
}

fn scalar_dlambda_deriv(p: Vec4, w: [u32; 4], lam: f64, gauss: bool) -> f64 {
    // for the Gaussian, ∂_Λ R / p² = 2 Λ^{-3} R
    -2.0 / lam.powi(3) * GaussianRegulator.deriv_with(p, w, 0, lam, gauss)
}

/// Yang-Mills kinds per colour index: A0..A3, c, cbar, B.
pub const YM_COMPONENTS: usize = 7;

pub fn ym_component_dim(k: usize) -> i32 {
    if k == 6 {
        2
    } else {
        1
    }
}

fn ym_tensor(p: Vec4, xi: f64) -> [[f64; YM_COMPONENTS]; YM_COMPONENTS] {
    let mut m = [[0.0; YM_COMPONENTS]; YM_COMPONENTS];
    let p2 = dot(p, p);
    for mu in 0..4 {
        for nu in 0..4 {
            let d = if mu == nu { 1.0 } else { 0.0 };
            let l = if p2 > 0.0 { p[mu] * p[nu] / p2 } else { 0.0 };
            m[mu][nu] = d + (1.0 / xi - 1.0) * l;
        }
    }
    m[4][5] = -1.0;
    m[5][4] = 1.0;
    m[6][6] = p2;
    m
}

/// Colour-diagonal covariance block.
pub fn covariance_ym(
    p: Vec4,
    lam: f64,
    lam0: f64,
    xi: f64,
) -> Result<[[f64; YM_COMPONENTS]; YM_COMPONENTS], TheoryError> {
    if xi == 0.0 {
        return Err(TheoryError::ZeroXi);
    }
    if !(0.0..=lam0).contains(&lam) {
        return Err(TheoryError::Cutoffs(lam, lam0));
    }
    let s = covariance_scalar(dot(p, p), lam, lam0);
    let mut m = ym_tensor(p, xi);
    for row in m.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    Ok(m)
}

/// `∂^w ∂_Λ C_{KL}(p)`. Derivatives in momentum are only available when the
/// tensor part is polynomial, i.e. at `ξ = 1`; otherwise `w` must vanish.
pub fn covariance_ym_dlambda_deriv(p: Vec4, k: usize, l: usize, w: [u32; 4], lam: f64, xi: f64) -> Option<f64> {
    ym_dlambda_deriv(p, k, l, w, lam, xi, true)
}

fn ym_dlambda_deriv(p: Vec4, k: usize, l: usize, w: [u32; 4], lam: f64, xi: f64, gauss: bool) -> Option<f64> {
    let f = |v: [u32; 4]| scalar_dlambda_deriv(p, v, lam, gauss);
    if w == [0; 4] {
        return Some(ym_tensor(p, xi)[k][l] * f(w));
    }
    if k < 4 && l < 4 {
        if xi != 1.0 {
            return None;
        }
        return Some(if k == l { f(w) } else { 0.0 });
    }
    match (k, l) {
        (4, 5) => Some(-f(w)),
        (5, 4) => Some(f(w)),
        (6, 6) => {
            // Leibniz for p² · f
            let mut s = dot(p, p) * f(w);
            for a in 0..4 {
                if w[a] >= 1 {
                    let mut v = w;
                    v[a] -= 1;
                    s += w[a] as f64 * 2.0 * p[a] * f(v);
                }
                if w[a] >= 2 {
                    let mut v = w;
                    v[a] -= 2;
                    s += binom(w[a], 2) * 2.0 * f(v);
                }
            }
            Some(s)
        }
        _ => Some(0.0),
    }
}

/// Which covariance the estimate check runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovarianceKind {
    Scalar,
    YangMills { xi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSpec {
    pub kind: CovarianceKind,
    pub max_w: u32,
    pub train_samples: usize,
    pub validate_samples: usize,
    pub seed: u64,
    /// Added to the exponent; nonzero values serve as negative controls.
    pub exponent_shift: f64,
    /// Validation tolerance relative to the fitted constant.
    pub margin: f64,
}

impl Default for EstimateSpec {
    fn default() -> Self {
        EstimateSpec {
            kind: CovarianceKind::Scalar,
            max_w: 2,
            train_samples: 4000,
            validate_samples: 4000,
            seed: 7,
            exponent_shift: 0.0,
            margin: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub c_fit: f64,
    pub max_validation_ratio: f64,
    pub violations: usize,
    pub checked: usize,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.c_fit.is_finite()
    }
}

fn multi_indices(max: u32) -> Vec<[u32; 4]> {
    let mut out = Vec::new();
    for a in 0..=max {
        for b in 0..=max - a {
            for c in 0..=max - a - b {
                for d in 0..=max - a - b - c {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

fn random_direction<R: Rng>(rng: &mut R) -> Vec4 {
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = norm(v);
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n, v[3] / n];
        }
    }
}

/// Calibrates the constant in the covariance derivative estimate on a
/// training range and checks it on fresh samples from a wider range.
pub fn check_covariance_estimate(spec: &EstimateSpec) -> EstimateReport {
    let ws = multi_indices(spec.max_w);
    let pairs: Vec<(usize, usize)> = match spec.kind {
        CovarianceKind::Scalar => vec![(0, 0)],
        CovarianceKind::YangMills { .. } => (0..YM_COMPONENTS)
            .flat_map(|k| (0..YM_COMPONENTS).map(move |l| (k, l)))
            .collect(),
    };
    let ratio = |p: Vec4, lam: f64, k: usize, l: usize, w: [u32; 4]| -> Option<f64> {
        let (val, dk, dl) = match spec.kind {
            CovarianceKind::Scalar => (scalar_dlambda_deriv(p, w, lam, false), 1, 1),
            CovarianceKind::YangMills { xi } => {
                if xi != 1.0 && w != [0; 4] {
                    return None;
                }
                (ym_dlambda_deriv(p, k, l, w, lam, xi, false)?, ym_component_dim(k), ym_component_dim(l))
            }
        };
        let wl: u32 = w.iter().sum();
        let expo = -5.0 + (dk + dl) as f64 - wl as f64 + spec.exponent_shift;
        let pn = norm(p);
        // the value carries no Gaussian, so e^{-p²/Λ²} / e^{-p²/2Λ²} remains
        Some(val.abs() * (-pn * pn / (2.0 * lam * lam)).exp() / pn.max(lam).powf(expo))
    };
    let sample = |rng: &mut ChaCha8Rng, span_p: f64, span_l: f64| -> (Vec4, f64) {
        let lam = 10f64.powf(rng.gen_range(-span_l..span_l));
        let r = lam * 10f64.powf(rng.gen_range(-span_p..span_p));
        let d = random_direction(rng);
        ([d[0] * r, d[1] * r, d[2] * r, d[3] * r], lam)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut c_fit: f64 = 0.0;
    for _ in 0..spec.train_samples {
        let (p, lam) = sample(&mut rng, 3.0, 2.0);
        for &(k, l) in &pairs {
            for &w in &ws {
                if let Some(r) = ratio(p, lam, k, l, w) {
                    if r.is_finite() {
                        c_fit = c_fit.max(r);
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let (mut worst, mut violations, mut checked) = (0.0f64, 0, 0);
    for _ in 0..spec.validate_samples {
        let (p, lam) = sample(&mut rng, 4.0, 3.0);
        for &(k, l) in &pairs {
            for &w in &ws {
                if let Some(r) = ratio(p, lam, k, l, w) {
                    checked += 1;
                    if !r.is_finite() || r > spec.margin * c_fit {
                        violations += 1;
                    }
                    if r.is_finite() {
                        worst = worst.max(r);
                    }
                }
            }
        }
    }
    EstimateReport { c_fit, max_validation_ratio: worst, violations, checked }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regulator_limits() {
        let r = GaussianRegulator;
        let p = [0.3, 0.1, -0.2, 0.5];
        assert_eq!(r.value([0.0; 4], 2.0), 1.0);
        assert_eq!(r.value(p, 0.0), 0.0);
        assert_eq!(r.value(p, f64::INFINITY), 1.0);
    }

    #[test]
    fn regulator_derivatives_match_differences() {
        let r = GaussianRegulator;
        let p = [0.3, 0.7, -0.2, 0.5];
        let lam = 0.9;
        let h = 1e-5;
        let dl = (r.value(p, lam + h) - r.value(p, lam - h)) / (2.0 * h);
        assert!((r.deriv(p, [0; 4], 1, lam) - dl).abs() < 1e-8);
        let mut pp = p;
        pp[1] += h;
        let mut pm = p;
        pm[1] -= h;
        let dp = (r.deriv(pp, [0; 4], 1, lam) - r.deriv(pm, [0; 4], 1, lam)) / (2.0 * h);
        assert!((r.deriv(p, [0, 1, 0, 0], 1, lam) - dp).abs() < 1e-7);
        let d2 = (r.deriv(p, [0; 4], 1, lam + h) - r.deriv(p, [0; 4], 1, lam - h)) / (2.0 * h);
        assert!((r.deriv(p, [0; 4], 2, lam) - d2).abs() < 1e-6);
    }

    #[test]
    fn covariance_at_zero() {
        let c = covariance_scalar(0.0, 1.5, 10.0);
        assert!((c - (1.0 / 2.25 - 0.01)).abs() < 1e-15);
        assert_eq!(covariance_scalar(1.0, 3.0, 3.0), 0.0);
        let near = covariance_scalar(1e-6, 1.5, 10.0);
        let series_edge = covariance_scalar(1.0001e-8 * 2.25, 1.5, 10.0);
        assert!((near - c).abs() < 1e-6);
        assert!((series_edge - c).abs() < 1e-8);
    }

    #[test]
    fn bb_entry_is_regulator_difference() {
        let p = [0.4, -0.3, 0.2, 0.9];
        let m = covariance_ym(p, 0.5, 4.0, 1.0).unwrap();
        let r = GaussianRegulator;
        assert!((m[6][6] - (r.value(p, 4.0) - r.value(p, 0.5))).abs() < 1e-14);
        assert_eq!(m[4][5], -m[5][4]);
        assert!(covariance_ym(p, 0.5, 4.0, 0.0).is_err());
    }

    #[test]
    fn table_values() {
        let f = FieldSpec::yang_mills();
        let dims: Vec<i32> = f.kinds.iter().map(|k| k.field.dim).collect();
        let adims: Vec<i32> = f.kinds.iter().map(|k| k.antifield.dim).collect();
        assert_eq!(dims, vec![1, 1, 1, 2]);
        assert_eq!(adims, vec![2, 2, 2, 1]);
        for k in &f.kinds {
            assert_eq!(k.antifield.dim, 3 - k.field.dim);
            assert_eq!(k.antifield.grading, -k.field.grading);
        }
    }
}

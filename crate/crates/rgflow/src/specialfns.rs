//! Exponential-integral family `E_k`, gamma and digamma helpers, and the
//! sampling harness that checks the analytic inequalities used by the bound
//! estimates.
//!
//! Inequalities with an unspecified constant follow a fixed protocol: each
//! parameter family gets its constant from the maximum ratio on a training
//! split, and the validation split (disjoint seeds) must stay below
//! `MARGIN` times that constant.

use crate::kinematics::{bareta_i, lnp, max_subsum, norm, MomentumConfig, Vec4};
use crate::quad::{self, QuadError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;
use std::time::Instant;
use thiserror::Error;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Largest `k` for which the `E_k` evaluation is validated.
pub const MAX_EXPINT_ORDER: u32 = 8;
/// Slack between training constant and validation threshold.
pub const MARGIN: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("order {0} outside the validated range 0..={MAX_EXPINT_ORDER}")]
    OrderOutOfRange(u32),
    #[error("E_k is singular at z = 0 for k >= 1")]
    ZeroArgument,
    #[error("unknown lemma {0}")]
    UnknownLemma(String),
    #[error("quadrature failure in {lemma}: {source}")]
    Quadrature { lemma: String, source: QuadError },
}

// ---------------------------------------------------------------- gamma

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Complex log-gamma (branch irrelevant: only its exponential is used).
pub fn ln_gamma_c(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        let s = (z * PI).sin();
        return Complex64::new(PI.ln(), 0.0) - s.ln() - ln_gamma_c(Complex64::new(1.0, 0.0) - z);
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    Complex64::new(0.5 * (2.0 * PI).ln(), 0.0) + (z + 0.5) * t.ln() - t + x.ln()
}

pub fn gamma(x: f64) -> f64 {
    if x == x.floor() && x > 0.0 && x < 171.0 {
        return (1..x as u64).map(|i| i as f64).product();
    }
    let l = ln_gamma_c(Complex64::new(x, 0.0));
    l.exp().re
}

/// Digamma at a positive integer: `-γ + H_{n-1}`.
pub fn digamma_int(n: u32) -> f64 {
    assert!(n >= 1, "digamma pole at {n}");
    (1..n).fold(-EULER_GAMMA, |acc, j| acc + 1.0 / j as f64)
}

/// Digamma for real `x > 0` by upward recurrence and the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    if x == x.floor() && x >= 1.0 && x < 1e6 {
        return digamma_int(x as u32);
    }
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    let tail = x2
        * (1.0 / 12.0
            - x2 * (1.0 / 120.0
                - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 * (1.0 / 132.0 - x2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 / x - tail
}

// ---------------------------------------------------------------- E_k

fn ln_iz(z: f64) -> Complex64 {
    Complex64::new(z.abs().ln(), FRAC_PI_2.copysign(z))
}

/// Residue series, valid for any real `k >= 0` and `z != 0`; accurate for
/// `|z| <= 1`, usable a bit beyond.
pub fn expint_series(z: f64, k: f64) -> Result<Complex64, SpecialError> {
    if k == 0.0 {
        return Ok(Complex64::new(0.0, -z).exp());
    }
    if z == 0.0 {
        return Err(SpecialError::ZeroArgument);
    }
    let l = ln_iz(z);
    let iz = Complex64::new(0.0, z);
    let psi = |x: f64| digamma(x);
    let g1 = gamma(k + 1.0);
    // m = 0 written so that the k -> 0 limit is exact
    let mut sum = (k * (2.0 * psi(1.0) - psi(k + 1.0) - l) + 1.0) / g1;
    let mut c = k / g1;
    let mut pw = Complex64::new(1.0, 0.0);
    for m in 1..400u32 {
        let mf = m as f64;
        c *= (k + mf - 1.0) / (mf * mf);
        pw *= iz;
        let term = c * (2.0 * psi(mf + 1.0) - psi(mf + k) - l) * pw;
        sum += term;
        if term.norm() < 1e-18 * sum.norm().max(1e-300) && m > 4 {
            break;
        }
    }
    Ok(Complex64::new(0.0, -z).exp() * sum)
}

const CONTOUR_STEP: f64 = 1.0 / 16.0;
const CONTOUR_HALF_WIDTH: f64 = 50.0;

/// Tabulated `Γ²(s)Γ(k-s)/Γ²(k)` on `s = k + 1/2 + i t`, scaled by the step.
fn contour_table(k: u32) -> &'static [(f64, Complex64)] {
    static TABLES: OnceLock<Vec<Vec<(f64, Complex64)>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        (1..=MAX_EXPINT_ORDER)
            .map(|k| {
                let kf = k as f64;
                let lgk = ln_gamma_c(Complex64::new(kf, 0.0));
                let n = (CONTOUR_HALF_WIDTH / CONTOUR_STEP) as i64;
                (-n..=n)
                    .map(|j| {
                        let t = j as f64 * CONTOUR_STEP;
                        let s = Complex64::new(kf + 0.5, t);
                        let lg = 2.0 * ln_gamma_c(s) + ln_gamma_c(Complex64::new(kf, 0.0) - s) - 2.0 * lgk;
                        (t, lg.exp() * (CONTOUR_STEP / (2.0 * PI)))
                    })
                    .collect()
            })
            .collect()
    });
    &tables[(k - 1) as usize]
}

/// Contour form with the leading pole split off; accurate for `|z| >= 1`.
pub fn expint_contour(z: f64, k: u32) -> Result<Complex64, SpecialError> {
    if k == 0 {
        return Ok(Complex64::new(0.0, -z).exp());
    }
    if k > MAX_EXPINT_ORDER {
        return Err(SpecialError::OrderOutOfRange(k));
    }
    if z == 0.0 {
        return Err(SpecialError::ZeroArgument);
    }
    let l = ln_iz(z);
    let c = k as f64 + 0.5;
    let mut acc = Complex64::new(0.0, 0.0);
    for &(t, g) in contour_table(k) {
        acc += g * (-(Complex64::new(c, t) * l)).exp();
    }
    let lead = (-(k as f64) * l).exp();
    Ok(Complex64::new(0.0, -z).exp() * (lead + acc))
}

/// `E_k(z)`: series for `|z| <= 1`, shifted contour beyond.
pub fn expint(z: f64, k: u32) -> Result<Complex64, SpecialError> {
    if k > MAX_EXPINT_ORDER {
        return Err(SpecialError::OrderOutOfRange(k));
    }
    if z.abs() <= 1.0 {
        expint_series(z, k as f64)
    } else {
        expint_contour(z, k)
    }
}

// ---------------------------------------------------------------- protocol

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub constant: f64,
    pub max_validation_ratio: f64,
    /// Indices into the validation split.
    pub violations: Vec<usize>,
}

/// Fits the smallest constant covering `train` and checks `validate`
/// against `margin` times it.
pub fn calibrate(train: &[f64], validate: &[f64], margin: f64) -> Calibration {
    let constant = train.iter().cloned().fold(0.0, f64::max);
    let thr = margin * constant;
    let violations = validate
        .iter()
        .enumerate()
        .filter(|(_, &r)| !(r <= thr))
        .map(|(i, _)| i)
        .collect();
    Calibration {
        constant,
        max_validation_ratio: validate.iter().cloned().fold(0.0, f64::max),
        violations,
    }
}

/// Deterministic per-sample generator: split and index pick the stream.
pub fn sample_rng(seed: u64, split: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(split.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    r.set_stream(index);
    r
}

// ---------------------------------------------------------------- sampling helpers

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + r.gen::<f64>() * (hi / lo).ln()).exp()
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - r.gen::<f64>();
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * r.gen::<f64>()).cos()
}

fn direction(r: &mut ChaCha8Rng) -> Vec4 {
    loop {
        let v = [normal(r), normal(r), normal(r), normal(r)];
        let n = norm(v);
        if n > 1e-8 {
            return [v[0] / n, v[1] / n, v[2] / n, v[3] / n];
        }
    }
}

fn vector(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec4 {
    let d = direction(r);
    let s = log_uniform(r, lo, hi);
    [d[0] * s, d[1] * s, d[2] * s, d[3] * s]
}

fn sup(a: f64, b: f64) -> f64 {
    a.max(b)
}

fn inf(a: f64, b: f64) -> f64 {
    a.min(b)
}

fn qmc_points() -> &'static [[f64; 4]] {
    static P: OnceLock<Vec<[f64; 4]>> = OnceLock::new();
    P.get_or_init(|| quad::normal_points_4d(4096))
}

/// 1D integral over `[a0, a1]` done in `u = ln x`, split at `kinks`.
fn log_integral(
    g: impl Fn(f64) -> f64,
    a0: f64,
    a1: f64,
    kinks: &[f64],
) -> Result<f64, QuadError> {
    let lo = if a0 > 0.0 { a0.ln() } else { a1.ln() - 90.0 };
    let hi = a1.ln();
    let mut pts = vec![lo];
    let mut ks: Vec<f64> = kinks.iter().filter(|&&k| k > 0.0).map(|k| k.ln()).filter(|&u| u > lo && u < hi).collect();
    ks.sort_by(f64::total_cmp);
    pts.extend(ks);
    pts.push(hi);
    quad::integrate_breaks(|u| { let x = u.exp(); x * g(x) }, &pts, 1e-8, 1e-300)
}

// ---------------------------------------------------------------- lemma definitions

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ConstantKind {
    /// The inequality carries an explicit constant.
    Exact(f64),
    /// Existential constant fitted on the training split.
    Calibrated,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    lhs: f64,
    rhs: f64,
}

type Sampler = fn(&mut ChaCha8Rng, usize) -> Result<Sample, QuadError>;

struct LemmaDef {
    name: &'static str,
    title: &'static str,
    families: Vec<(String, ConstantKind)>,
    default_samples: usize,
    sampler: Sampler,
}

/// Names accepted by [`run_lemma_suite`].
pub const LEMMA_NAMES: [&str; 13] =
    ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12", "A13"];

fn cal(labels: &[&str]) -> Vec<(String, ConstantKind)> {
    labels.iter().map(|l| (l.to_string(), ConstantKind::Calibrated)).collect()
}

fn lemma(name: &str) -> Option<LemmaDef> {
    let d = match name {
        "A1" => LemmaDef {
            name: "A1",
            title: "supremum ratio is monotone in the floor",
            families: vec![("ratio".into(), ConstantKind::Exact(1.0))],
            default_samples: 100_000,
            sampler: sample_a1,
        },
        "A2" => LemmaDef {
            name: "A2",
            title: "gaussian momentum integral of sup factors",
            families: cal(&["a=1,f=1,m=2", "a=0.5,f=|x|^2,m=-3", "a=2,f=1,m=(-1,2)", "a=1,f=|x|,m=(1,-2)"]),
            default_samples: 1_000,
            sampler: sample_a2,
        },
        "A3" => LemmaDef {
            name: "A3",
            title: "momentum integral with subset-maximum and exceptionality factors",
            families: cal(&["s=1,t=0,n=1", "s=0,t=1,n=1", "s=1,t=1,n=0"]),
            default_samples: 1_000,
            sampler: sample_a3,
        },
        "A4" => LemmaDef {
            name: "A4",
            title: "momentum integral with componentwise log factors",
            families: cal(&["t=0,n=1", "t=1,n=1"]),
            default_samples: 1_000,
            sampler: sample_a4,
        },
        "A5" => LemmaDef {
            name: "A5",
            title: "scale integral, m < -1",
            families: cal(&["m=-2,k=0,l=0", "m=-1.5,k=1,l=0", "m=-3,k=2,l=1", "m=-2,k=1,l=2"]),
            default_samples: 10_000,
            sampler: sample_a5,
        },
        "A6" => LemmaDef {
            name: "A6",
            title: "power beats logarithm",
            families: cal(&["a=0.25,k=1", "a=0.5,k=2", "a=1,k=1", "a=2,k=3", "a=1,k=0"]),
            default_samples: 100_000,
            sampler: sample_a6,
        },
        "A7" => LemmaDef {
            name: "A7",
            title: "scale integral, m > -1",
            families: cal(&["m=-0.5,k=1,l=0", "m=0,k=1,l=1", "m=1,k=2,l=0", "m=2,k=0,l=2"]),
            default_samples: 10_000,
            sampler: sample_a7,
        },
        "A8" => LemmaDef {
            name: "A8",
            title: "remainder integral of a Taylor expansion",
            families: cal(&["m=-0.5,k=1", "m=0,k=2", "m=1,k=1", "m=2,k=3"]),
            default_samples: 10_000,
            sampler: sample_a8,
        },
        "A9" => LemmaDef {
            name: "A9",
            title: "scale integral against 1/sup(c,x)",
            families: cal(&["k=0", "k=1", "k=2", "k=3"]),
            default_samples: 10_000,
            sampler: sample_a9,
        },
        "A10" => {
            let mut f: Vec<(String, ConstantKind)> = (1..=MAX_EXPINT_ORDER)
                .map(|k| (format!("k={k}, log bound"), ConstantKind::Calibrated))
                .collect();
            f.extend((1..=MAX_EXPINT_ORDER).map(|k| (format!("k={k}, |z|^-k decay"), ConstantKind::Calibrated)));
            LemmaDef {
                name: "A10",
                title: "exponential-integral bounds",
                families: f,
                default_samples: 16_000,
                sampler: sample_a10,
            }
        }
        "A11" => LemmaDef {
            name: "A11",
            title: "slalom integral",
            families: vec![
                ("degree-1 polynomial".into(), ConstantKind::Calibrated),
                ("2 ln(1+|v|/a)".into(), ConstantKind::Exact(1.0)),
            ],
            default_samples: 10_000,
            sampler: sample_a11,
        },
        "A12" => LemmaDef {
            name: "A12",
            title: "oscillatory decay from derivative bounds",
            families: vec![
                ("integer power".into(), ConstantKind::Exact(1.0)),
                ("fractional power".into(), ConstantKind::Exact(1.0)),
            ],
            default_samples: 1_000,
            sampler: sample_a12,
        },
        "A13" => LemmaDef {
            name: "A13",
            title: "log-weighted integral of derivatives against the Schwartz norm",
            families: vec![("gaussian times polynomial".into(), ConstantKind::Exact(4096.0))],
            default_samples: 1_000,
            sampler: sample_a13,
        },
        _ => return None,
    };
    Some(d)
}

fn sample_a1(r: &mut ChaCha8Rng, _: usize) -> Result<Sample, QuadError> {
    let k = if r.gen_bool(0.1) { 1e-6 } else { 5.0 * r.gen::<f64>() + 1e-9 };
    let big_k = k + if r.gen_bool(0.1) { 0.0 } else { 5.0 * r.gen::<f64>() };
    let b = if r.gen_bool(0.1) { 0.0 } else { 6.0 * r.gen::<f64>() };
    let a = b + if r.gen_bool(0.1) { 0.0 } else { 6.0 * r.gen::<f64>() };
    let c = 4.0 * r.gen::<f64>();
    // claim: (sup(a,K)/sup(b,K))^c <= (sup(a,k)/sup(b,k))^c
    Ok(Sample {
        lhs: (sup(a, big_k) / sup(b, big_k)).powf(c),
        rhs: (sup(a, k) / sup(b, k)).powf(c),
    })
}

fn sample_a2(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let (alpha, fexp, ms): (f64, i32, &[f64]) = match fam {
        0 => (1.0, 0, &[2.0]),
        1 => (0.5, 2, &[-3.0]),
        2 => (2.0, 0, &[-1.0, 2.0]),
        _ => (1.0, 1, &[1.0, -2.0]),
    };
    let a: Vec<Vec4> = ms.iter().map(|_| vector(r, 1e-2, 1e3)).collect();
    let beta: Vec<f64> = ms.iter().map(|_| log_uniform(r, 1.0, 1e2)).collect();
    let lhs = quad::gaussian_average_4d(alpha, qmc_points(), |x| {
        let mut v = norm(x).powi(fexp);
        for i in 0..ms.len() {
            let y = [x[0] + a[i][0], x[1] + a[i][1], x[2] + a[i][2], x[3] + a[i][3]];
            v *= sup(norm(y), beta[i]).powf(ms[i]);
        }
        v
    });
    let rhs = (0..ms.len()).map(|i| sup(norm(a[i]), beta[i]).powf(ms[i])).product();
    Ok(Sample { lhs, rhs })
}

fn with_pair(v: &[Vec4], x: Vec4) -> MomentumConfig {
    let mut m = v.to_vec();
    m.push(x);
    m.push([-x[0], -x[1], -x[2], -x[3]]);
    MomentumConfig::free(m)
}

/// Shared integrand pieces of the second and third momentum-integral lemmas.
struct Decorations {
    b: Option<(Vec<Vec4>, f64, f64)>,
    d: Option<(Vec<Vec4>, f64, f64)>,
    a: Option<(Vec4, f64, f64)>,
}

impl Decorations {
    fn draw(r: &mut ChaCha8Rng, nb: usize, delta_b: f64, nd: usize, delta_d: f64, m: Option<f64>) -> Self {
        let b = (nb > 0).then(|| {
            ((0..nb).map(|_| vector(r, 1e-2, 1e2)).collect(), log_uniform(r, 1.0, 1e2), delta_b)
        });
        let d = (nd > 0).then(|| {
            ((0..nd).map(|_| vector(r, 1e-2, 1e2)).collect(), log_uniform(r, 1.0, 1e2), delta_d)
        });
        let a = m.map(|m| (vector(r, 1e-2, 1e3), log_uniform(r, 1.0, 1e2), m));
        Decorations { b, d, a }
    }

    fn inner(&self, x: Vec4) -> f64 {
        let mut v = 1.0;
        if let Some((b, g, dl)) = &self.b {
            v *= sup(max_subsum(&with_pair(b, x)).unwrap_or(f64::NAN), *g).powf(*dl);
        }
        if let Some((d, g, dl)) = &self.d {
            v *= sup(bareta_i(&with_pair(d, x), 0).unwrap_or(f64::NAN), *g).powf(-dl);
        }
        if let Some((a, be, m)) = &self.a {
            let y = [x[0] + a[0], x[1] + a[1], x[2] + a[2], x[3] + a[3]];
            v *= sup(norm(y), *be).powf(*m);
        }
        v
    }

    fn outer(&self) -> f64 {
        let mut v = 1.0;
        if let Some((b, g, dl)) = &self.b {
            v *= sup(max_subsum(&MomentumConfig::free(b.clone())).unwrap_or(f64::NAN), *g).powf(*dl);
        }
        if let Some((d, g, dl)) = &self.d {
            v *= sup(bareta_i(&MomentumConfig::free(d.clone()), 0).unwrap_or(f64::NAN), *g).powf(-dl);
        }
        if let Some((a, be, m)) = &self.a {
            v *= sup(norm(*a), *be).powf(*m);
        }
        v
    }
}

fn sample_a3(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let (alpha, dec) = match fam {
        0 => (1.0, Decorations::draw(r, 2, 1.5, 0, 0.0, Some(-2.0))),
        1 => (1.0, Decorations::draw(r, 0, 0.0, 3, 1.0, Some(1.0))),
        _ => (0.5, Decorations::draw(r, 1, 1.0, 2, 2.0, None)),
    };
    let lhs = quad::gaussian_average_4d(alpha, qmc_points(), |x| dec.inner(x));
    Ok(Sample { lhs, rhs: dec.outer() })
}

fn sample_a4(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let dec = match fam {
        0 => Decorations::draw(r, 0, 0.0, 0, 0.0, Some(-1.0)),
        _ => Decorations::draw(r, 0, 0.0, 2, 1.0, Some(2.0)),
    };
    let big_a: [f64; 4] = std::array::from_fn(|_| log_uniform(r, 1.0, 20.0));
    let y: [f64; 4] = std::array::from_fn(|_| 4.0 * r.gen::<f64>() - 2.0);
    let lhs = quad::gaussian_average_4d(1.0, qmc_points(), |x| {
        let logs: f64 = (0..4).map(|i| big_a[i] + lnp(1.0 / (x[i] + y[i]).abs())).product();
        logs * dec.inner(x)
    });
    Ok(Sample { lhs, rhs: big_a.iter().product::<f64>() * dec.outer() })
}

fn sample_a5(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let (m, k, l) = [(-2.0, 0, 0), (-1.5, 1, 0), (-3.0, 2, 1), (-2.0, 1, 2)][fam];
    let big_a = if r.gen_bool(0.1) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let a0 = log_uniform(r, 1e-3, 1e3);
    let a1 = a0 * log_uniform(r, 1.0, 1e6);
    let kk = log_uniform(r, 1e-3, 1e3);
    let ll = log_uniform(r, 1e-3, 1e3);
    let g = |x: f64| sup(big_a, x).powf(m) * lnp(kk / x).powi(k) * lnp(x / ll).powi(l);
    let lhs = log_integral(g, a0, a1, &[big_a, kk, ll])?;
    let u = lnp(sup(kk, big_a) / sup(a0, inf(big_a, ll)));
    let v = lnp(a0 / ll);
    let rhs = sup(big_a, a0).powf(m + 1.0) * (1.0 + u + v).powi(k + l);
    Ok(Sample { lhs, rhs })
}

fn sample_a6(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let (alpha, k) = [(0.25, 1), (0.5, 2), (1.0, 1), (2.0, 3), (1.0, 0)][fam];
    let y = log_uniform(r, 1e-4, 1e4);
    let x = if r.gen_bool(0.05) { 0.0 } else { y * r.gen::<f64>() };
    let kk = if r.gen_bool(0.05) { 0.0 } else { log_uniform(r, 1e-4, 1e4) };
    let lhs = if x == 0.0 { 0.0 } else { x.powf(alpha) * lnp(kk / x).powi(k) };
    let rhs = y.powf(alpha) * (1.0 + lnp(kk / y)).powi(k);
    Ok(Sample { lhs, rhs })
}

fn lower_upper(r: &mut ChaCha8Rng) -> (f64, f64) {
    let a0 = if r.gen_bool(0.2) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let a1 = a0 + log_uniform(r, 1e-3, 1e3);
    (a0, a1)
}

fn sample_a7(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let (m, k, l) = [(-0.5, 1, 0), (0.0, 1, 1), (1.0, 2, 0), (2.0, 0, 2)][fam];
    let (a0, a1) = lower_upper(r);
    let b = if r.gen_bool(0.1) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let c = if b == 0.0 { log_uniform(r, 1e-3, 1e3) } else { b * log_uniform(r, 1.0, 1e2) };
    let kk = log_uniform(r, 1e-3, 1e3);
    let ll = log_uniform(r, 1e-3, 1e3);
    let g = |x: f64| sup(x, b).powf(m) * lnp(kk / x).powi(k) * lnp(x / ll).powi(l);
    let lhs = log_integral(g, a0, a1, &[b, kk, ll])?;
    let s = sup(c, a1);
    let rhs = s.powf(m + 1.0) * (1.0 + lnp(kk / s) + lnp(a1 / ll)).powi(k + l);
    Ok(Sample { lhs, rhs })
}

fn sample_a8(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let (m, k) = [(-0.5, 1), (0.0, 2), (1.0, 1), (2.0, 3)][fam];
    let (a0, a1) = lower_upper(r);
    let kk = log_uniform(r, 1e-3, 1e3);
    let ll = if r.gen_bool(0.1) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let g = |x: f64| sup(x, ll).powf(m) * lnp(sup(x, kk) / sup(inf(kk, x), ll)).powi(k);
    let lhs = log_integral(g, a0, a1, &[kk, ll])?;
    let rhs = sup(a1, ll).powf(m + 1.0) * (1.0 + lnp(sup(a1, kk) / sup(inf(kk, a1), ll))).powi(k);
    Ok(Sample { lhs, rhs })
}

fn sample_a9(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let k = fam as i32;
    let a = if r.gen_bool(0.1) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let b = a + log_uniform(r, 1e-3, 1e3);
    let c = if a > 0.0 && r.gen_bool(0.1) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let kk = if r.gen_bool(0.1) { 0.0 } else { log_uniform(r, 1e-3, 1e3) };
    let g = |x: f64| lnp(kk / x).powi(k) / sup(c, x);
    let lhs = log_integral(g, a, b, &[c, kk])?;
    let rhs = (1.0 + lnp(sup(kk, b) / sup(c, a))).powi(k + 1);
    Ok(Sample { lhs, rhs })
}

fn sample_a10(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let n = MAX_EXPINT_ORDER as usize;
    let k = (fam % n) as u32 + 1;
    let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    if fam < n {
        let z = sign * log_uniform(r, 1e-6, 1e3);
        let e = expint(z, k).map_err(|_| QuadError::NonFinite(z))?;
        Ok(Sample { lhs: e.norm(), rhs: 1.0 + lnp(1.0 / z.abs()) })
    } else {
        let z = sign * log_uniform(r, 1.0, 1e3);
        let e = expint(z, k).map_err(|_| QuadError::NonFinite(z))?;
        Ok(Sample { lhs: e.norm(), rhs: z.abs().powi(-(k as i32)) })
    }
}

fn sample_a11(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    let v = vector(r, 1e-3, 1e3);
    let a = log_uniform(r, 1e-4, 1e2);
    let u = if r.gen_bool(0.5) {
        // near the segment so the denominator nearly vanishes
        let t0 = 1.5 * r.gen::<f64>() - 0.25;
        let p = vector(r, 1e-6, 1e-1);
        [-t0 * v[0] + p[0], -t0 * v[1] + p[1], -t0 * v[2] + p[2], -t0 * v[3] + p[3]]
    } else {
        vector(r, 1e-3, 1e3)
    };
    let nv = norm(v);
    let ts = (-crate::kinematics::dot(u, v) / (nv * nv)).clamp(0.0, 1.0);
    let f = |t: f64| nv / (a + norm([u[0] + t * v[0], u[1] + t * v[1], u[2] + t * v[2], u[3] + t * v[3]]));
    let lhs = quad::integrate_breaks(f, &[0.0, ts, 1.0], 1e-8, 1e-300)?;
    let rhs = if fam == 0 { 1.0 + lnp(nv / a) } else { 2.0 * (1.0 + nv / a).ln() };
    Ok(Sample { lhs, rhs })
}

/// `sech^{(j)} = sech · P_j(tanh)`; returns `max_{|T|<=1} |P_j(T)|` for `j <= k`.
fn sech_derivative_maxima(k: u32) -> Vec<f64> {
    let mut poly = vec![1.0f64];
    let mut out = vec![1.0];
    for _ in 0..k {
        // P_{j+1} = -T P_j + (1 - T²) P_j'
        let mut next = vec![0.0; poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i + 1] -= c;
            if i >= 1 {
                next[i - 1] += i as f64 * c;
                next[i + 1] -= i as f64 * c;
            }
        }
        poly = next;
        let m = (0..=20_000)
            .map(|i| {
                let t = -1.0 + i as f64 / 10_000.0;
                poly.iter().rev().fold(0.0, |acc, &c| acc * t + c).abs()
            })
            .fold(0.0, f64::max);
        out.push(m * (1.0 + 1e-6));
    }
    out
}

fn sample_a12(r: &mut ChaCha8Rng, fam: usize) -> Result<Sample, QuadError> {
    // f(p) = Π sech(p_β / s_β): its Fourier transform is Π s π sech(π s x / 2)
    let k: u32 = if fam == 0 { r.gen_range(0..=4) } else { r.gen_range(1..=4) };
    let s: [f64; 4] = std::array::from_fn(|_| log_uniform(r, 0.5, 2.0));
    let x: [f64; 4] = std::array::from_fn(|_| {
        let sg = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        sg * log_uniform(r, 1e-2, 1e2)
    });
    let dir = r.gen_range(0..4usize);
    let maxima = sech_derivative_maxima(k);
    let rho = (1..=k as usize).map(|j| maxima[j].powf(1.0 / j as f64)).fold(1.0, f64::max);
    let big_m = s[dir] / rho;
    let ft: f64 = (0..4).map(|b| s[b] * PI / (PI * s[b] * x[b] / 2.0).cosh()).product();
    let l1: f64 = s.iter().map(|&sb| sb * PI).product();
    let xm = x[dir].abs() * big_m;
    if fam == 0 {
        return Ok(Sample { lhs: ft, rhs: xm.powi(-(k as i32)) * l1 });
    }
    let eps = 0.05 + 0.9 * r.gen::<f64>();
    // ∫ (|t|/M)^{ε-1} (1+|t|/M) sech(t/s) dt with t = M w^{1/ε}
    let sd = s[dir];
    let wmax = (60.0 * sd / big_m).powf(eps);
    let j = 2.0 * big_m / eps
        * quad::integrate(
            |w| {
                let t = big_m * w.powf(1.0 / eps);
                (1.0 + t / big_m) / (t / sd).cosh()
            },
            0.0,
            wmax,
            1e-10,
            1e-300,
        )?;
    let others: f64 = (0..4).filter(|&b| b != dir).map(|b| s[b] * PI).product();
    let rhs = 4.0 / (1.0 - eps) * xm.powf(-(k as f64) + eps) * others * j;
    Ok(Sample { lhs: ft, rhs })
}

/// `t^p e^{-a (t-c)²}` and its derivatives as polynomial coefficient lists.
struct Bump {
    a: f64,
    c: f64,
    derivs: Vec<Vec<f64>>,
}

impl Bump {
    fn new(p: usize, a: f64, c: f64, order: usize) -> Self {
        let mut q = vec![0.0; p + 1];
        q[p] = 1.0;
        let mut derivs = vec![q.clone()];
        for _ in 0..order {
            // Q' - 2a (t - c) Q
            let mut n = vec![0.0; q.len() + 1];
            for (i, &ci) in q.iter().enumerate() {
                if i >= 1 {
                    n[i - 1] += i as f64 * ci;
                }
                n[i + 1] -= 2.0 * a * ci;
                n[i] += 2.0 * a * c * ci;
            }
            q = n;
            derivs.push(q.clone());
        }
        Bump { a, c, derivs }
    }

    fn eval(&self, j: usize, t: f64) -> f64 {
        let p = self.derivs[j].iter().rev().fold(0.0, |acc, &c| acc * t + c);
        p * (-self.a * (t - self.c).powi(2)).exp()
    }
}

fn sample_a13(r: &mut ChaCha8Rng, _: usize) -> Result<Sample, QuadError> {
    let order = r.gen_range(0..=3usize);
    let mut w = [0usize; 4];
    for _ in 0..order {
        w[r.gen_range(0..4)] += 1;
    }
    let bumps: Vec<Bump> = (0..4)
        .map(|_| Bump::new(r.gen_range(0..=2), log_uniform(r, 0.3, 3.0), 2.0 * r.gen::<f64>() - 1.0, 3))
        .collect();
    let g = |x: Vec4, v: &[usize; 4]| -> f64 { (0..4).map(|i| bumps[i].eval(v[i], x[i])).product() };

    // plain part is separable
    let mut plain = 1.0;
    for i in 0..4 {
        let b = &bumps[i];
        let half = 12.0 / b.a.sqrt();
        plain *= quad::integrate(|t| b.eval(w[i], t).abs(), b.c - half, b.c + half, 1e-10, 1e-300)?;
    }
    // log-weighted part over the unit ball in hyperspherical coordinates
    static RULE: OnceLock<[Vec<(f64, f64)>; 4]> = OnceLock::new();
    let rule = RULE.get_or_init(|| {
        [quad::gl_on(16, 0.0, 1.0), quad::gl_on(16, 0.0, PI), quad::gl_on(12, 0.0, PI), quad::gl_on(20, 0.0, 2.0 * PI)]
    });
    let mut ball = 0.0;
    for &(rr, wr) in &rule[0] {
        for &(ch, wc) in &rule[1] {
            for &(th, wt) in &rule[2] {
                for &(ph, wp) in &rule[3] {
                    let x = [
                        rr * ch.cos(),
                        rr * ch.sin() * th.cos(),
                        rr * ch.sin() * th.sin() * ph.cos(),
                        rr * ch.sin() * th.sin() * ph.sin(),
                    ];
                    let jac = rr.powi(3) * ch.sin().powi(2) * th.sin();
                    ball += wr * wc * wt * wp * jac * (-rr.ln()) * g(x, &w).abs();
                }
            }
        }
    }
    // Schwartz norm estimated from below on a grid, at orders 0 and |w|
    let mut snorm: f64 = 0.0;
    let grid: Vec<f64> = (0..17).map(|i| -4.0 + 0.5 * i as f64).collect();
    for v in [[0usize; 4], w] {
        let tabs: Vec<Vec<f64>> = (0..4).map(|i| grid.iter().map(|&t| bumps[i].eval(v[i], t)).collect()).collect();
        for (i0, &x0) in grid.iter().enumerate() {
            for (i1, &x1) in grid.iter().enumerate() {
                for (i2, &x2) in grid.iter().enumerate() {
                    for (i3, &x3) in grid.iter().enumerate() {
                        let x2s = x0 * x0 + x1 * x1 + x2 * x2 + x3 * x3;
                        let val = (1.0 + x2s).powi(4) * (tabs[0][i0] * tabs[1][i1] * tabs[2][i2] * tabs[3][i3]).abs();
                        snorm = snorm.max(val);
                    }
                }
            }
        }
    }
    Ok(Sample { lhs: plain + ball, rhs: snorm })
}

// ---------------------------------------------------------------- driver

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub label: String,
    pub constant_kind: ConstantKind,
    /// Fitted or explicit constant.
    pub constant: f64,
    pub max_validation_ratio: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub name: String,
    pub title: String,
    pub seed: u64,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub margin: f64,
    pub families: Vec<FamilyReport>,
    pub violations: usize,
    pub passed: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub lemmas: Vec<LemmaReport>,
    pub passed: bool,
}

fn draw(def: &LemmaDef, seed: u64, split: u64, n: usize) -> Result<Vec<(usize, Sample)>, SpecialError> {
    let nf = def.families.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let fam = i % nf;
            let mut r = sample_rng(seed, split, i as u64);
            (def.sampler)(&mut r, fam)
                .map(|s| (fam, s))
                .map_err(|e| SpecialError::Quadrature { lemma: def.name.to_string(), source: e })
        })
        .collect()
}

/// Relative slack for explicit constants, covering quadrature error.
const EXACT_SLACK: f64 = 1e-7;

fn ratio(s: &Sample) -> f64 {
    if s.lhs == 0.0 {
        0.0
    } else {
        s.lhs / s.rhs
    }
}

fn run_one(def: &LemmaDef, n: usize, seed: u64) -> Result<LemmaReport, SpecialError> {
    let start = Instant::now();
    let needs_train = def.families.iter().any(|f| f.1 == ConstantKind::Calibrated);
    let train = if needs_train { draw(def, seed, 0, n)? } else { Vec::new() };
    let valid = draw(def, seed, 1, n)?;
    let mut fams = Vec::new();
    let mut total = 0;
    for (fi, (label, kind)) in def.families.iter().enumerate() {
        let tr: Vec<f64> = train.iter().filter(|s| s.0 == fi).map(|s| ratio(&s.1)).collect();
        let va: Vec<f64> = valid.iter().filter(|s| s.0 == fi).map(|s| ratio(&s.1)).collect();
        let (constant, thr_margin) = match kind {
            ConstantKind::Exact(c) => (*c, 1.0 + EXACT_SLACK),
            ConstantKind::Calibrated => (tr.iter().cloned().fold(0.0, f64::max), MARGIN),
        };
        let thr = constant * thr_margin;
        let violations = va.iter().filter(|&&r| !(r <= thr)).count();
        total += violations;
        fams.push(FamilyReport {
            label: label.clone(),
            constant_kind: *kind,
            constant,
            max_validation_ratio: va.iter().cloned().fold(0.0, f64::max),
            violations,
        });
    }
    Ok(LemmaReport {
        name: def.name.to_string(),
        title: def.title.to_string(),
        seed,
        train_samples: train.len(),
        validation_samples: valid.len(),
        margin: MARGIN,
        families: fams,
        violations: total,
        passed: total == 0,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Default validation sample count of a lemma.
pub fn default_samples(name: &str) -> Option<usize> {
    lemma(name).map(|d| d.default_samples)
}

/// Runs the named checks (all when `names` is empty). `n_samples` overrides
/// the per-lemma default sample count for both splits.
pub fn run_lemma_suite(names: &[String], n_samples: Option<usize>, seed: u64) -> Result<SuiteReport, SpecialError> {
    let list: Vec<String> = if names.is_empty() {
        LEMMA_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    let mut lemmas = Vec::new();
    for name in &list {
        let key = name.trim().trim_start_matches("Lemma").trim().replace('.', "").to_uppercase();
        let def = lemma(&key).ok_or_else(|| SpecialError::UnknownLemma(name.clone()))?;
        let n = n_samples.unwrap_or(def.default_samples);
        lemmas.push(run_one(&def, n, seed)?);
    }
    let passed = lemmas.iter().all(|l| l.passed);
    Ok(SuiteReport { lemmas, passed })
}

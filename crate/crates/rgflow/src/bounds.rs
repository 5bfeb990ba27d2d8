//! Tree envelopes as bounds on tabulated correlation functions, and the
//! large-momentum exponent `g^{(s)}` with its three structural properties.
//!
//! The polynomial in logarithms multiplying the envelope is existential, so
//! its overall constant is fitted on a training split of the table and then
//! checked, with a safety margin, on the held-out split.

use crate::flow::{CacTable, StageTable};
use crate::kinematics::{eta, ln_plus, max_subsum, MomentumConfig, MultiIndex};
use crate::specialfns::{calibrate, MARGIN};
use crate::trees::{enumerate_fully_reduced, TreeError, WeightedTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("empty table for loop order {l}, {n} legs")]
    EmptyTable { l: u32, n: usize },
    #[error("no fully reduced trees with {0} legs")]
    NoTrees(usize),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

// ---------------------------------------------------------------- g^{(s)}

/// Large-momentum exponent `(O+s)(r+3s−3) + max(O+s−|w|, 0)`.
pub fn g_s(dim: f64, r: i64, wlen: i64, s: i64) -> f64 {
    let a = dim + s as f64;
    a * (r + 3 * s - 3) as f64 + (a - wlen as f64).max(0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub checked: u64,
    pub violations: u64,
    /// First few violating argument tuples.
    pub examples: Vec<Vec<i64>>,
}

impl PropertyReport {
    fn new(name: &str) -> Self {
        PropertyReport { property: name.into(), checked: 0, violations: 0, examples: Vec::new() }
    }

    fn record(&mut self, ok: bool, args: &[i64]) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
            if self.examples.len() < 8 {
                self.examples.push(args.to_vec());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checked > 0
    }
}

/// Exhaustive check of the three properties for integer arguments in
/// `0..=max_arg` and `1..=s_max`.
///
/// The fusion property needs `r, r' >= 1` (the exponent it is applied to
/// always counts at least one leg); with `r = 0` it fails and those cases
/// are reported separately as a diagnostic.
pub fn check_gs_properties(max_arg: i64, s_max: i64) -> Vec<PropertyReport> {
    let mut monotone = PropertyReport::new("order increase absorbs derivatives");
    let mut step = PropertyReport::new("each derivative lowers the exponent");
    let mut fusion = PropertyReport::new("fusion (r, r' >= 1)");
    let mut fusion_r0 = PropertyReport::new("fusion with r or r' = 0 (diagnostic)");
    for s in 1..=s_max {
        for o in 0..=max_arg {
            let od = o as f64;
            for r in 0..=max_arg {
                for w in 0..=max_arg {
                    for v in 0..=w {
                        monotone.record(g_s(od, r, v, s) <= g_s(od, r + 1, w, s), &[o, r, v, w, s]);
                    }
                    if w <= o + s - 1 {
                        step.record(g_s(od, r, w + 1, s) + 1.0 <= g_s(od, r, w, s), &[o, r, w, s]);
                    }
                }
            }
        }
    }
    for s in 1..=s_max {
        for s2 in 1..=s_max {
            for o in 0..=max_arg {
                for o2 in 0..=max_arg {
                    let total = (o + o2 + s + s2) as f64;
                    for r in 0..=max_arg {
                        for r2 in 0..=max_arg {
                            if r + r2 < 2 {
                                continue;
                            }
                            // left side is largest at u = v = 0, right side smallest at large w'
                            for u in 0..=max_arg {
                                let gu = g_s(o as f64, r, u, s);
                                for v in 0..=max_arg {
                                    let lhs = gu + g_s(o2 as f64, r2, v, s2);
                                    for w in 0..=max_arg {
                                        let rhs = g_s((o + o2) as f64, r + r2 - 2, w, s + s2) - total;
                                        let args = [o, r, u, s, o2, r2, v, s2, w];
                                        if r >= 1 && r2 >= 1 {
                                            fusion.record(lhs <= rhs, &args);
                                        } else {
                                            fusion_r0.record(lhs <= rhs, &args);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    vec![monotone, step, fusion, fusion_r0]
}

// ---------------------------------------------------------------- envelopes

/// Decorations of a tree sum: leg dimensions, derivatives and an optional
/// particular weight. `special` selects trees with a special vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub dims: Vec<f64>,
    #[serde(default)]
    pub w: Option<MultiIndex>,
    #[serde(default)]
    pub particular: Option<f64>,
    #[serde(default)]
    pub special: bool,
}

impl EnvelopeSpec {
    /// Scalar field legs of dimension one, no derivatives.
    pub fn scalar(n: usize) -> Self {
        EnvelopeSpec { dims: vec![1.0; n], w: None, particular: None, special: false }
    }

    pub fn trees(&self) -> Result<Vec<WeightedTree>, BoundsError> {
        let n = self.dims.len();
        let base = enumerate_fully_reduced(n, self.special);
        if base.is_empty() {
            return Err(BoundsError::NoTrees(n));
        }
        base.into_iter()
            .map(|t| {
                let t = t.with_dims(&self.dims).with_particular(self.particular);
                match &self.w {
                    Some(w) => Ok(t.with_w(w.clone())?),
                    None => Ok(t),
                }
            })
            .collect()
    }
}

/// Sum of tree weights over all fully reduced trees with the decorations.
pub fn envelope(trees: &[WeightedTree], cfg: &MomentumConfig, mu: f64, lambda: f64) -> Result<f64, BoundsError> {
    let mut s = 0.0;
    for t in trees {
        s += t.weight(cfg, mu, lambda)?;
    }
    Ok(s)
}

/// `1 + ln₊(sup(|q|,μ)/sup(inf(μ,η),Λ)) + ln₊(Λ/μ)`.
pub fn log_polynomial_base(cfg: &MomentumConfig, mu: f64, lambda: f64) -> Result<f64, BoundsError> {
    let q = max_subsum(cfg).map_err(TreeError::from)?;
    let e = eta(cfg).map_err(TreeError::from)?;
    let a = ln_plus(q.max(mu) / e.min(mu).max(lambda)).map_err(TreeError::from)?;
    let b = ln_plus(lambda / mu).map_err(TreeError::from)?;
    Ok(1.0 + a + b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub l: u32,
    pub n: usize,
    pub degree: u32,
    pub lambda0: f64,
    pub c_fit: f64,
    pub margin: f64,
    pub max_ratio: f64,
    pub train_points: usize,
    pub validation_points: usize,
    /// `(probe, node)` pairs in the validation split exceeding `margin · c_fit`.
    pub violations: Vec<(usize, usize)>,
    pub passed: bool,
}

/// Ratios `|L| / (envelope · poly^d)` for every probe and Λ node.
pub fn bound_ratios(
    stage: &StageTable,
    lambda: &[f64],
    mu: f64,
    spec: &EnvelopeSpec,
    degree: u32,
) -> Result<Vec<Vec<f64>>, BoundsError> {
    let trees = spec.trees()?;
    stage
        .probes
        .iter()
        .zip(&stage.values)
        .map(|(p, row)| {
            lambda
                .iter()
                .zip(row)
                .map(|(&lam, &v)| {
                    let env = envelope(&trees, p, mu, lam)?;
                    let poly = log_polynomial_base(p, mu, lam)?.powi(degree as i32);
                    Ok(v.abs() / (env * poly))
                })
                .collect()
        })
        .collect()
}

/// Fits the constant on even Λ nodes and validates on odd ones.
pub fn verify_bound(table: &CacTable, l: u32, n: usize, spec: &EnvelopeSpec, degree: u32) -> Result<BoundReport, BoundsError> {
    let stage = table.get(l, n).filter(|s| !s.values.is_empty()).ok_or(BoundsError::EmptyTable { l, n })?;
    let mu = table.meta.config.mu;
    let ratios = bound_ratios(stage, &table.meta.lambda, mu, spec, degree)?;
    let (mut train, mut validate, mut where_) = (Vec::new(), Vec::new(), Vec::new());
    for (p, row) in ratios.iter().enumerate() {
        for (k, &r) in row.iter().enumerate() {
            if k % 2 == 0 {
                train.push(r);
            } else {
                validate.push(r);
                where_.push((p, k));
            }
        }
    }
    let cal = calibrate(&train, &validate, MARGIN);
    let violations: Vec<(usize, usize)> = cal.violations.iter().map(|&i| where_[i]).collect();
    let finite = ratios.iter().flatten().all(|r| r.is_finite());
    Ok(BoundReport {
        l,
        n,
        degree,
        lambda0: table.meta.config.lambda0,
        c_fit: cal.constant,
        margin: MARGIN,
        max_ratio: ratios.iter().flatten().cloned().fold(0.0, f64::max),
        train_points: train.len(),
        validation_points: validate.len(),
        passed: violations.is_empty() && finite,
        violations,
    })
}

/// Bound checks for every stage with the scalar envelope and `d = l + 1`.
pub fn verify_all(table: &CacTable) -> Result<Vec<BoundReport>, BoundsError> {
    table
        .stages
        .iter()
        .map(|s| verify_bound(table, s.l, s.n, &EnvelopeSpec::scalar(s.n), s.l + 1))
        .collect()
}

/// Largest over smallest fitted constant across cutoffs.
pub fn c_spread(reports: &[BoundReport]) -> f64 {
    let max = reports.iter().map(|r| r.c_fit).fold(0.0, f64::max);
    let min = reports.iter().map(|r| r.c_fit).fold(f64::INFINITY, f64::min);
    max / min
}

/// Scales the values at odd Λ nodes; a bound check on the result should
/// report violations.
pub fn corrupt(table: &CacTable, factor: f64) -> CacTable {
    let mut t = table.clone();
    for s in &mut t.stages {
        for row in &mut s.values {
            for (k, v) in row.iter_mut().enumerate() {
                if k % 2 == 1 {
                    *v *= factor;
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_s_value() {
        assert_eq!(g_s(4.0, 2, 0, 1), 15.0);
    }

    #[test]
    fn two_leg_envelope_is_square() {
        let trees = EnvelopeSpec::scalar(2).trees().unwrap();
        let cfg = MomentumConfig::conserved_from_independent(vec![[0.3, 0.4, 0.0, 1.2]]);
        for lam in [0.0, 0.5, 7.0] {
            let e = envelope(&trees, &cfg, 1.0, lam).unwrap();
            assert!((e / 1.3f64.max(lam).powi(2) - 1.0).abs() < 1e-12);
        }
    }
}

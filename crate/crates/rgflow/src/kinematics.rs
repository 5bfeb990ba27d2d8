//! Momentum configurations, subset extrema and multiindices.
//!
//! Every subset-based quantity is computed by exhaustive bitmask search. The
//! two halves of the momentum list are pre-summed separately so that the
//! inner loop is a single 4-vector addition.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec4 = [f64; 4];

/// Largest momentum count accepted by the subset searches.
pub const MAX_LEGS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("index {index} out of range for {len} independent momenta")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("momentum sum is not zero (residual {0:e})")]
    NotConserved(f64),
    #[error("too many momenta: {0} > {MAX_LEGS}")]
    TooMany(usize),
    #[error("ln_plus of negative argument {0}")]
    Negative(f64),
    #[error("configuration has no dependent last momentum")]
    NotConservedRepr,
}

pub fn add(a: Vec4, b: Vec4) -> Vec4 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

pub fn sub(a: Vec4, b: Vec4) -> Vec4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

pub fn scale(a: Vec4, t: f64) -> Vec4 {
    [a[0] * t, a[1] * t, a[2] * t, a[3] * t]
}

pub fn neg(a: Vec4) -> Vec4 {
    scale(a, -1.0)
}

pub fn dot(a: Vec4, b: Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn norm(a: Vec4) -> f64 {
    dot(a, a).sqrt()
}

pub fn sum_all(v: &[Vec4]) -> Vec4 {
    v.iter().fold([0.0; 4], |acc, &q| add(acc, q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumConfig {
    pub momenta: Vec<Vec4>,
    /// When set the last entry equals minus the sum of the others.
    pub conserved: bool,
}

impl MomentumConfig {
    /// Free configuration: every momentum is independent.
    pub fn free(momenta: Vec<Vec4>) -> Self {
        MomentumConfig { momenta, conserved: false }
    }

    /// Conserved configuration; the sum is checked against `1e-9` times the
    /// largest entry.
    pub fn conserved(momenta: Vec<Vec4>) -> Result<Self, KinematicsError> {
        let s = norm(sum_all(&momenta));
        let scale = momenta.iter().map(|&q| norm(q)).fold(1.0, f64::max);
        if s > 1e-9 * scale {
            return Err(KinematicsError::NotConserved(s));
        }
        Ok(MomentumConfig { momenta, conserved: true })
    }

    /// Appends the dependent momentum to the given independent ones.
    pub fn conserved_from_independent(mut independent: Vec<Vec4>) -> Self {
        let last = neg(sum_all(&independent));
        independent.push(last);
        MomentumConfig { momenta: independent, conserved: true }
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    pub fn scaled(&self, t: f64) -> Self {
        MomentumConfig {
            momenta: self.momenta.iter().map(|&q| scale(q, t)).collect(),
            conserved: self.conserved,
        }
    }
}

/// All subset sums of `v`, indexed by bitmask.
fn subset_sums(v: &[Vec4]) -> Vec<Vec4> {
    let mut out = vec![[0.0; 4]; 1usize << v.len()];
    for mask in 1..out.len() {
        let low = mask.trailing_zeros() as usize;
        out[mask] = add(out[mask & (mask - 1)], v[low]);
    }
    out
}

/// Iterates `f(|base + Σ_{S} v|)` over all subsets S of `v` using a
/// meet-in-the-middle split, returning the fold.
fn fold_subsets(
    base: Vec4,
    v: &[Vec4],
    init: f64,
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64, KinematicsError> {
    if v.len() > MAX_LEGS {
        return Err(KinematicsError::TooMany(v.len()));
    }
    let (lo, hi) = v.split_at(v.len() / 2);
    let lo = subset_sums(lo);
    let hi = subset_sums(hi);
    let mut acc = init;
    for h in &hi {
        let hb = add(base, *h);
        for l in &lo {
            acc = f(acc, norm(add(hb, *l)));
        }
    }
    Ok(acc)
}

/// sup over subsets of the norm of the subset sum.
pub fn max_subsum(cfg: &MomentumConfig) -> Result<f64, KinematicsError> {
    fold_subsets([0.0; 4], &cfg.momenta, 0.0, f64::max)
}

fn inf_with_excluded(q: &[Vec4], i: usize) -> Result<f64, KinematicsError> {
    let others: Vec<Vec4> = q
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &p)| p)
        .collect();
    fold_subsets(q[i], &others, f64::INFINITY, f64::min)
}

/// Exceptionality of momentum `i` against the other independent momenta.
///
/// Only defined for conserved configurations; `i` must index one of the
/// first `n-1` entries. A single momentum gives its own norm.
pub fn eta_i(cfg: &MomentumConfig, i: usize) -> Result<f64, KinematicsError> {
    if !cfg.conserved {
        return Err(KinematicsError::NotConservedRepr);
    }
    let n = cfg.len();
    if n == 1 {
        if i == 0 {
            return Ok(norm(cfg.momenta[0]));
        }
        return Err(KinematicsError::IndexOutOfRange { index: i, len: 1 });
    }
    if i + 1 >= n {
        return Err(KinematicsError::IndexOutOfRange { index: i, len: n.saturating_sub(1) });
    }
    inf_with_excluded(&cfg.momenta[..n - 1], i)
}

pub fn eta(cfg: &MomentumConfig) -> Result<f64, KinematicsError> {
    let n = cfg.len();
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        return eta_i(cfg, 0);
    }
    let mut m = f64::INFINITY;
    for i in 0..n - 1 {
        m = m.min(eta_i(cfg, i)?);
    }
    Ok(m)
}

/// Exceptionality of momentum `i` against all other momenta.
pub fn bareta_i(cfg: &MomentumConfig, i: usize) -> Result<f64, KinematicsError> {
    let n = cfg.len();
    if i >= n {
        return Err(KinematicsError::IndexOutOfRange { index: i, len: n });
    }
    inf_with_excluded(&cfg.momenta, i)
}

/// Minimum of `bareta_i`; `mu` for the empty configuration.
pub fn bareta(cfg: &MomentumConfig, mu: f64) -> Result<f64, KinematicsError> {
    if cfg.is_empty() {
        return Ok(mu);
    }
    let mut m = f64::INFINITY;
    for i in 0..cfg.len() {
        m = m.min(bareta_i(cfg, i)?);
    }
    Ok(m)
}

pub fn ln_plus(x: f64) -> Result<f64, KinematicsError> {
    if x < 0.0 {
        return Err(KinematicsError::Negative(x));
    }
    Ok(x.max(1.0).ln())
}

/// Unchecked variant for internal use on values known to be non-negative.
pub(crate) fn lnp(x: f64) -> f64 {
    x.max(1.0).ln()
}

/// Derivative counts per momentum and direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct MultiIndex(pub Vec<[u32; 4]>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![[0; 4]; n])
    }

    pub fn order(&self) -> u32 {
        self.0.iter().flatten().sum()
    }

    pub fn leg_order(&self, i: usize) -> u32 {
        self.0.get(i).map(|w| w.iter().sum()).unwrap_or(0)
    }

    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|&k| (1..=k).map(f64::from).product::<f64>())
            .product()
    }

    /// Componentwise `self <= other`; lengths must agree.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x <= y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_values() {
        let q = [0.3, -1.0, 2.0, 0.5];
        let c = MomentumConfig::conserved(vec![q, neg(q)]).unwrap();
        assert!((max_subsum(&c).unwrap() - norm(q)).abs() < 1e-15);
        assert!((eta(&c).unwrap() - norm(q)).abs() < 1e-15);
        assert_eq!(bareta(&c, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_conventions() {
        let c = MomentumConfig::free(vec![]);
        assert_eq!(max_subsum(&c).unwrap(), 0.0);
        assert_eq!(eta(&c).unwrap(), 0.0);
        assert_eq!(bareta(&c, 2.5).unwrap(), 2.5);
    }

    #[test]
    fn ln_plus_values() {
        assert_eq!(ln_plus(1.0).unwrap(), 0.0);
        assert!((ln_plus(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ln_plus(0.5).unwrap(), 0.0);
        assert_eq!(ln_plus(0.0).unwrap(), 0.0);
        assert!(ln_plus(-1.0).is_err());
    }

    #[test]
    fn dependent_index_rejected() {
        let c = MomentumConfig::conserved_from_independent(vec![[1.0, 0.0, 0.0, 0.0]; 2]);
        assert!(eta_i(&c, 2).is_err());
        assert!(eta_i(&c, 1).is_ok());
    }

    #[test]
    fn multiindex_basics() {
        let w = MultiIndex(vec![[1, 0, 2, 0], [0, 3, 0, 0]]);
        assert_eq!(w.order(), 6);
        assert_eq!(w.factorial(), 2.0 * 6.0);
        assert!(MultiIndex(vec![[1, 0, 1, 0], [0, 0, 0, 0]]).le(&w));
        assert!(!w.le(&MultiIndex::zero(2)));
    }
}

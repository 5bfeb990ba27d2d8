//! Perturbative flow hierarchy for the massless quartic scalar.
//!
//! Conventions: the covariance is `C^{Λ,Λ₀}(p) = (e^{-p²/Λ₀²} − e^{-p²/Λ²})/p²`
//! and the hierarchy reads
//!
//! ```text
//! ∂_Λ L^l_n(q) = ½ ∫_p ∂_Λ C(p) L^{l-1}_{n+2}(p,−p,q)
//!              − ½ Σ_{σ⊔τ, l'} L^{l'}_{|σ|+1}(q_σ,−k) ∂_Λ C(k) L^{l−l'}_{|τ|+1}(k,q_τ)
//! ```
//!
//! with `k = Σ_σ q` and the sum over ordered splits. The tree-level 4-point
//! function is `−g`, so trees carry `−g` per vertex and `−C` per line.
//!
//! Every stage has a right-hand side built from lower stages only, so each
//! probe is a plain quadrature in Λ: Gauss–Legendre panels between the log
//! grid nodes plus one linear panel on `[0, Λ_min]` which yields the `Λ = 0`
//! row.

use crate::kinematics::{add, dot, eta, neg, norm, MomentumConfig, Vec4};
use crate::quad::{self, QuadError};
use crate::theory::{covariance_scalar, covariance_scalar_dlambda};
use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CACHE_ENV: &str = "RGFLOW_CACHE_DIR";

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("tree-level function needs an even leg count >= 4, got {0}")]
    LegCount(usize),
    #[error("missing dependency: loop order {l}, {n} legs")]
    MissingDependency { l: u32, n: usize },
    #[error("quadrature failure: {0}")]
    Quadrature(#[from] QuadError),
    #[error("momentum configuration: {0}")]
    Momenta(String),
    #[error("table i/o: {0}")]
    Io(String),
}

// ---------------------------------------------------------------- configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Number of log-spaced nodes in `[lambda_min, Λ₀]`.
    pub nodes: usize,
    /// Lowest positive node in units of μ.
    pub lambda_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nodes: 200, lambda_min: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSpec {
    /// Relative tolerance of the loop integrals.
    pub rel_tol: f64,
    /// Gauss–Legendre points per Λ panel.
    pub panel_points: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { rel_tol: 1e-6, panel_points: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    /// Two-point probes: `|q|` log grid, in units of μ.
    pub two_point_count: usize,
    pub q_min: f64,
    pub q_max: f64,
    /// Number of random configurations for four and more legs.
    pub four_point_count: usize,
    pub six_point_count: usize,
    /// Exceptionality floor `η(q) >= eta_min μ` for random configurations.
    pub eta_min: f64,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            two_point_count: 12,
            q_min: 1e-2,
            q_max: 1e2,
            four_point_count: 10,
            six_point_count: 6,
            eta_min: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub l_max: u32,
    pub n_max: usize,
    pub mu: f64,
    pub lambda0: f64,
    /// Marginal four-point coupling; the tree-level 4-point function is `−g`.
    pub g: f64,
    pub grid: GridSpec,
    pub quadrature: QuadSpec,
    pub probes: ProbeSpec,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            l_max: 1,
            n_max: 6,
            mu: 1.0,
            lambda0: 20.0,
            g: 1.0,
            grid: GridSpec::default(),
            quadrature: QuadSpec::default(),
            probes: ProbeSpec::default(),
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::Config(m.to_string()));
        if !(self.mu > 0.0 && self.lambda0 > self.mu) {
            return bad("need 0 < mu < lambda0");
        }
        if self.l_max >= 2 {
            return bad("loop orders beyond 1 are not supported");
        }
        if self.n_max < 4 || self.n_max % 2 == 1 || self.n_max > 10 {
            return bad("n_max must be even and in 4..=10");
        }
        if self.l_max == 1 && self.n_max > 6 {
            return bad("one-loop stages need off-grid one-loop data beyond six legs");
        }
        if self.grid.nodes < 8 || !(self.grid.lambda_min > 0.0 && self.grid.lambda_min < 1.0) {
            return bad("grid needs >= 8 nodes and 0 < lambda_min < 1");
        }
        if !(1..=12).contains(&self.quadrature.panel_points) || !(self.quadrature.rel_tol > 0.0) {
            return bad("panel_points in 1..=12 and rel_tol > 0");
        }
        let p = &self.probes;
        if p.two_point_count < 4 || !(p.q_min > 0.0 && p.q_max > p.q_min) {
            return bad("two-point probes need >= 4 points and 0 < q_min < q_max");
        }
        if p.four_point_count == 0 || p.six_point_count == 0 || !(p.eta_min > 0.0) {
            return bad("probe counts must be positive and eta_min > 0");
        }
        Ok(())
    }

    /// Stages in induction order: ascending `n + 2l`, then ascending `l`.
    pub fn stages(&self) -> Vec<(u32, usize)> {
        let mut out = Vec::new();
        for rank in (2..=self.n_max).step_by(2) {
            for l in 0..=self.l_max {
                let Some(n) = rank.checked_sub(2 * l as usize) else { continue };
                if n >= 2 && (l > 0 || n >= 4) {
                    out.push((l, n));
                }
            }
        }
        out
    }

    /// Positive Λ nodes, ascending, log-spaced, containing μ and Λ₀.
    pub fn lambda_nodes(&self) -> Vec<f64> {
        let lo = self.grid.lambda_min * self.mu;
        let total = (self.lambda0 / lo).ln();
        let n = self.grid.nodes;
        let below = (((self.mu / lo).ln() / total) * (n - 1) as f64).round().clamp(1.0, (n - 2) as f64) as usize;
        let above = n - 1 - below;
        let mut out = Vec::with_capacity(n);
        for i in 0..below {
            out.push(lo * (self.mu / lo).powf(i as f64 / below as f64));
        }
        for i in 0..=above {
            out.push(self.mu * (self.lambda0 / self.mu).powf(i as f64 / above as f64));
        }
        *out.last_mut().unwrap() = self.lambda0;
        out
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------- boundary data

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    Relevant,
    Marginal,
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRule {
    pub class: BoundaryClass,
    /// Scale at which the value is imposed: `0`, `μ` or `Λ₀` (as a label).
    pub anchor: Anchor,
    /// Value of the functional at the anchor and zero momentum.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Zero,
    Mu,
    Lambda0,
}

/// Boundary rule for the scalar `n`-point function with `wlen` momentum
/// derivatives. Only the tree-level 4-point function gets a nonzero
/// marginal value, `−g` in the sign convention of this module.
pub fn apply_boundary(l: u32, n: usize, wlen: u32, g: f64) -> BoundaryRule {
    let d = n as u32 + wlen;
    match d.cmp(&4) {
        std::cmp::Ordering::Less => BoundaryRule { class: BoundaryClass::Relevant, anchor: Anchor::Zero, value: 0.0 },
        std::cmp::Ordering::Equal => BoundaryRule {
            class: BoundaryClass::Marginal,
            anchor: Anchor::Mu,
            value: if l == 0 && n == 4 { -g } else { 0.0 },
        },
        std::cmp::Ordering::Greater => {
            BoundaryRule { class: BoundaryClass::Irrelevant, anchor: Anchor::Lambda0, value: 0.0 }
        }
    }
}

// ---------------------------------------------------------------- tree level

/// Partitions of `set` into three nonempty blocks of odd size.
fn odd_triples(set: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    let low_a = set & set.wrapping_neg();
    let rest_a = set ^ low_a;
    // A = low_a ∪ subset of rest_a
    let mut sa = rest_a;
    loop {
        let a = low_a | sa;
        let rem = set ^ a;
        if rem != 0 && a.count_ones() % 2 == 1 {
            let low_b = rem & rem.wrapping_neg();
            let rest_b = rem ^ low_b;
            let mut sb = rest_b;
            loop {
                let b = low_b | sb;
                let c = rem ^ b;
                if c != 0 && b.count_ones() % 2 == 1 && c.count_ones() % 2 == 1 {
                    out.push([a, b, c]);
                }
                if sb == 0 {
                    break;
                }
                sb = (sb - 1) & rest_b;
            }
        }
        if sa == 0 {
            break;
        }
        sa = (sa - 1) & rest_a;
    }
    out
}

fn subset_sum(q: &[Vec4], mask: u32) -> Vec4 {
    let mut s = [0.0; 4];
    for (i, &p) in q.iter().enumerate() {
        if mask >> i & 1 == 1 {
            s = add(s, p);
        }
    }
    s
}

/// Tree-level `n`-point function: the sum over all φ⁴ trees with vertex
/// `−g` and line `−C^{Λ,Λ₀}`, by off-shell recursion rooted at the last leg.
pub fn tree_level_cac(n: usize, q: &[Vec4], lam: f64, lam0: f64, g: f64) -> Result<f64, FlowError> {
    if n % 2 == 1 || n < 4 {
        return Err(FlowError::LegCount(n));
    }
    if q.len() != n {
        return Err(FlowError::Momenta(format!("expected {n} momenta, got {}", q.len())));
    }
    if n > 12 {
        return Err(FlowError::LegCount(n));
    }
    let full = (1u32 << (n - 1)) - 1;
    let mut memo: HashMap<u32, f64> = HashMap::new();
    fn current(s: u32, q: &[Vec4], lam: f64, lam0: f64, g: f64, memo: &mut HashMap<u32, f64>) -> f64 {
        if s.count_ones() == 1 {
            return 1.0;
        }
        if let Some(&v) = memo.get(&s) {
            return v;
        }
        let mut v = 0.0;
        for blocks in odd_triples(s) {
            let mut t = -g;
            for b in blocks {
                if b.count_ones() > 1 {
                    let k = subset_sum(q, b);
                    t *= -covariance_scalar(dot(k, k), lam, lam0) * current(b, q, lam, lam0, g, memo);
                }
            }
            v += t;
        }
        memo.insert(s, v);
        v
    }
    Ok(current(full, q, lam, lam0, g, &mut memo))
}

/// One tree of the tree-level expansion: `sign · g^vertices · Π C(k_line)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeTerm {
    pub sign: f64,
    pub vertices: u32,
    /// Leg subsets whose momentum flows through each internal line.
    pub lines: Vec<u32>,
}

/// All trees of the `n`-point tree-level function, rooted at the last leg.
pub fn tree_terms(n: usize) -> Result<Vec<TreeTerm>, FlowError> {
    if n % 2 == 1 || n < 4 || n > 12 {
        return Err(FlowError::LegCount(n));
    }
    fn rec(s: u32) -> Vec<TreeTerm> {
        if s.count_ones() == 1 {
            return vec![TreeTerm { sign: 1.0, vertices: 0, lines: vec![] }];
        }
        let mut out = Vec::new();
        for blocks in odd_triples(s) {
            let mut acc = vec![TreeTerm { sign: -1.0, vertices: 1, lines: vec![] }];
            for b in blocks {
                let sub = rec(b);
                let mut next = Vec::new();
                for a in &acc {
                    for t in &sub {
                        let mut lines = a.lines.clone();
                        lines.extend(&t.lines);
                        let mut sign = a.sign * t.sign;
                        if b.count_ones() > 1 {
                            lines.push(b);
                            sign = -sign;
                        }
                        next.push(TreeTerm { sign, vertices: a.vertices + t.vertices, lines });
                    }
                }
                acc = next;
            }
            out.extend(acc);
        }
        out
    }
    Ok(rec((1u32 << (n - 1)) - 1))
}

// ---------------------------------------------------------------- loop integrals

fn frame(dirs: &[Vec4]) -> (usize, [Vec4; 4]) {
    let mut basis: Vec<Vec4> = Vec::new();
    let push = |v: Vec4, basis: &mut Vec<Vec4>| {
        let mut w = v;
        for b in basis.iter() {
            let c = dot(w, *b);
            w = [w[0] - c * b[0], w[1] - c * b[1], w[2] - c * b[2], w[3] - c * b[3]];
        }
        let nw = norm(w);
        if nw > 1e-10 * norm(v) && nw > 0.0 {
            basis.push([w[0] / nw, w[1] / nw, w[2] / nw, w[3] / nw]);
        }
    };
    for &d in dirs {
        if basis.len() < 4 {
            push(d, &mut basis);
        }
    }
    let rank = basis.len();
    for e in [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]] {
        if basis.len() < 4 {
            push(e, &mut basis);
        }
    }
    (rank, [basis[0], basis[1], basis[2], basis[3]])
}

fn comb(c: [f64; 4], e: &[Vec4; 4]) -> Vec4 {
    let mut v = [0.0; 4];
    for (ci, ei) in c.iter().zip(e) {
        for k in 0..4 {
            v[k] += ci * ei[k];
        }
    }
    v
}

/// `∫ f(p) d⁴p/(2π)⁴` for an integrand depending on `p` only through `|p|`
/// and its projections on `dirs`, decaying at least like `e^{-p²/Λ²}`.
///
/// The number of angular integrations equals the rank of `dirs` (capped
/// at three), each done by nested adaptive Gauss–Kronrod.
pub fn loop_integral(
    dirs: &[Vec4],
    lam: f64,
    rel_tol: f64,
    f: impl Fn(Vec4) -> f64,
) -> Result<f64, FlowError> {
    let (rank, e) = frame(dirs);
    let rmax = 7.0 * lam;
    let mut br = vec![0.0];
    let mut ks: Vec<f64> = dirs.iter().map(|&d| norm(d)).filter(|&k| k > 0.0 && k < rmax).collect();
    ks.sort_by(f64::total_cmp);
    br.extend(ks);
    br.push(rmax);
    let inner = rel_tol * 0.25;
    let ang = |r: f64| -> Result<f64, QuadError> {
        let r3 = r * r * r;
        match rank {
            0 => Ok(2.0 * PI * PI * r3 * f(comb([r, 0.0, 0.0, 0.0], &e))),
            1 => Ok(4.0 * PI * r3 * quad::integrate(
                |t| t.sin().powi(2) * f(comb([r * t.cos(), r * t.sin(), 0.0, 0.0], &e)),
                0.0, PI, inner, 1e-300,
            )?),
            2 => {
                let v = quad::integrate(
                    |t| {
                        let (st, ct) = t.sin_cos();
                        let in2 = quad::integrate(
                            |ph| ph.sin() * f(comb([r * ct, r * st * ph.cos(), r * st * ph.sin(), 0.0], &e)),
                            0.0, PI, inner, 1e-300,
                        );
                        st * st * in2.unwrap_or(f64::NAN)
                    },
                    0.0, PI, inner, 1e-300,
                )?;
                Ok(2.0 * PI * r3 * v)
            }
            _ => {
                let v = quad::integrate(
                    |t| {
                        let (st, ct) = t.sin_cos();
                        let in2 = quad::integrate(
                            |ph| {
                                let (sp, cp) = ph.sin_cos();
                                let in3 = quad::integrate(
                                    |ps| f(comb([r * ct, r * st * cp, r * st * sp * ps.cos(), r * st * sp * ps.sin()], &e)),
                                    0.0, 2.0 * PI, inner, 1e-300,
                                );
                                sp * in3.unwrap_or(f64::NAN)
                            },
                            0.0, PI, inner, 1e-300,
                        );
                        st * st * in2.unwrap_or(f64::NAN)
                    },
                    0.0, PI, inner, 1e-300,
                )?;
                Ok(r3 * v)
            }
        }
    };
    let err = std::cell::Cell::new(None);
    let v = quad::integrate_breaks(
        |r| match ang(r) {
            Ok(x) => x,
            Err(e) => {
                err.set(Some(e));
                f64::NAN
            }
        },
        &br,
        rel_tol,
        1e-300,
    );
    if let Some(e) = err.take() {
        return Err(e.into());
    }
    Ok(v? / (2.0 * PI).powi(4))
}

// ---------------------------------------------------------------- tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTable {
    pub l: u32,
    pub n: usize,
    pub rule: BoundaryRule,
    pub probes: Vec<MomentumConfig>,
    /// `values[probe][node]`, node 0 being `Λ = 0`.
    pub values: Vec<Vec<f64>>,
    /// Zero-momentum channel used to anchor marginal data.
    pub zero_channel: Option<Vec<f64>>,
    /// Largest difference between the panel rule and a two-point rule.
    pub lambda_error_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub theory: String,
    pub config: FlowConfig,
    pub config_hash: String,
    /// Λ grid, starting with 0.
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacTable {
    pub meta: TableMeta,
    pub stages: Vec<StageTable>,
}

#[derive(Serialize, Deserialize)]
struct StageHeader {
    l: u32,
    n: usize,
    rule: BoundaryRule,
    probes: Vec<MomentumConfig>,
    zero_channel: Option<Vec<f64>>,
    lambda_error_bound: f64,
    values_file: String,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    meta: TableMeta,
    stages: Vec<StageHeader>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    probe: usize,
    node: usize,
    lambda: f64,
    value: f64,
}

fn io<E: std::fmt::Display>(e: E) -> FlowError {
    FlowError::Io(e.to_string())
}

impl CacTable {
    pub fn get(&self, l: u32, n: usize) -> Option<&StageTable> {
        self.stages.iter().find(|s| s.l == l && s.n == n)
    }

    /// Writes `table.json` plus one CSV per stage into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, FlowError> {
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut headers = Vec::new();
        for s in &self.stages {
            let name = format!("cac_l{}_n{}.csv", s.l, s.n);
            let mut w = csv::Writer::from_path(dir.join(&name)).map_err(io)?;
            for (p, row) in s.values.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    w.serialize(Row { probe: p, node: k, lambda: self.meta.lambda[k], value: v }).map_err(io)?;
                }
            }
            w.flush().map_err(io)?;
            headers.push(StageHeader {
                l: s.l,
                n: s.n,
                rule: s.rule,
                probes: s.probes.clone(),
                zero_channel: s.zero_channel.clone(),
                lambda_error_bound: s.lambda_error_bound,
                values_file: name,
            });
        }
        let path = dir.join("table.json");
        let f = TableFile { meta: self.meta.clone(), stages: headers };
        std::fs::write(&path, serde_json::to_string_pretty(&f).map_err(io)?).map_err(io)?;
        Ok(path)
    }

    /// Reads a table written by [`CacTable::save`]; `path` is the JSON file.
    pub fn load(path: &Path) -> Result<Self, FlowError> {
        let text = std::fs::read_to_string(path).map_err(io)?;
        let f: TableFile = serde_json::from_str(&text).map_err(io)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut stages = Vec::new();
        for h in f.stages {
            let mut values = vec![vec![f64::NAN; f.meta.lambda.len()]; h.probes.len()];
            let mut r = csv::Reader::from_path(dir.join(&h.values_file)).map_err(io)?;
            for row in r.deserialize() {
                let row: Row = row.map_err(io)?;
                let slot = values
                    .get_mut(row.probe)
                    .and_then(|v| v.get_mut(row.node))
                    .ok_or_else(|| FlowError::Io(format!("row out of range in {}", h.values_file)))?;
                *slot = row.value;
            }
            if values.iter().flatten().any(|v| v.is_nan()) {
                return Err(FlowError::Io(format!("incomplete value block {}", h.values_file)));
            }
            stages.push(StageTable {
                l: h.l,
                n: h.n,
                rule: h.rule,
                probes: h.probes,
                values,
                zero_channel: h.zero_channel,
                lambda_error_bound: h.lambda_error_bound,
            });
        }
        Ok(CacTable { meta: f.meta, stages })
    }
}

// ---------------------------------------------------------------- dependencies

/// Lower-stage data available to a right-hand side.
pub struct Deps<'a> {
    pub cfg: &'a FlowConfig,
    pub table: &'a CacTable,
    memo: DashMap<(u64, u64), f64>,
}

fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        s += w * ys[i];
    }
    s
}

fn window(len: usize, i: usize) -> std::ops::Range<usize> {
    let lo = i.saturating_sub(1).min(len.saturating_sub(4));
    lo..(lo + 4).min(len)
}

impl<'a> Deps<'a> {
    pub fn new(cfg: &'a FlowConfig, table: &'a CacTable) -> Self {
        Deps { cfg, table, memo: DashMap::new() }
    }

    /// Interpolated value of a stored two-point stage at `(Λ, |q|)`.
    fn two_point(&self, l: u32, q: f64, lam: f64) -> Result<f64, FlowError> {
        let st = self.table.get(l, 2).ok_or(FlowError::MissingDependency { l, n: 2 })?;
        let grid = &self.table.meta.lambda;
        // along Λ: log variable above the first positive node, linear below
        let along = |row: &[f64]| -> f64 {
            let k = grid.partition_point(|&x| x <= lam).saturating_sub(1).min(grid.len() - 2);
            if lam < grid[1] {
                let r = 0..4.min(grid.len());
                return lagrange4(&grid[r.clone()], &row[r], lam);
            }
            let r = window(grid.len() - 1, k - 1);
            let xs: Vec<f64> = grid[1..][r.clone()].iter().map(|x| x.ln()).collect();
            lagrange4(&xs, &row[1..][r], lam.ln())
        };
        let mut qs: Vec<(f64, f64)> = st
            .probes
            .iter()
            .zip(&st.values)
            .map(|(p, row)| (norm(p.momenta[0]).ln(), along(row)))
            .collect();
        qs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let x = q.max(1e-300).ln().clamp(qs[0].0, qs[qs.len() - 1].0);
        let k = qs.partition_point(|p| p.0 <= x).saturating_sub(1);
        let r = window(qs.len(), k);
        let xs: Vec<f64> = qs[r.clone()].iter().map(|p| p.0).collect();
        let ys: Vec<f64> = qs[r].iter().map(|p| p.1).collect();
        Ok(lagrange4(&xs, &ys, x))
    }

    /// `L^l_n` at arbitrary momenta, from the closed tree form or a table.
    pub fn value(&self, l: u32, n: usize, q: &[Vec4], lam: f64) -> Result<f64, FlowError> {
        if n % 2 == 1 || n < 2 || (l == 0 && n == 2) {
            return Ok(0.0);
        }
        match (l, n) {
            (0, _) => tree_level_cac(n, q, lam, self.cfg.lambda0, self.cfg.g),
            (_, 2) => self.two_point(l, norm(q[0]), lam),
            _ => Err(FlowError::MissingDependency { l, n }),
        }
    }

    /// Memoised loop integral of `∂_Λ C(p) Π C(p + d_j)`.
    fn bubble(&self, dirs: &[Vec4], lam: f64) -> Result<f64, FlowError> {
        let mut h = DefaultHasher::new();
        if dirs.len() == 1 {
            norm(dirs[0]).to_bits().hash(&mut h);
        } else {
            for d in dirs {
                for c in d {
                    c.to_bits().hash(&mut h);
                }
            }
        }
        dirs.len().hash(&mut h);
        let key = (h.finish(), lam.to_bits());
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let lam0 = self.cfg.lambda0;
        let v = loop_integral(dirs, lam, self.cfg.quadrature.rel_tol, |p| {
            let mut x = covariance_scalar_dlambda(dot(p, p), lam);
            for d in dirs {
                let k = add(p, *d);
                x *= covariance_scalar(dot(k, k), lam, lam0);
            }
            x
        })?;
        self.memo.insert(key, v);
        Ok(v)
    }
}

fn loop_term(l_inner: u32, n: usize, q: &[Vec4], lam: f64, deps: &Deps) -> Result<f64, FlowError> {
    if l_inner != 0 {
        return Err(FlowError::MissingDependency { l: l_inner, n: n + 2 });
    }
    let g = deps.cfg.g;
    let lam0 = deps.cfg.lambda0;
    // legs: 0 -> p, 1 -> -p, then q
    let mut legs = vec![[0.0; 4], [0.0; 4]];
    legs.extend_from_slice(q);
    let mut total = 0.0;
    for t in tree_terms(n + 2)? {
        let mut c = t.sign * g.powi(t.vertices as i32);
        let mut dirs = Vec::new();
        for &m in &t.lines {
            let qsum = subset_sum(&legs, m);
            match (m & 1, m >> 1 & 1) {
                (1, 0) => dirs.push(qsum),
                (0, 1) => dirs.push(neg(qsum)),
                _ => c *= covariance_scalar(dot(qsum, qsum), lam, lam0),
            }
        }
        if c != 0.0 {
            total += c * deps.bubble(&dirs, lam)?;
        }
    }
    Ok(total)
}

/// Right-hand side `∂_Λ L^l_n(q)` from lower-stage data.
pub fn flow_rhs(l: u32, n: usize, q: &[Vec4], lam: f64, deps: &Deps) -> Result<f64, FlowError> {
    if q.len() != n {
        return Err(FlowError::Momenta(format!("expected {n} momenta, got {}", q.len())));
    }
    let mut total = 0.0;
    if l >= 1 {
        total += 0.5 * loop_term(l - 1, n, q, lam, deps)?;
    }
    let nonzero = |l: u32, n: usize| n % 2 == 0 && n >= 2 && (l > 0 || n >= 4);
    let full = (1u32 << n) - 1;
    for sigma in 1..full {
        let ns = sigma.count_ones() as usize + 1;
        let nt = n + 2 - ns;
        if !(0..=l).any(|l1| nonzero(l1, ns) && nonzero(l - l1, nt)) {
            continue;
        }
        let k = subset_sum(q, sigma);
        let dc = covariance_scalar_dlambda(dot(k, k), lam);
        if dc == 0.0 {
            continue;
        }
        let mut left: Vec<Vec4> = (0..n).filter(|i| sigma >> i & 1 == 1).map(|i| q[i]).collect();
        left.push(neg(k));
        let mut right = vec![k];
        right.extend((0..n).filter(|i| sigma >> i & 1 == 0).map(|i| q[i]));
        for l1 in 0..=l {
            if nonzero(l1, ns) && nonzero(l - l1, nt) {
                let a = deps.value(l1, ns, &left, lam)?;
                let b = deps.value(l - l1, nt, &right, lam)?;
                total -= 0.5 * a * dc * b;
            }
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------- probes

fn random_direction(r: &mut ChaCha8Rng) -> Vec4 {
    loop {
        let v: Vec4 = std::array::from_fn(|_| 2.0 * r.gen::<f64>() - 1.0);
        let n = norm(v);
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n, v[3] / n];
        }
    }
}

/// Probe configurations per leg count.
pub fn probe_configs(cfg: &FlowConfig, n: usize) -> Vec<MomentumConfig> {
    let p = &cfg.probes;
    let mut r = ChaCha8Rng::seed_from_u64(p.seed.wrapping_add(n as u64));
    if n == 2 {
        return (0..p.two_point_count)
            .map(|i| {
                let t = i as f64 / (p.two_point_count - 1) as f64;
                let mag = cfg.mu * p.q_min * (p.q_max / p.q_min).powf(t);
                let d = random_direction(&mut r);
                let q = [d[0] * mag, d[1] * mag, d[2] * mag, d[3] * mag];
                MomentumConfig::conserved_from_independent(vec![q])
            })
            .collect();
    }
    let count = if n == 4 { p.four_point_count } else { p.six_point_count };
    let mut out = Vec::new();
    if n == 4 {
        let s = cfg.mu / 3f64.sqrt();
        out.push(MomentumConfig::conserved_from_independent(vec![
            [s, s, s, 0.0],
            [s, -s, -s, 0.0],
            [-s, s, -s, 0.0],
        ]));
    }
    while out.len() < count {
        let ind: Vec<Vec4> = (0..n - 1)
            .map(|_| {
                let d = random_direction(&mut r);
                let m = cfg.mu * 0.3 * 10f64.powf(r.gen::<f64>());
                [d[0] * m, d[1] * m, d[2] * m, d[3] * m]
            })
            .collect();
        let c = MomentumConfig::conserved_from_independent(ind);
        if eta(&c).map(|e| e >= p.eta_min * cfg.mu).unwrap_or(false) {
            out.push(c);
        }
    }
    out
}

// ---------------------------------------------------------------- integration

/// `∫ RHS dΛ` over every panel of the grid for one momentum set; panel 0 is
/// `[0, Λ_min]`. Returns the panel integrals and the rule-difference bound.
fn panel_integrals(
    l: u32,
    n: usize,
    q: &[Vec4],
    grid: &[f64],
    deps: &Deps,
) -> Result<(Vec<f64>, f64), FlowError> {
    let m = deps.cfg.quadrature.panel_points;
    let (xm, wm) = quad::gauss_legendre(m);
    let (x2, w2) = quad::gauss_legendre(2);
    let panels: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
    let res: Vec<Result<(f64, f64), FlowError>> = panels
        .par_iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let rule = |xs: &[f64], ws: &[f64]| -> Result<f64, FlowError> {
                let mut s = 0.0;
                for (x, w) in xs.iter().zip(ws) {
                    if i == 0 {
                        let lam = 0.5 * (a + b) + 0.5 * (b - a) * x;
                        s += 0.5 * (b - a) * w * flow_rhs(l, n, q, lam, deps)?;
                    } else {
                        let (ua, ub) = (a.ln(), b.ln());
                        let lam = (0.5 * (ua + ub) + 0.5 * (ub - ua) * x).exp();
                        s += 0.5 * (ub - ua) * w * lam * flow_rhs(l, n, q, lam, deps)?;
                    }
                }
                Ok(s)
            };
            let v = rule(&xm, &wm)?;
            let v2 = rule(&x2, &w2)?;
            Ok((v, (v - v2).abs()))
        })
        .collect();
    let mut vals = Vec::with_capacity(panels.len());
    let mut err = 0.0;
    for r in res {
        let (v, e) = r?;
        vals.push(v);
        err += e;
    }
    Ok((vals, err))
}

fn prefix(panels: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for p in panels {
        out.push(out.last().unwrap() + p);
    }
    out
}

/// Integrates one stage at the given probes.
pub fn integrate_stage(
    l: u32,
    n: usize,
    probes: &[MomentumConfig],
    deps: &Deps,
) -> Result<StageTable, FlowError> {
    let cfg = deps.cfg;
    let grid = &deps.table.meta.lambda;
    let rule = apply_boundary(l, n, 0, cfg.g);
    let mu_node = grid.iter().position(|&x| (x / cfg.mu - 1.0).abs() < 1e-12).expect("μ on grid");
    let zero = vec![[0.0; 4]; n];
    let zero_prefix = if rule.class == BoundaryClass::Marginal {
        Some(prefix(&panel_integrals(l, n, &zero, grid, deps)?.0))
    } else {
        None
    };
    let rows: Vec<Result<(Vec<f64>, f64), FlowError>> = probes
        .iter()
        .map(|p| {
            let (panels, err) = panel_integrals(l, n, &p.momenta, grid, deps)?;
            let pre = prefix(&panels);
            let total = *pre.last().unwrap();
            let vals = match rule.class {
                BoundaryClass::Relevant => pre.iter().map(|&x| x + rule.value).collect(),
                BoundaryClass::Irrelevant => pre.iter().map(|&x| x - total + rule.value).collect(),
                BoundaryClass::Marginal => {
                    let z = zero_prefix.as_ref().unwrap();
                    let anchor = z.last().unwrap() - z[mu_node];
                    pre.iter().map(|&x| x - total + anchor + rule.value).collect()
                }
            };
            Ok((vals, err))
        })
        .collect();
    let mut values = Vec::new();
    let mut bound: f64 = 0.0;
    for r in rows {
        let (v, e) = r?;
        values.push(v);
        bound = bound.max(e);
    }
    let zero_channel = zero_prefix.map(|z| {
        let total = *z.last().unwrap();
        let anchor = total - z[mu_node];
        z.iter().map(|&x| x - total + anchor + rule.value).collect()
    });
    Ok(StageTable { l, n, rule, probes: probes.to_vec(), values, zero_channel, lambda_error_bound: bound })
}

fn empty_table(cfg: &FlowConfig) -> CacTable {
    let mut lambda = vec![0.0];
    lambda.extend(cfg.lambda_nodes());
    CacTable {
        meta: TableMeta {
            theory: "massless quartic scalar, gaussian regulator".into(),
            config: cfg.clone(),
            config_hash: cfg.hash(),
            lambda,
        },
        stages: Vec::new(),
    }
}

/// Fills all stages in induction order. With `RGFLOW_CACHE_DIR` set, a
/// previous result for the same configuration hash is reused.
pub fn integrate_flow(cfg: &FlowConfig) -> Result<CacTable, FlowError> {
    cfg.validate()?;
    let cache = std::env::var_os(CACHE_ENV).map(|d| PathBuf::from(d).join(cfg.hash()));
    if let Some(dir) = &cache {
        let path = dir.join("table.json");
        if path.exists() {
            if let Ok(t) = CacTable::load(&path) {
                if t.meta.config == *cfg {
                    return Ok(t);
                }
            }
        }
    }
    let mut table = empty_table(cfg);
    for (l, n) in cfg.stages() {
        let probes = probe_configs(cfg, n);
        let stage = {
            let deps = Deps::new(cfg, &table);
            integrate_stage(l, n, &probes, &deps)?
        };
        table.stages.push(stage);
    }
    if let Some(dir) = &cache {
        table.save(dir)?;
    }
    Ok(table)
}

/// Largest change of one stage at a fixed Λ node between consecutive cutoffs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffStep {
    pub lambda0_from: f64,
    pub lambda0_to: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutoffReport {
    pub l: u32,
    pub n: usize,
    pub node: usize,
    pub steps: Vec<CutoffStep>,
}

impl CutoffReport {
    /// Differences shrink from one cutoff step to the next.
    pub fn monotone(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].max_abs_diff < w[0].max_abs_diff)
    }
}

/// Compares stage `(l, n)` at Λ node `node` across tables sorted by cutoff.
/// The probes must coincide, which holds when only `lambda0` differs.
pub fn cutoff_differences(tables: &[CacTable], l: u32, n: usize, node: usize) -> Result<CutoffReport, FlowError> {
    let mut sorted: Vec<&CacTable> = tables.iter().collect();
    sorted.sort_by(|a, b| a.meta.config.lambda0.total_cmp(&b.meta.config.lambda0));
    let mut steps = Vec::new();
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let sa = a.get(l, n).ok_or(FlowError::MissingDependency { l, n })?;
        let sb = b.get(l, n).ok_or(FlowError::MissingDependency { l, n })?;
        if sa.probes != sb.probes {
            return Err(FlowError::Config("tables use different probes".into()));
        }
        let mut max_abs_diff: f64 = 0.0;
        for (ra, rb) in sa.values.iter().zip(&sb.values) {
            let (va, vb) = (ra.get(node), rb.get(node));
            let (Some(va), Some(vb)) = (va, vb) else {
                return Err(FlowError::Config(format!("node {node} outside the grid")));
            };
            max_abs_diff = max_abs_diff.max((va - vb).abs());
        }
        steps.push(CutoffStep { lambda0_from: a.meta.config.lambda0, lambda0_to: b.meta.config.lambda0, max_abs_diff });
    }
    Ok(CutoffReport { l, n, node, steps })
}

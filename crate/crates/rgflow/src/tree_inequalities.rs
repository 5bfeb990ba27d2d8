//! Randomised checks of the monotonicity inequalities for fully reduced
//! trees: in Λ for irrelevant and marginal trees, in a momentum rescaling
//! for relevant ones, and in Λ below μ for trees with a special vertex.

use crate::kinematics::{bareta, eta, MomentumConfig, MultiIndex, Vec4};
use crate::trees::{enumerate_fully_reduced, WeightedTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Relative slack for rounding in the log-space weights.
const SLACK: f64 = 1e-12;
const MAX_LEGS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeInequality {
    /// `[T] <= 0`, `λ >= Λ`: weight at λ is at most weight at Λ.
    IrrelevantLambda,
    /// `[T] < 0`: the same with the extra exceptionality ratio to the power `−[T]`.
    IrrelevantRatio,
    /// `[T] >= 0`, `0 <= t <= 1`: weight at `t·q` with `μ = Λ` is at most weight at `q`.
    RelevantScaling,
    /// Special vertex (or particular weight with four or more leg dimensions),
    /// `[T] >= 0`, `Λ <= λ <= μ`.
    BelowMu,
}

pub const ALL: [TreeInequality; 4] = [
    TreeInequality::IrrelevantLambda,
    TreeInequality::IrrelevantRatio,
    TreeInequality::RelevantScaling,
    TreeInequality::BelowMu,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality: TreeInequality,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen.
    pub max_ratio: f64,
    pub examples: Vec<String>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }
}

struct Pool {
    plain: Vec<Vec<WeightedTree>>,
    special: Vec<Vec<WeightedTree>>,
}

impl Pool {
    fn new() -> Self {
        Pool {
            plain: (0..=MAX_LEGS).map(|n| enumerate_fully_reduced(n, false)).collect(),
            special: (0..=MAX_LEGS).map(|n| enumerate_fully_reduced(n, true)).collect(),
        }
    }
}

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (r.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_vec(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec4 {
    let m = log_uniform(r, lo, hi);
    loop {
        let v: Vec4 = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        let n = crate::kinematics::norm(v);
        if n > 0.05 && n <= 1.0 {
            return v.map(|x| x * m / n);
        }
    }
}

/// Random decorated tree with `special` as requested; the particular weight
/// is left unset.
fn random_tree(r: &mut ChaCha8Rng, pool: &Pool, special: bool) -> (WeightedTree, MomentumConfig) {
    let lo = if special { 1 } else { 2 };
    let n = r.gen_range(lo..=MAX_LEGS);
    let set = if special { &pool.special[n] } else { &pool.plain[n] };
    let base = set[r.gen_range(0..set.len())].clone();
    let dims: Vec<f64> = (0..n).map(|_| r.gen_range(1.0..=3.0)).collect();
    let mut w = MultiIndex::zero(n);
    let free = if special { n } else { n - 1 };
    for leg in w.0.iter_mut().take(free) {
        if r.gen_bool(0.3) {
            leg[r.gen_range(0..4)] = r.gen_range(1..=2);
        }
    }
    let t = base.with_dims(&dims).with_w(w).expect("derivatives on free legs only");
    let cfg = if special {
        MomentumConfig::free((0..n).map(|_| random_vec(r, 1e-3, 1e3)).collect())
    } else {
        MomentumConfig::conserved_from_independent((0..n - 1).map(|_| random_vec(r, 1e-3, 1e3)).collect())
    };
    (t, cfg)
}

fn exceptionality(t: &WeightedTree, cfg: &MomentumConfig, mu: f64) -> f64 {
    if t.has_special() {
        bareta(cfg, mu).expect("free configuration")
    } else {
        eta(cfg).expect("conserved configuration")
    }
}

/// One sample: `Some((lhs, rhs, description))`, or `None` if rejected.
fn sample(kind: TreeInequality, r: &mut ChaCha8Rng, pool: &Pool) -> Option<(f64, f64, String)> {
    let mu = 1.0;
    match kind {
        TreeInequality::IrrelevantLambda | TreeInequality::IrrelevantRatio => {
            let special = r.gen_bool(0.5);
            let (t, cfg) = random_tree(r, pool, special);
            let p = if r.gen_bool(0.5) { None } else { Some(r.gen_range(0.0..4.0)) };
            let t = t.with_particular(p);
            let dim = t.dimension();
            let strict = kind == TreeInequality::IrrelevantRatio;
            if dim > 0.0 || (strict && dim >= 0.0) {
                return None;
            }
            let lam = log_uniform(r, 1e-4, 1e3);
            let big = lam * log_uniform(r, 1.0, 1e4);
            let mut rhs = t.weight(&cfg, mu, lam).ok()?;
            if strict {
                let a = exceptionality(&t, &cfg, mu).min(mu);
                rhs *= (a.max(lam) / a.max(big)).powf(-dim);
            }
            let lhs = t.weight(&cfg, mu, big).ok()?;
            Some((lhs, rhs, format!("{} Λ={lam:e} λ={big:e}", t.to_json())))
        }
        TreeInequality::RelevantScaling => {
            let special = r.gen_bool(0.5);
            let (t, cfg) = random_tree(r, pool, special);
            let need = -t.dimension();
            let p = if need <= 0.0 && r.gen_bool(0.3) { None } else { Some(need.max(0.0) + r.gen_range(0.0..3.0)) };
            let t = t.with_particular(p);
            if t.dimension() < 0.0 {
                return None;
            }
            let lam = log_uniform(r, 1e-4, 1e3);
            let s = r.gen_range(0.0..=1.0);
            let lhs = t.weight(&cfg.scaled(s), lam, lam).ok()?;
            let rhs = t.weight(&cfg, lam, lam).ok()?;
            Some((lhs, rhs, format!("{} Λ={lam:e} t={s}", t.to_json())))
        }
        TreeInequality::BelowMu => {
            let special = r.gen_bool(0.5);
            let (t, cfg) = random_tree(r, pool, special);
            let legs = t.leg_dims().iter().sum::<f64>() + t.w.order() as f64;
            if !special && legs < 4.0 {
                return None;
            }
            let base = if special { 0.0 } else { 4.0 };
            let p = (legs - base).max(0.0) + r.gen_range(0.0..3.0);
            let t = t.with_particular(Some(p));
            if t.dimension() < 0.0 {
                return None;
            }
            let lam = log_uniform(r, 1e-5, mu);
            let mid = log_uniform(r, lam, mu);
            let lhs = t.weight(&cfg, mu, mid).ok()?;
            let rhs = t.weight(&cfg, mu, lam).ok()?;
            Some((lhs, rhs, format!("{} Λ={lam:e} λ={mid:e}", t.to_json())))
        }
    }
}

/// Draws accepted samples until `samples` have been checked.
pub fn check_inequality(kind: TreeInequality, samples: usize, seed: u64) -> InequalityReport {
    let pool = Pool::new();
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64 + 1).wrapping_mul(0x9E37_79B9));
    let mut rep = InequalityReport { inequality: kind, samples: 0, violations: 0, max_ratio: 0.0, examples: Vec::new() };
    while rep.samples < samples {
        let Some((lhs, rhs, what)) = sample(kind, &mut r, &pool) else { continue };
        rep.samples += 1;
        let ratio = lhs / rhs;
        rep.max_ratio = rep.max_ratio.max(ratio);
        if !(lhs <= rhs * (1.0 + SLACK)) {
            rep.violations += 1;
            if rep.examples.len() < 5 {
                rep.examples.push(what);
            }
        }
    }
    rep
}

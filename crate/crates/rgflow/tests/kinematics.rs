use proptest::prelude::*;
use rgflow::kinematics::{bareta, bareta_i, eta, eta_i, ln_plus, max_subsum, norm, MomentumConfig, MultiIndex, Vec4};

/// `|base + Σ_S v|` over every subset, by plain bitmask loop.
fn subset_norms(base: Vec4, v: &[Vec4]) -> Vec<f64> {
    (0u32..1 << v.len())
        .map(|m| {
            let mut s = base;
            for (j, q) in v.iter().enumerate() {
                if m >> j & 1 == 1 {
                    for c in 0..4 {
                        s[c] += q[c];
                    }
                }
            }
            norm(s)
        })
        .collect()
}

fn brute_inf(q: &[Vec4], i: usize) -> f64 {
    let others: Vec<Vec4> = q.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &p)| p).collect();
    subset_norms(q[i], &others).into_iter().fold(f64::INFINITY, f64::min)
}

fn close(a: f64, b: f64) -> bool {
    close_at(a, b, 0.0)
}

/// Relative agreement, with rounding of cancelling sums measured against `scale`.
fn close_at(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(scale).max(1e-300)
}

fn arb_vec() -> impl Strategy<Value = Vec4> {
    prop::array::uniform4(-10.0f64..10.0)
}

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 512, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn extrema_match_subset_enumeration(ind in prop::collection::vec(arb_vec(), 1..6)) {
        let c = MomentumConfig::conserved_from_independent(ind.clone());
        let n = c.len();
        let scale: f64 = c.momenta.iter().map(|&q| norm(q)).sum();
        let sup = subset_norms([0.0; 4], &c.momenta).into_iter().fold(0.0, f64::max);
        prop_assert!(close(max_subsum(&c).unwrap(), sup));
        for i in 0..n - 1 {
            prop_assert!(close_at(eta_i(&c, i).unwrap(), brute_inf(&c.momenta[..n - 1], i), scale));
        }
        for i in 0..n {
            prop_assert!(close_at(bareta_i(&c, i).unwrap(), brute_inf(&c.momenta, i), scale));
        }
    }

    #[test]
    fn exceptionality_ordering(ind in prop::collection::vec(arb_vec(), 1..6)) {
        let c = MomentumConfig::conserved_from_independent(ind);
        let n = c.len();
        let e = eta(&c).unwrap();
        prop_assert!(e >= 0.0);
        let q = max_subsum(&c).unwrap();
        for i in 0..n - 1 {
            let ei = eta_i(&c, i).unwrap();
            prop_assert!(bareta_i(&c, i).unwrap() <= ei * (1.0 + 1e-12));
            prop_assert!(q >= ei * (1.0 - 1e-12));
        }
        prop_assert!(bareta(&c, 1.0).unwrap() <= e * (1.0 + 1e-12));
    }

    #[test]
    fn log_subadditivity(a in 0.0f64..1e3, b in 0.0f64..1e3, x in -1e3f64..1e3, y in -1e3f64..1e3) {
        let s = a * x + b * y;
        prop_assume!(s >= 0.0);
        let lhs = ln_plus(s).unwrap();
        let rhs = ln_plus(a + b).unwrap() + ln_plus(x.abs()).unwrap() + ln_plus(y.abs()).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn multiindex_order_is_entry_sum(w in prop::collection::vec(prop::array::uniform4(0u32..4), 0..5)) {
        let m = MultiIndex(w.clone());
        prop_assert_eq!(m.order(), w.iter().flatten().sum::<u32>());
        let f: f64 = w.iter().flatten().map(|&k| (1..=k).product::<u32>() as f64).product();
        prop_assert_eq!(m.factorial(), f);
        prop_assert!(MultiIndex::zero(w.len()).le(&m));
    }
}

#[test]
fn paired_momenta() {
    let q = [0.3, -1.2, 0.5, 2.0];
    let c = MomentumConfig::conserved_from_independent(vec![q]);
    assert!(close(max_subsum(&c).unwrap(), norm(q)));
    assert!(close(eta(&c).unwrap(), norm(q)));
    assert_eq!(bareta(&c, 1.0).unwrap(), 0.0);
    let p = [1.0, 2.0, 0.0, 0.0];
    let c = MomentumConfig::conserved_from_independent(vec![p, p.map(|x| -x), q, [0.1, 0.1, 0.1, 0.1]]);
    assert_eq!(eta(&c).unwrap(), 0.0);
}

#[test]
fn empty_and_single_conventions() {
    let e = MomentumConfig::free(vec![]);
    assert_eq!(max_subsum(&e).unwrap(), 0.0);
    assert_eq!(bareta(&e, 2.5).unwrap(), 2.5);
    let single = MomentumConfig { momenta: vec![[3.0, 4.0, 0.0, 0.0]], conserved: true };
    assert_eq!(eta_i(&single, 0).unwrap(), 5.0);
    assert!(eta_i(&single, 1).is_err());
}

#[test]
fn positive_log() {
    assert_eq!(ln_plus(1.0).unwrap(), 0.0);
    assert!((ln_plus(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(ln_plus(0.5).unwrap(), 0.0);
    assert_eq!(ln_plus(0.0).unwrap(), 0.0);
    assert!(ln_plus(-1.0).is_err());
}

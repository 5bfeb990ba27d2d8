use rgflow::bounds::{
    c_spread, check_gs_properties, corrupt, envelope, g_s, verify_all, verify_bound, EnvelopeSpec,
};
use rgflow::flow::{integrate_flow, CacTable, FlowConfig};
use rgflow::kinematics::{MomentumConfig, MultiIndex};
use std::sync::OnceLock;

fn tables() -> &'static Vec<CacTable> {
    static T: OnceLock<Vec<CacTable>> = OnceLock::new();
    T.get_or_init(|| {
        [10.0, 20.0, 40.0]
            .iter()
            .map(|&lambda0| integrate_flow(&FlowConfig { lambda0, ..Default::default() }).unwrap())
            .collect()
    })
}

#[test]
fn g_s_properties_exhaustive() {
    let reports = check_gs_properties(12, 3);
    for r in &reports {
        println!("{}: {} checked, {} violations {:?}", r.property, r.checked, r.violations, r.examples.first());
    }
    assert!(reports[..3].iter().all(|r| r.passed()));
    // the fusion inequality genuinely needs both orders positive
    assert!(reports[3].violations > 0);
}

#[test]
fn g_s_direct_values() {
    assert_eq!(g_s(0.0, 0, 0, 1), 1.0);
    assert_eq!(g_s(2.0, 3, 5, 2), 4.0 * 6.0);
    assert_eq!(g_s(2.0, 3, 1, 2), 4.0 * 6.0 + 3.0);
}

#[test]
fn all_tables_bounded_with_uniform_constant() {
    let mut by_stage: Vec<Vec<_>> = Vec::new();
    for t in tables() {
        let reports = verify_all(t).unwrap();
        for (i, r) in reports.into_iter().enumerate() {
            println!(
                "Λ₀={} ({}, {}) d={} c={:.4e} max ratio {:.4e} violations {}",
                r.lambda0, r.l, r.n, r.degree, r.c_fit, r.max_ratio, r.violations.len()
            );
            assert!(r.passed, "({}, {}) at Λ₀={}", r.l, r.n, r.lambda0);
            if by_stage.len() <= i {
                by_stage.push(Vec::new());
            }
            by_stage[i].push(r);
        }
    }
    for reps in &by_stage {
        let spread = c_spread(reps);
        println!("({}, {}) constant spread {spread:.3}", reps[0].l, reps[0].n);
        assert!(spread <= 2.0);
    }
}

#[test]
fn corrupted_table_is_flagged() {
    let bad = corrupt(&tables()[1], 100.0);
    for s in &bad.stages {
        let r = verify_bound(&bad, s.l, s.n, &EnvelopeSpec::scalar(s.n), s.l + 1).unwrap();
        assert!(!r.passed, "({}, {}) corruption not detected", s.l, s.n);
    }
}

#[test]
fn four_leg_envelope_sums_both_shapes() {
    let spec = EnvelopeSpec::scalar(4);
    let trees = spec.trees().unwrap();
    let cfg = MomentumConfig::conserved_from_independent(vec![[0.3, 0.1, 0.0, 0.2], [0.0, 1.1, 0.4, -0.3], [0.5, 0.5, 0.5, 0.5]]);
    let direct: f64 = trees.iter().map(|t| t.weight(&cfg, 1.0, 0.2).unwrap()).sum();
    assert!((envelope(&trees, &cfg, 1.0, 0.2).unwrap() / direct - 1.0).abs() < 1e-14);
    // tree-level four-point is −g, so it is bounded with no logarithms
    for lam in [0.0, 0.1, 1.0, 10.0] {
        assert!(envelope(&trees, &cfg, 1.0, lam).unwrap() > 0.0);
    }
}

#[test]
fn envelope_scaling_limit_counts_trees() {
    for n in [2usize, 4, 6] {
        let trees = EnvelopeSpec::scalar(n).trees().unwrap();
        let dim = trees.iter().map(|t| t.dimension()).fold(f64::MIN, f64::max);
        let count = trees.iter().filter(|t| t.dimension() == dim).count() as f64;
        let ind: Vec<[f64; 4]> = (0..n - 1).map(|i| [0.1 * i as f64 + 0.2, 0.3, -0.1, 0.05 * i as f64]).collect();
        let cfg = MomentumConfig::conserved_from_independent(ind);
        let lam = 1e6;
        let e = envelope(&trees, &cfg, 1.0, lam).unwrap() * lam.powf(-dim);
        assert!((e / count - 1.0).abs() < 1e-6, "n={n}: {e} vs {count}");
    }
}

#[test]
fn derivative_envelope_decreases_with_exceptionality() {
    use rand::{Rng, SeedableRng};
    let mut w = MultiIndex::zero(4);
    w.0[0] = [1, 0, 0, 0];
    let plain = EnvelopeSpec::scalar(4).trees().unwrap();
    let with_w = EnvelopeSpec { w: Some(w), ..EnvelopeSpec::scalar(4) }.trees().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let lam = 0.05;
    let mut samples = Vec::new();
    for _ in 0..2000 {
        let ind: Vec<[f64; 4]> = (0..3).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let cfg = MomentumConfig::conserved_from_independent(ind);
        let ratio = envelope(&with_w, &cfg, 1.0, lam).unwrap() / envelope(&plain, &cfg, 1.0, lam).unwrap();
        let e = rgflow::kinematics::eta_i(&cfg, 0).unwrap();
        assert!((ratio * e.max(lam) - 1.0).abs() < 1e-12);
        samples.push((e, ratio));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(samples.windows(2).all(|p| p[1].1 <= p[0].1 * (1.0 + 1e-12)));
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgflow::kinematics::{norm, MomentumConfig, MultiIndex, Vec4};
use rgflow::tree_inequalities::{check_inequality, TreeInequality, ALL};
use rgflow::trees::{
    enumerate_fully_reduced, enumerate_topologies, FuseMode, TreeError, Vertex, WeightedTree, XSpaceTree,
};
use std::time::Instant;

fn ext(leg: usize, dim: f64) -> Vertex {
    Vertex::External { leg, dim }
}

/// Three legs of dimensions ½, 3/2, 1; a two-valent vertex on the first
/// leg, a four-valent centre carrying an internal leaf, and a three-valent
/// vertex on the third leg carrying another leaf.
fn example_tree() -> WeightedTree {
    use Vertex::Internal;
    let vertices = vec![ext(0, 0.5), Internal, Internal, ext(1, 1.5), Internal, Internal, ext(2, 1.0), Internal];
    let edges = vec![(0, 1), (1, 2), (2, 3), (2, 4), (2, 5), (4, 6), (4, 7)];
    let w = MultiIndex(vec![[1, 0, 0, 0], [3, 0, 0, 0], [0, 0, 0, 0]]);
    WeightedTree::new(vertices, edges, w, None).unwrap()
}

fn sup(a: f64, b: f64) -> f64 {
    a.max(b)
}

fn random_vec(r: &mut ChaCha8Rng, scale: f64) -> Vec4 {
    std::array::from_fn(|_| r.gen_range(-1.0..1.0) * scale)
}

#[test]
fn enumeration_counts() {
    let t0 = Instant::now();
    assert_eq!(enumerate_fully_reduced(1, false).len(), 1);
    assert_eq!(enumerate_fully_reduced(2, false).len(), 1);
    assert_eq!(enumerate_topologies(3, false).len(), 1);
    assert_eq!(enumerate_topologies(4, false).len(), 2);
    // one star and three labelled ways of pairing the legs
    assert_eq!(enumerate_fully_reduced(4, false).len(), 4);
    assert!(t0.elapsed().as_secs_f64() < 1.0);
    for n in 1..=6 {
        for t in enumerate_fully_reduced(n, false) {
            assert!(t.is_fully_reduced());
            assert_eq!(t.dimension(), 4.0 - n as f64);
        }
    }
}

#[test]
fn one_leg_tree_has_single_leaf() {
    let t = &enumerate_fully_reduced(1, false)[0];
    assert_eq!(t.vertices.len(), 2);
    assert_eq!(t.n_internal(), 1);
}

#[test]
fn example_tree_dimension_and_weight() {
    let t = example_tree();
    assert_eq!(t.dimension(), -3.0);
    assert_eq!(t.dimension_by_components(), -3.0);
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (s1, s2) = (10f64.powf(r.gen_range(-2.0..2.0)), 10f64.powf(r.gen_range(-2.0..2.0)));
        let q1 = random_vec(&mut r, s1);
        let q2 = random_vec(&mut r, s2);
        let cfg = MomentumConfig::conserved_from_independent(vec![q1, q2]);
        let (a1, a2, a3) = (norm(cfg.momenta[0]), norm(cfg.momenta[1]), norm(cfg.momenta[2]));
        let lam = 10f64.powf(r.gen_range(-3.0..3.0));
        let closed_form = sup(a1, lam).sqrt() * lam * lam
            / (sup(a2, lam).sqrt() * sup(a3, lam) * sup(a1.min(a3), lam) * sup(a2.min(a3), lam).powi(3));
        let w = t.weight(&cfg, 1.0, lam).unwrap();
        assert!((w / closed_form - 1.0).abs() < 1e-12, "{w} vs {closed_form}");
    }
}

#[test]
fn example_tree_centre_takes_largest_momentum() {
    let t = example_tree();
    let cfg = MomentumConfig::conserved_from_independent(vec![[0.1, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0]]);
    let a = t.assign_momenta(&cfg).unwrap();
    let largest = cfg.momenta.iter().map(|&q| norm(q)).fold(0.0, f64::max);
    assert!((a.vertex[2] - largest).abs() < 1e-15);
}

#[test]
fn two_leg_derivative_weight() {
    let t = enumerate_fully_reduced(2, false)[0].clone().with_w(MultiIndex(vec![[0, 1, 0, 0], [0; 4]])).unwrap();
    let cfg = MomentumConfig::conserved_from_independent(vec![[0.3, 0.4, 1.2, 0.0]]);
    for lam in [0.1, 1.3, 5.0] {
        assert!((t.weight(&cfg, 1.0, lam).unwrap() / sup(1.3, lam) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn derivative_on_last_leg_rejected() {
    let t = enumerate_fully_reduced(2, false)[0].clone();
    assert!(matches!(t.with_w(MultiIndex(vec![[0; 4], [1, 0, 0, 0]])), Err(TreeError::DerivativeOnLast)));
}

#[test]
fn scaling_limit() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=5 {
        for special in [false, true] {
            for t in enumerate_fully_reduced(n, special) {
                let cfg = if special {
                    MomentumConfig::free((0..n).map(|_| random_vec(&mut r, 1.0)).collect())
                } else {
                    MomentumConfig::conserved_from_independent((0..n - 1).map(|_| random_vec(&mut r, 1.0)).collect())
                };
                let lam = 1e6;
                let v = t.weight(&cfg, 1.0, lam).unwrap() * lam.powf(-t.dimension());
                assert!((v - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn reduction_table_rows() {
    use Vertex::Internal;
    // external – two-valent – internal – external reduces with equal weight
    let chain = WeightedTree::new(
        vec![ext(0, 1.0), Internal, Internal, ext(1, 1.0)],
        vec![(0, 1), (1, 2), (2, 3)],
        MultiIndex::zero(2),
        None,
    )
    .unwrap();
    let red = chain.reduce();
    assert_eq!(red.n_internal(), 1);
    let cfg = MomentumConfig::conserved_from_independent(vec![[0.7, 0.0, 0.1, 0.0]]);
    for lam in [0.01, 0.7, 3.0] {
        let a = chain.weight(&cfg, 1.0, lam).unwrap();
        let b = red.weight(&cfg, 1.0, lam).unwrap();
        assert!((a / b - 1.0).abs() < 1e-12);
    }
    // a leaf on an internal vertex costs Λ/sup(|q|,Λ)
    let base = enumerate_fully_reduced(3, false)[0].clone();
    let centre = base.vertices.iter().position(|v| v.is_internal()).unwrap();
    let mut leafy = base.clone();
    leafy.vertices.push(Internal);
    leafy.edges.push((centre, leafy.vertices.len() - 1));
    let leafy = WeightedTree::new(leafy.vertices, leafy.edges, MultiIndex::zero(3), None).unwrap();
    let cfg = MomentumConfig::conserved_from_independent(vec![[0.3, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0]]);
    let qv = cfg.momenta.iter().map(|&q| norm(q)).fold(0.0, f64::max);
    for lam in [0.05, 1.0, 9.0] {
        let old = leafy.weight(&cfg, 1.0, lam).unwrap();
        let new = base.weight(&cfg, 1.0, lam).unwrap();
        assert!((old / (lam / sup(qv, lam) * new) - 1.0).abs() < 1e-12);
    }
    let fixed = enumerate_fully_reduced(4, false)[1].clone();
    assert_eq!(fixed.reduce(), fixed);
}

#[test]
fn reduction_confluent_and_monotone() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    for i in 0..1000 {
        let n = 1 + i % 5;
        let special = i % 2 == 0;
        let set = enumerate_fully_reduced(n, special);
        let base = &set[r.gen_range(0..set.len())];
        let big = base.inflate(&mut r, 1 + i % 6);
        let a = big.reduce();
        let b = big.reduce_random(&mut r);
        assert_eq!(a.canonical_labeled(), b.canonical_labeled());
        assert_eq!(a.canonical_labeled(), base.canonical_labeled());
        assert_eq!(big.dimension(), a.dimension());
        let cfg = if special {
            MomentumConfig::free((0..n).map(|_| random_vec(&mut r, 2.0)).collect())
        } else {
            MomentumConfig::conserved_from_independent((0..n - 1).map(|_| random_vec(&mut r, 2.0)).collect())
        };
        let lam = 10f64.powf(r.gen_range(-2.0..1.0));
        assert!(big.weight(&cfg, 1.0, lam).unwrap() <= a.weight(&cfg, 1.0, lam).unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn fusing_special_trees_raises_weight() {
    let mut r = ChaCha8Rng::seed_from_u64(23);
    for i in 0..10_000 {
        let (n1, n2) = (1 + i % 3, 1 + (i / 3) % 3);
        let s1 = enumerate_fully_reduced(n1, true);
        let s2 = enumerate_fully_reduced(n2, true);
        let t1 = s1[r.gen_range(0..s1.len())].clone().with_particular(Some(r.gen_range(0.0..2.0)));
        let t2 = s2[r.gen_range(0..s2.len())].clone().with_particular(Some(r.gen_range(0.0..2.0)));
        let q1: Vec<Vec4> = (0..n1).map(|_| random_vec(&mut r, 3.0)).collect();
        let q2: Vec<Vec4> = (0..n2).map(|_| random_vec(&mut r, 3.0)).collect();
        let fused = WeightedTree::fuse(&t1, &t2, FuseMode::MergeSpecial).unwrap();
        let mut all = q1.clone();
        all.extend(&q2);
        let (mu, lam) = (1.0, 10f64.powf(r.gen_range(-2.0..1.0)));
        let lhs = t1.weight(&MomentumConfig::free(q1), mu, lam).unwrap() * t2.weight(&MomentumConfig::free(q2), mu, lam).unwrap();
        let rhs = fused.weight(&MomentumConfig::free(all), mu, lam).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }
}

#[test]
fn joining_two_leg_trees() {
    let t = enumerate_fully_reduced(2, false)[0].clone();
    let fused = WeightedTree::fuse(&t, &t, FuseMode::JoinLegs).unwrap();
    assert_eq!(fused.n_legs(), 2);
    let k = [0.4, 0.3, 0.0, 1.2];
    let cfg = MomentumConfig::conserved_from_independent(vec![k]);
    for lam in [0.1, 1.3, 4.0] {
        let lhs = t.weight(&cfg, 1.0, lam).unwrap().powi(2);
        // both joined legs have dimension one
        let rhs = fused.weight(&cfg, 1.0, lam).unwrap() / sup(1.3, lam).powf(1.0 + 1.0 - 4.0);
        assert!(lhs <= rhs * (1.0 + 1e-12));
    }
    let special = enumerate_fully_reduced(1, true)[0].clone();
    assert!(WeightedTree::fuse(&special, &t, FuseMode::MergeSpecial).is_err());
}

#[test]
fn amputation_estimate() {
    let t = enumerate_fully_reduced(3, false)[0].clone();
    let mut r = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..10_000 {
        let scale = 10f64.powf(r.gen_range(-1.5..1.5));
        let q = random_vec(&mut r, scale);
        let full = MomentumConfig::conserved_from_independent(vec![[0.0; 4], q]);
        let rest = MomentumConfig::conserved_from_independent(vec![q]);
        let lam = 10f64.powf(r.gen_range(-2.0..2.0));
        let (t2, factor) = t.amputate(0, [0.0; 4], &rest, 1.0, lam).unwrap();
        assert_eq!(t2.n_legs(), 2);
        assert!(t2.is_fully_reduced());
        let old = t.weight(&full, 1.0, lam).unwrap();
        let new = t2.weight(&rest, 1.0, lam).unwrap();
        assert!(old <= factor * new * (1.0 + 1e-12), "{old} > {factor} · {new}");
    }
    let cfg = MomentumConfig::conserved_from_independent(vec![[1.0, 0.0, 0.0, 0.0]]);
    assert!(t.amputate(0, [1.0, 0.0, 0.0, 0.0], &cfg, 1.0, 1.0).is_err());
}

#[test]
fn position_space_weights() {
    let star = XSpaceTree::new(vec![(0, 3), (1, 3), (2, 3)], vec![3, 3, 3, 1], vec![2.0, 3.0, 1.5, 2.5], 0.1).unwrap();
    let far: Vec<Vec4> = (0..4).map(|i| [3.0 * i as f64, 0.0, 0.0, 0.0]).collect();
    assert_eq!(star.weight(&far).unwrap(), 1.0);
    let chain = XSpaceTree::new(vec![(0, 1), (1, 2), (2, 3)], vec![1, 0, 3, 2], vec![1.0; 4], 0.5).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let x: Vec<Vec4> = (0..4).map(|_| random_vec(&mut r, 0.6)).collect();
        for t in [&star, &chain] {
            let mut oracle = 1.0;
            for i in 0..4 {
                let d: f64 = (0..4).map(|c| (x[i][c] - x[t.z[i]][c]).powi(2)).sum::<f64>().sqrt();
                oracle *= d.min(1.0).powf(-t.dims[i] - t.eps);
            }
            assert!((t.weight(&x).unwrap() / oracle - 1.0).abs() < 1e-12);
        }
    }
    assert!(XSpaceTree::new(vec![(0, 1)], vec![0, 0], vec![1.0, 1.0], 0.1).is_err());
    let same = vec![[0.0; 4]; 4];
    assert!(star.weight(&same).is_err());
}

#[test]
fn monotonicity_inequalities() {
    for kind in ALL {
        let t0 = Instant::now();
        let rep = check_inequality(kind, 100_000, 4);
        println!(
            "{kind:?}: {} samples, {} violations, max ratio {:.6e} ({:.1} s)",
            rep.samples,
            rep.violations,
            rep.max_ratio,
            t0.elapsed().as_secs_f64()
        );
        if kind == TreeInequality::IrrelevantRatio {
            // the exceptionality ratio cannot be extracted from factors whose
            // momenta exceed λ, so the sampler must find counterexamples
            assert!(rep.violations > 0);
        } else {
            assert!(rep.passed(), "{:?}", rep.examples);
        }
    }
}

#[test]
fn strengthened_irrelevant_bound_counterexample() {
    // weight sup(|q|,λ)^{-2}, dimension −2, η = |q| = 10³
    let t = enumerate_fully_reduced(2, false)[0].clone().with_dims(&[3.0, 3.0]);
    assert_eq!(t.dimension(), -2.0);
    let cfg = MomentumConfig::conserved_from_independent(vec![[1e3, 0.0, 0.0, 0.0]]);
    let (mu, lam, big) = (1.0, 1e-3, 10.0);
    let lhs = t.weight(&cfg, mu, big).unwrap();
    assert!((lhs / 1e-6 - 1.0).abs() < 1e-12);
    let a = 1e3f64.min(mu);
    let rhs = (a.max(lam) / a.max(big)).powi(2) * t.weight(&cfg, mu, lam).unwrap();
    assert!((rhs / 1e-8 - 1.0).abs() < 1e-12);
    assert!(lhs > rhs);
}

#[test]
fn json_round_trip() {
    let t = example_tree();
    let back = WeightedTree::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/example_tree.json")).unwrap();
    assert_eq!(WeightedTree::from_json(&text).unwrap(), t);
}

fn arb_tree() -> impl Strategy<Value = (WeightedTree, Vec<Vec4>, f64)> {
    (1usize..=5, any::<bool>(), any::<u64>(), -3.0f64..3.0).prop_map(|(n, special, seed, ll)| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let set = enumerate_fully_reduced(n, special);
        let dims: Vec<f64> = (0..n).map(|_| r.gen_range(1.0..3.0)).collect();
        let t = set[r.gen_range(0..set.len())].clone().with_dims(&dims);
        let k = if special { n } else { n - 1 };
        let q = (0..k).map(|_| random_vec(&mut r, 5.0)).collect();
        (t, q, 10f64.powf(ll))
    })
}

fn config_for(t: &WeightedTree, q: Vec<Vec4>) -> MomentumConfig {
    if t.has_special() {
        MomentumConfig::free(q)
    } else {
        MomentumConfig::conserved_from_independent(q)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn dimension_formula_matches_component_sum((t, _, _) in arb_tree()) {
        prop_assert!((t.dimension() - t.dimension_by_components()).abs() < 1e-12);
    }

    #[test]
    fn edge_momenta_match_cut_sums((t, q, _) in arb_tree()) {
        let cfg = config_for(&t, q);
        let a = t.assign_momenta(&cfg).unwrap();
        let adj = t.adjacency();
        let root = t.special().unwrap_or_else(|| t.leg_vertex(t.n_legs() - 1).unwrap());
        for (e, &(x, y)) in t.edges.iter().enumerate() {
            // legs on the side of x after cutting e
            let mut seen = vec![false; t.vertices.len()];
            let mut stack = vec![x];
            seen[x] = true;
            seen[y] = true;
            let mut side = vec![x];
            while let Some(v) = stack.pop() {
                for &(u, f) in &adj[v] {
                    if f != e && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                        side.push(u);
                    }
                }
            }
            let far = if side.contains(&root) { None } else { Some(()) };
            let mut s = [0.0; 4];
            for v in 0..t.vertices.len() {
                let on_x = side.contains(&v);
                if on_x == far.is_some() {
                    if let Vertex::External { leg, .. } = t.vertices[v] {
                        for c in 0..4 { s[c] += cfg.momenta[leg][c]; }
                    }
                }
            }
            let d: Vec4 = std::array::from_fn(|c| s[c] - a.edge[e][c]);
            prop_assert!(norm(d) < 1e-9, "edge {e}");
        }
    }

    #[test]
    fn weight_positive_and_reproducible((t, q, lam) in arb_tree()) {
        let cfg = config_for(&t, q);
        let a = t.weight(&cfg, 1.0, lam).unwrap();
        let b = t.weight(&cfg, 1.0, lam).unwrap();
        prop_assert!(a > 0.0 && a.is_finite());
        prop_assert_eq!(a, b);
    }
}

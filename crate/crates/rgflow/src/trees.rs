//! Weighted trees: momentum routing, weights, reduction, fusion, amputation
//! and enumeration of fully reduced shapes. Also the position-space trees
//! used for short-distance bounds.
//!
//! External vertices carry a leg number and are distinguishable; internal
//! vertices are anonymous. Momenta are routed from a root (the special vertex
//! if present, otherwise the last leg) so every edge carries the sum of the
//! external momenta below it.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    self, add, bareta, bareta_i, eta, eta_i, max_subsum, norm, KinematicsError, MomentumConfig,
    MultiIndex, Vec4,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("momentum configuration does not match tree: {0}")]
    Momenta(String),
    #[error("derivative on the dependent last momentum")]
    DerivativeOnLast,
    #[error("cannot fuse: {0}")]
    Fuse(String),
    #[error("cannot amputate: {0}")]
    Amputate(String),
    #[error("coincident points on a weighted line ({0}, {1})")]
    Coincident(usize, usize),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Vertex {
    External { leg: usize, dim: f64 },
    Internal,
    Special,
}

impl Vertex {
    pub fn is_external(&self) -> bool {
        matches!(self, Vertex::External { .. })
    }
    pub fn is_internal(&self) -> bool {
        matches!(self, Vertex::Internal)
    }
    pub fn is_special(&self) -> bool {
        matches!(self, Vertex::Special)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<(usize, usize)>,
    /// Derivatives per leg; an empty list means no derivatives.
    #[serde(default)]
    pub w: MultiIndex,
    #[serde(default)]
    pub particular: Option<f64>,
}

/// Edge momenta (oriented towards the root) and per-vertex momentum norms.
#[derive(Debug, Clone)]
pub struct Assignment {
    pub edge: Vec<Vec4>,
    /// Norm of the momentum carried by each vertex; zero for the special one.
    pub vertex: Vec<f64>,
}

/// One reduction move as listed in the reduction table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Remove a 2-valent internal vertex and fuse its two lines.
    Bridge(usize),
    /// Remove a 1-valent internal vertex hanging on an internal vertex.
    LeafOnInternal(usize),
    /// Remove a 1-valent internal vertex hanging on the special vertex.
    LeafOnSpecial(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseMode {
    MergeSpecial,
    /// Join the last leg of the first tree with the first leg of the second.
    JoinLegs,
}

impl WeightedTree {
    pub fn new(
        vertices: Vec<Vertex>,
        edges: Vec<(usize, usize)>,
        w: MultiIndex,
        particular: Option<f64>,
    ) -> Result<Self, TreeError> {
        let mut t = WeightedTree { vertices, edges, w, particular };
        t.normalize_w();
        t.validate()?;
        Ok(t)
    }

    fn normalize_w(&mut self) {
        if self.w.0.is_empty() {
            self.w = MultiIndex::zero(self.n_legs());
        }
    }

    pub fn from_json(s: &str) -> Result<Self, TreeError> {
        let t: WeightedTree =
            serde_json::from_str(s).map_err(|e| TreeError::Invalid(e.to_string()))?;
        WeightedTree::new(t.vertices, t.edges, t.w, t.particular)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn n_legs(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_external()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_internal()).count()
    }

    pub fn special(&self) -> Option<usize> {
        self.vertices.iter().position(Vertex::is_special)
    }

    pub fn has_special(&self) -> bool {
        self.special().is_some()
    }

    pub fn leg_vertex(&self, leg: usize) -> Option<usize> {
        self.vertices
            .iter()
            .position(|v| matches!(v, Vertex::External { leg: l, .. } if *l == leg))
    }

    pub fn leg_dims(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_legs()];
        for v in &self.vertices {
            if let Vertex::External { leg, dim } = v {
                d[*leg] = *dim;
            }
        }
        d
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        adj
    }

    pub fn valency(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let nv = self.vertices.len();
        let bad = |m: &str| Err(TreeError::Invalid(m.to_string()));
        if nv == 0 {
            return bad("no vertices");
        }
        if self.edges.len() + 1 != nv {
            return bad("a tree has one edge fewer than vertices");
        }
        for &(a, b) in &self.edges {
            if a >= nv || b >= nv || a == b {
                return bad("edge endpoint out of range or self-loop");
            }
        }
        // connectivity (with the edge count this also rules out cycles)
        let adj = self.adjacency();
        let mut seen = vec![false; nv];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("not connected");
        }
        if self.vertices.iter().filter(|v| v.is_special()).count() > 1 {
            return bad("more than one special vertex");
        }
        let n = self.n_legs();
        let mut legs = vec![false; n];
        for (v, kind) in self.vertices.iter().enumerate() {
            match kind {
                Vertex::External { leg, dim } => {
                    if *leg >= n || legs[*leg] {
                        return bad("legs must be numbered 0..n-1 without repeats");
                    }
                    legs[*leg] = true;
                    if !dim.is_finite() {
                        return bad("external dimension must be finite");
                    }
                    if adj[v].len() != 1 {
                        return bad("external vertices have valency 1");
                    }
                    if self.vertices[adj[v][0].0].is_external() {
                        return bad("external vertices cannot be adjacent");
                    }
                }
                Vertex::Internal => {
                    if !(1..=4).contains(&adj[v].len()) {
                        return bad("internal valency must be in 1..=4");
                    }
                }
                Vertex::Special => {}
            }
        }
        if !self.has_special() && (n < 1 || self.n_internal() < 1) {
            return bad("trees without special vertex need a leg and an internal vertex");
        }
        if self.w.0.len() != n {
            return bad("derivative multiindex length must equal leg count");
        }
        if !self.has_special() && self.w.leg_order(n - 1) != 0 {
            return Err(TreeError::DerivativeOnLast);
        }
        Ok(())
    }

    fn root(&self) -> usize {
        self.special().unwrap_or_else(|| {
            self.leg_vertex(self.n_legs() - 1).expect("validated tree has its last leg")
        })
    }

    /// Parent pointers and a post-order from the root.
    fn rooted(&self) -> (Vec<Option<(usize, usize)>>, Vec<usize>) {
        let adj = self.adjacency();
        let root = self.root();
        let mut parent = vec![None; self.vertices.len()];
        let mut order = Vec::with_capacity(self.vertices.len());
        let mut stack = vec![root];
        let mut seen = vec![false; self.vertices.len()];
        seen[root] = true;
        while let Some(v) = stack.pop() {
            order.push(v);
            for &(u, e) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some((v, e));
                    stack.push(u);
                }
            }
        }
        order.reverse();
        (parent, order)
    }

    fn check_config(&self, cfg: &MomentumConfig) -> Result<(), TreeError> {
        if cfg.len() != self.n_legs() {
            return Err(TreeError::Momenta(format!(
                "{} momenta for {} legs",
                cfg.len(),
                self.n_legs()
            )));
        }
        if !self.has_special() && !cfg.conserved {
            return Err(TreeError::Momenta(
                "trees without special vertex need a conserved configuration".into(),
            ));
        }
        Ok(())
    }

    pub fn assign_momenta(&self, cfg: &MomentumConfig) -> Result<Assignment, TreeError> {
        self.check_config(cfg)?;
        let (parent, order) = self.rooted();
        let nv = self.vertices.len();
        let mut sub = vec![[0.0; 4]; nv];
        let mut edge = vec![[0.0; 4]; self.edges.len()];
        for &v in &order {
            if let Vertex::External { leg, .. } = self.vertices[v] {
                sub[v] = add(sub[v], cfg.momenta[leg]);
            }
            if let Some((p, e)) = parent[v] {
                edge[e] = sub[v];
                sub[p] = add(sub[p], sub[v]);
            }
        }
        if !self.has_special() {
            let total = norm(sub[self.root()]);
            let scale = cfg.momenta.iter().map(|&q| norm(q)).fold(1.0, f64::max);
            if total > 1e-9 * scale {
                return Err(TreeError::Momenta(format!("conservation residual {total:e}")));
            }
        }
        let mut vertex = vec![0.0; nv];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let m = norm(edge[e]);
            for v in [a, b] {
                if !self.vertices[v].is_special() && m > vertex[v] {
                    vertex[v] = m;
                }
            }
        }
        for (v, kind) in self.vertices.iter().enumerate() {
            if let Vertex::External { leg, .. } = kind {
                vertex[v] = norm(cfg.momenta[*leg]);
            }
        }
        Ok(Assignment { edge, vertex })
    }

    /// Weight factors as `(base, exponent)` pairs; the weight is their
    /// product `base^exponent`.
    pub fn factors(
        &self,
        cfg: &MomentumConfig,
        mu: f64,
        lambda: f64,
    ) -> Result<Vec<(f64, f64)>, TreeError> {
        let a = self.assign_momenta(cfg)?;
        let adj = self.adjacency();
        let mut out = Vec::with_capacity(self.vertices.len() + self.edges.len() + 2);
        for e in &a.edge {
            out.push((norm(*e).max(lambda), -2.0));
        }
        for (v, kind) in self.vertices.iter().enumerate() {
            let k = adj[v].len() as f64;
            match kind {
                Vertex::External { dim, .. } => out.push((a.vertex[v].max(lambda), 3.0 - dim)),
                Vertex::Internal => out.push((a.vertex[v].max(lambda), 4.0 - k)),
                Vertex::Special => out.push((mu.max(lambda), -k)),
            }
        }
        if let Some(p) = self.particular {
            out.push((max_subsum(cfg)?.max(mu).max(lambda), p));
        }
        let special = self.has_special();
        for i in 0..self.n_legs() {
            let wi = self.w.leg_order(i);
            if wi == 0 {
                continue;
            }
            let e = if special { bareta_i(cfg, i)? } else { eta_i(cfg, i)? };
            out.push((e.max(lambda), -(wi as f64)));
        }
        Ok(out)
    }

    pub fn log_weight(&self, cfg: &MomentumConfig, mu: f64, lambda: f64) -> Result<f64, TreeError> {
        Ok(self
            .factors(cfg, mu, lambda)?
            .into_iter()
            .filter(|&(_, x)| x != 0.0)
            .map(|(b, x)| x * b.ln())
            .sum())
    }

    pub fn weight(&self, cfg: &MomentumConfig, mu: f64, lambda: f64) -> Result<f64, TreeError> {
        Ok(self.log_weight(cfg, mu, lambda)?.exp())
    }

    /// Closed-form dimension.
    pub fn dimension(&self) -> f64 {
        let base = if self.has_special() { 0.0 } else { 4.0 };
        base + self.particular.unwrap_or(0.0)
            - self.leg_dims().iter().sum::<f64>()
            - self.w.order() as f64
    }

    /// Dimension as the plain sum of all component exponents.
    pub fn dimension_by_components(&self) -> f64 {
        let adj = self.adjacency();
        let mut d = -2.0 * self.edges.len() as f64;
        for (v, kind) in self.vertices.iter().enumerate() {
            let k = adj[v].len() as f64;
            d += match kind {
                Vertex::External { dim, .. } => 3.0 - dim,
                Vertex::Internal => 4.0 - k,
                Vertex::Special => -k,
            };
        }
        d + self.particular.unwrap_or(0.0) - self.w.order() as f64
    }

    /// All moves applicable to the current tree.
    pub fn moves(&self) -> Vec<Move> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        for (v, kind) in self.vertices.iter().enumerate() {
            if !kind.is_internal() {
                continue;
            }
            match adj[v].len() {
                2 => {
                    let (a, b) = (adj[v][0].0, adj[v][1].0);
                    if !(self.vertices[a].is_external() && self.vertices[b].is_external()) {
                        out.push(Move::Bridge(v));
                    }
                }
                1 => {
                    let u = adj[v][0].0;
                    match self.vertices[u] {
                        Vertex::Internal => out.push(Move::LeafOnInternal(v)),
                        Vertex::Special => out.push(Move::LeafOnSpecial(v)),
                        Vertex::External { .. } => {}
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn is_fully_reduced(&self) -> bool {
        self.moves().is_empty()
    }

    pub fn apply(&self, mv: Move) -> WeightedTree {
        let adj = self.adjacency();
        let mut t = self.clone();
        match mv {
            Move::Bridge(v) => {
                let (a, b) = (adj[v][0].0, adj[v][1].0);
                t.edges.push((a, b));
                t.remove_vertex(v);
            }
            Move::LeafOnInternal(v) | Move::LeafOnSpecial(v) => t.remove_vertex(v),
        }
        t
    }

    fn remove_vertex(&mut self, v: usize) {
        self.vertices.remove(v);
        let remap = |x: usize| if x > v { x - 1 } else { x };
        self.edges = self
            .edges
            .iter()
            .filter(|&&(a, b)| a != v && b != v)
            .map(|&(a, b)| (remap(a), remap(b)))
            .collect();
    }

    /// Applies moves until none is left, always taking the first available.
    pub fn reduce(&self) -> WeightedTree {
        let mut t = self.clone();
        while let Some(&mv) = t.moves().first() {
            t = t.apply(mv);
        }
        t
    }

    /// Like [`reduce`](Self::reduce) but picks moves at random.
    pub fn reduce_random<R: Rng>(&self, rng: &mut R) -> WeightedTree {
        let mut t = self.clone();
        loop {
            let mv = t.moves();
            match mv.choose(rng) {
                Some(&m) => t = t.apply(m),
                None => return t,
            }
        }
    }

    /// Randomly undoes reductions: subdivides lines and hangs internal
    /// leaves on internal or special vertices. The result reduces back to a
    /// tree with the same labeled canonical form.
    pub fn inflate<R: Rng>(&self, rng: &mut R, steps: usize) -> WeightedTree {
        let mut t = self.clone();
        for _ in 0..steps {
            let adj = t.adjacency();
            match rng.gen_range(0..3) {
                0 if !t.edges.is_empty() => {
                    let e = rng.gen_range(0..t.edges.len());
                    let (a, b) = t.edges.swap_remove(e);
                    let c = t.vertices.len();
                    t.vertices.push(Vertex::Internal);
                    t.edges.push((a, c));
                    t.edges.push((c, b));
                }
                1 => {
                    let hosts: Vec<usize> = (0..t.vertices.len())
                        .filter(|&v| t.vertices[v].is_internal() && adj[v].len() >= 2 && adj[v].len() < 4)
                        .collect();
                    if let Some(&h) = hosts.choose(rng) {
                        let c = t.vertices.len();
                        t.vertices.push(Vertex::Internal);
                        t.edges.push((h, c));
                    }
                }
                _ => {
                    if let Some(s) = t.special() {
                        let c = t.vertices.len();
                        t.vertices.push(Vertex::Internal);
                        t.edges.push((s, c));
                    }
                }
            }
        }
        t
    }

    fn canon_rooted(&self, adj: &[Vec<(usize, usize)>], v: usize, from: usize, labeled: bool) -> String {
        let mut kids: Vec<String> = adj[v]
            .iter()
            .filter(|&&(u, _)| u != from)
            .map(|&(u, _)| self.canon_rooted(adj, u, v, labeled))
            .collect();
        kids.sort();
        let tag = match &self.vertices[v] {
            Vertex::External { leg, .. } if labeled => format!("e{leg}"),
            Vertex::External { .. } => "e".to_string(),
            Vertex::Internal => "i".to_string(),
            Vertex::Special => "s".to_string(),
        };
        format!("{tag}({})", kids.join(","))
    }

    /// Canonical string up to relabeling of internal vertices, keeping legs.
    pub fn canonical_labeled(&self) -> String {
        let adj = self.adjacency();
        self.canon_rooted(&adj, self.root(), usize::MAX, true)
    }

    /// Canonical string of the shape with leg numbers forgotten.
    pub fn canonical_topology(&self) -> String {
        let adj = self.adjacency();
        if let Some(s) = self.special() {
            return self.canon_rooted(&adj, s, usize::MAX, false);
        }
        tree_centers(&adj)
            .into_iter()
            .map(|c| self.canon_rooted(&adj, c, usize::MAX, false))
            .min()
            .expect("non-empty tree has a center")
    }

    pub fn with_dims(mut self, dims: &[f64]) -> Self {
        for v in &mut self.vertices {
            if let Vertex::External { leg, dim } = v {
                *dim = dims[*leg];
            }
        }
        self
    }

    pub fn with_w(mut self, w: MultiIndex) -> Result<Self, TreeError> {
        self.w = w;
        self.validate()?;
        Ok(self)
    }

    pub fn with_particular(mut self, p: Option<f64>) -> Self {
        self.particular = p;
        self
    }

    /// Removes a zero-momentum leg without derivatives, reduces, and returns
    /// the new tree with the factor bounding the weight change. `cfg` is the
    /// configuration of the remaining legs.
    pub fn amputate(
        &self,
        leg: usize,
        leg_momentum: Vec4,
        cfg: &MomentumConfig,
        mu: f64,
        lambda: f64,
    ) -> Result<(WeightedTree, f64), TreeError> {
        let n = self.n_legs();
        if leg >= n {
            return Err(TreeError::Amputate(format!("no leg {leg}")));
        }
        if norm(leg_momentum) != 0.0 {
            return Err(TreeError::Amputate("leg momentum is not zero".into()));
        }
        if self.w.leg_order(leg) != 0 {
            return Err(TreeError::Amputate("derivatives act on the leg".into()));
        }
        if !self.has_special() && leg + 1 == n {
            return Err(TreeError::Amputate("the dependent last leg cannot be amputated".into()));
        }
        if n < 2 && !self.has_special() {
            return Err(TreeError::Amputate("tree would lose its only leg".into()));
        }
        let v = self.leg_vertex(leg).expect("leg exists");
        let dim = self.leg_dims()[leg];
        let mut t = self.clone();
        t.vertices[v] = Vertex::Internal;
        for kind in &mut t.vertices {
            if let Vertex::External { leg: l, .. } = kind {
                if *l > leg {
                    *l -= 1;
                }
            }
        }
        t.w.0.remove(leg);
        let t = t.reduce();
        t.validate()?;
        let a0 = if self.has_special() { bareta(cfg, mu)? } else { eta(cfg)? };
        let factor = lambda.powf(1.0 - dim) / a0.min(mu).max(lambda);
        Ok((t, factor))
    }

    /// Fuses two trees. Merge-special joins the special vertices; join-legs
    /// removes the last leg of `t1` and the first leg of `t2` and connects
    /// their neighbours. Derivatives on the first leg of `t2` move to the
    /// first leg of `t1`.
    pub fn fuse(t1: &WeightedTree, t2: &WeightedTree, mode: FuseMode) -> Result<WeightedTree, TreeError> {
        let n1 = t1.n_legs();
        let n2 = t2.n_legs();
        let off = t1.vertices.len();
        let mut vertices = t1.vertices.clone();
        let mut edges = t1.edges.clone();
        match mode {
            FuseMode::MergeSpecial => {
                let (s1, s2) = match (t1.special(), t2.special()) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(TreeError::Fuse("merge-special needs two special vertices".into())),
                };
                let map = |x: usize| -> usize {
                    if x == s2 {
                        s1
                    } else if x > s2 {
                        x - 1 + off
                    } else {
                        x + off
                    }
                };
                for (i, v) in t2.vertices.iter().enumerate() {
                    if i == s2 {
                        continue;
                    }
                    vertices.push(match v {
                        Vertex::External { leg, dim } => Vertex::External { leg: leg + n1, dim: *dim },
                        other => other.clone(),
                    });
                }
                edges.extend(t2.edges.iter().map(|&(a, b)| (map(a), map(b))));
                let mut w = t1.w.0.clone();
                w.extend(t2.w.0.iter().cloned());
                let particular = match (t1.particular, t2.particular) {
                    (None, None) => None,
                    (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
                };
                WeightedTree::new(vertices, edges, MultiIndex(w), particular)
            }
            FuseMode::JoinLegs => {
                if t1.has_special() && t2.has_special() {
                    return Err(TreeError::Fuse("join-legs needs at most one special vertex".into()));
                }
                if n1 == 0 || n2 == 0 {
                    return Err(TreeError::Fuse("both trees need legs".into()));
                }
                if t1.w.leg_order(n1 - 1) != 0 {
                    return Err(TreeError::Fuse("derivatives on the joined leg of the first tree".into()));
                }
                let carried = t2.w.0[0];
                if carried.iter().any(|&x| x > 0) && n1 < 2 {
                    return Err(TreeError::Fuse("no leg to carry derivatives to".into()));
                }
                let v1 = t1.leg_vertex(n1 - 1).expect("leg");
                let v2 = t2.leg_vertex(0).expect("leg");
                let adj1 = t1.adjacency();
                let adj2 = t2.adjacency();
                let u1 = adj1[v1][0].0;
                let u2 = adj2[v2][0].0;
                for v in &t2.vertices {
                    vertices.push(match v {
                        Vertex::External { leg, dim } if *leg > 0 => Vertex::External { leg: leg - 1 + n1 - 1, dim: *dim },
                        other => other.clone(),
                    });
                }
                edges.extend(t2.edges.iter().map(|&(a, b)| (a + off, b + off)));
                edges.push((u1, u2 + off));
                let mut t = WeightedTree {
                    vertices,
                    edges,
                    w: MultiIndex::default(),
                    particular: None,
                };
                // drop the two joined external vertices, higher index first
                let (a, b) = (v1, v2 + off);
                t.remove_vertex(a.max(b));
                t.remove_vertex(a.min(b));
                let mut w: Vec<[u32; 4]> = t1.w.0[..n1 - 1].to_vec();
                if let Some(first) = w.first_mut() {
                    for d in 0..4 {
                        first[d] += carried[d];
                    }
                }
                w.extend(t2.w.0[1..].iter().cloned());
                t.w = MultiIndex(w);
                t.particular = match (t1.particular, t2.particular) {
                    (None, None) => None,
                    (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
                };
                t.validate()?;
                Ok(t)
            }
        }
    }

    /// Single line between an external and a 1-valent internal vertex.
    pub fn one_leg(dim: f64) -> WeightedTree {
        WeightedTree::new(
            vec![Vertex::External { leg: 0, dim }, Vertex::Internal],
            vec![(0, 1)],
            MultiIndex::zero(1),
            None,
        )
        .expect("valid")
    }
}

fn tree_centers(adj: &[Vec<(usize, usize)>]) -> Vec<usize> {
    let n = adj.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut layer: Vec<usize> = (0..n).filter(|&v| deg[v] <= 1).collect();
    let mut left = n;
    while left > 2 {
        left -= layer.len();
        let mut next = Vec::new();
        for &v in &layer {
            for &(u, _) in &adj[v] {
                deg[u] -= 1;
                if deg[u] == 1 {
                    next.push(u);
                }
            }
        }
        layer = next;
    }
    layer
}

/// Set partitions of `items` into exactly `k` blocks, each listed once.
fn partitions_into(items: &[usize], k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(items: &[usize], k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if items.is_empty() {
            if cur.len() == k {
                out.push(cur.clone());
            }
            return;
        }
        let (x, rest) = (items[0], &items[1..]);
        for b in 0..cur.len() {
            cur[b].push(x);
            rec(rest, k, cur, out);
            cur[b].pop();
        }
        if cur.len() < k {
            cur.push(vec![x]);
            rec(rest, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone)]
enum Shape {
    Leaf(usize),
    Node(Vec<Shape>),
}

/// Rooted fully reduced subtrees on a block of legs.
fn shapes(block: &[usize]) -> Vec<Shape> {
    if block.len() == 1 {
        return vec![Shape::Leaf(block[0])];
    }
    let mut out = Vec::new();
    for k in 2..=3 {
        for part in partitions_into(block, k) {
            let mut acc: Vec<Vec<Shape>> = vec![Vec::new()];
            for b in &part {
                let opts = shapes(b);
                acc = acc
                    .into_iter()
                    .flat_map(|pre| {
                        opts.iter().map(move |o| {
                            let mut p = pre.clone();
                            p.push(o.clone());
                            p
                        })
                    })
                    .collect();
            }
            out.extend(acc.into_iter().map(Shape::Node));
        }
    }
    out
}

fn build(shape: &Shape, parent: usize, vertices: &mut Vec<Vertex>, edges: &mut Vec<(usize, usize)>) {
    let v = vertices.len();
    match shape {
        Shape::Leaf(l) => vertices.push(Vertex::External { leg: *l, dim: 1.0 }),
        Shape::Node(kids) => {
            vertices.push(Vertex::Internal);
            for k in kids {
                build(k, v, vertices, edges);
            }
        }
    }
    edges.push((parent, v));
}

/// All fully reduced trees with `n` numbered legs, every leg of dimension 1
/// and no derivatives. Labeled variants are listed separately.
pub fn enumerate_fully_reduced(n: usize, special: bool) -> Vec<WeightedTree> {
    let mut out = Vec::new();
    if special {
        let legs: Vec<usize> = (0..n).collect();
        let mut all_parts = Vec::new();
        if n == 0 {
            all_parts.push(Vec::new());
        }
        for k in 1..=n {
            all_parts.extend(partitions_into(&legs, k));
        }
        for part in all_parts {
            let mut acc: Vec<Vec<Shape>> = vec![Vec::new()];
            for b in &part {
                let opts = shapes(b);
                acc = acc
                    .into_iter()
                    .flat_map(|pre| {
                        opts.iter().map(move |o| {
                            let mut p = pre.clone();
                            p.push(o.clone());
                            p
                        })
                    })
                    .collect();
            }
            for branches in acc {
                let mut vertices = vec![Vertex::Special];
                let mut edges = Vec::new();
                for b in &branches {
                    build(b, 0, &mut vertices, &mut edges);
                }
                out.push(WeightedTree::new(vertices, edges, MultiIndex::zero(n), None).expect("valid"));
            }
        }
    } else {
        match n {
            0 => {}
            1 => out.push(WeightedTree::one_leg(1.0)),
            2 => out.push(
                WeightedTree::new(
                    vec![
                        Vertex::External { leg: 0, dim: 1.0 },
                        Vertex::Internal,
                        Vertex::External { leg: 1, dim: 1.0 },
                    ],
                    vec![(0, 1), (1, 2)],
                    MultiIndex::zero(2),
                    None,
                )
                .expect("valid"),
            ),
            _ => {
                let block: Vec<usize> = (0..n - 1).collect();
                for s in shapes(&block) {
                    let mut vertices = vec![Vertex::External { leg: n - 1, dim: 1.0 }];
                    let mut edges = Vec::new();
                    build(&s, 0, &mut vertices, &mut edges);
                    out.push(WeightedTree::new(vertices, edges, MultiIndex::zero(n), None).expect("valid"));
                }
            }
        }
    }
    let mut seen = BTreeMap::new();
    out.retain(|t| seen.insert(t.canonical_labeled(), ()).is_none());
    out
}

/// One representative per unlabeled shape.
pub fn enumerate_topologies(n: usize, special: bool) -> Vec<WeightedTree> {
    let mut seen = BTreeMap::new();
    for t in enumerate_fully_reduced(n, special) {
        seen.entry(t.canonical_topology()).or_insert(t);
    }
    seen.into_values().collect()
}

/// Position-space tree with a choice function on its vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XSpaceTree {
    pub edges: Vec<(usize, usize)>,
    /// `z[i]` is a neighbour of vertex `i`.
    pub z: Vec<usize>,
    pub dims: Vec<f64>,
    pub eps: f64,
}

impl XSpaceTree {
    pub fn new(edges: Vec<(usize, usize)>, z: Vec<usize>, dims: Vec<f64>, eps: f64) -> Result<Self, TreeError> {
        let s = z.len();
        let bad = |m: &str| Err(TreeError::Invalid(m.to_string()));
        if dims.len() != s || s == 0 {
            return bad("one dimension per vertex");
        }
        if edges.len() + 1 != s {
            return bad("a tree has one edge fewer than vertices");
        }
        if eps <= 0.0 {
            return bad("epsilon must be positive");
        }
        let t = WeightedTree {
            vertices: vec![Vertex::Internal; s],
            edges: edges.clone(),
            w: MultiIndex::default(),
            particular: None,
        };
        let adj = t.adjacency();
        if adj.iter().any(|a| a.is_empty()) && s > 1 {
            return bad("not connected");
        }
        for (i, &zi) in z.iter().enumerate() {
            if zi == i || !adj[i].iter().any(|&(u, _)| u == zi) {
                return bad("z(i) must be a neighbour of i");
            }
        }
        // connectivity
        let mut seen = vec![false; s];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if seen.iter().any(|x| !x) {
            return bad("not connected");
        }
        Ok(XSpaceTree { edges, z, dims, eps })
    }

    pub fn weight(&self, x: &[Vec4]) -> Result<f64, TreeError> {
        let mut w = 1.0;
        for (i, &zi) in self.z.iter().enumerate() {
            let d = norm(kinematics::sub(x[i], x[zi]));
            if d == 0.0 {
                return Err(TreeError::Coincident(i, zi));
            }
            w *= d.min(1.0).powf(-self.dims[i] - self.eps);
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        // Stirling numbers S(4,2)=7, S(4,3)=6
        assert_eq!(partitions_into(&[0, 1, 2, 3], 2).len(), 7);
        assert_eq!(partitions_into(&[0, 1, 2, 3], 3).len(), 6);
    }

    #[test]
    fn small_counts() {
        assert_eq!(enumerate_fully_reduced(1, false).len(), 1);
        assert_eq!(enumerate_fully_reduced(2, false).len(), 1);
        assert_eq!(enumerate_fully_reduced(3, false).len(), 1);
        assert_eq!(enumerate_fully_reduced(4, false).len(), 4);
        assert_eq!(enumerate_topologies(4, false).len(), 2);
        assert_eq!(enumerate_fully_reduced(0, true).len(), 1);
        assert_eq!(enumerate_fully_reduced(2, true).len(), 2);
    }

    #[test]
    fn two_leg_not_reducible() {
        let t = &enumerate_fully_reduced(2, false)[0];
        assert!(t.is_fully_reduced());
        assert_eq!(t.dimension(), 2.0);
    }
}

//! Homogeneous phylogenies (complete binary trees), their path metrics,
//! unrooted topologies, and split-based comparison.
//!
//! Nodes of a [`Phylogeny`] are indexed in level order: the root is `0`,
//! the children of `v` are `2v + 1` and `2v + 2`, and level `d` occupies the
//! contiguous range `2^d - 1 .. 2^{d+1} - 1`.

mod newick;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub use newick::{newick_records, parse_newick, parse_phylogeny, parse_topology, ParsedTree};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Phylogeny {
    h: usize,
    /// Length of the edge above each node; entry 0 (the root) is unused.
    edge_tau: Vec<f64>,
    /// Label (1-based) of the leaf at each left-to-right leaf position.
    leaf_labels: Vec<usize>,
}

impl Phylogeny {
    /// Builds a phylogeny from level-ordered edge lengths and leaf labels.
    ///
    /// `edge_tau` has one entry per node (`2^{h+1} - 1`), the root's is ignored.
    /// Zero-length edges are allowed; negative or non-finite ones are not.
    pub fn new(h: usize, mut edge_tau: Vec<f64>, leaf_labels: Vec<usize>) -> Result<Self> {
        if h > 24 {
            return Err(Error::InvalidParameter(format!("h = {h} is too deep")));
        }
        let n = 1usize << h;
        if edge_tau.len() != 2 * n - 1 {
            return Err(Error::TreeShape(format!(
                "expected {} edge lengths for h = {h}, got {}",
                2 * n - 1,
                edge_tau.len()
            )));
        }
        edge_tau[0] = 0.0;
        if let Some(t) = edge_tau.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "edge length {t} is not a finite non-negative number"
            )));
        }
        check_labels(&leaf_labels, n)?;
        Ok(Phylogeny {
            h,
            edge_tau,
            leaf_labels,
        })
    }

    /// All edges of length `tau`, leaf labels `1..=n` left to right.
    pub fn uniform(h: usize, tau: f64) -> Result<Self> {
        let n = 1usize << h;
        Self::new(h, vec![tau; 2 * n - 1], (1..=n).collect())
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.h
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n_leaves() - 1
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (v > 0).then(|| (v - 1) / 2)
    }

    pub fn children(&self, v: usize) -> Option<(usize, usize)> {
        (!self.is_leaf(v)).then(|| (2 * v + 1, 2 * v + 2))
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        v >= self.n_leaves() - 1
    }

    pub fn level(v: usize) -> usize {
        (usize::BITS - 1 - (v + 1).leading_zeros()) as usize
    }

    /// Node indices at `level` (0 is the root).
    pub fn level_range(level: usize) -> std::ops::Range<usize> {
        ((1 << level) - 1)..((1 << (level + 1)) - 1)
    }

    /// Node index of the leaf at left-to-right position `pos`.
    pub fn leaf_node(&self, pos: usize) -> usize {
        self.n_leaves() - 1 + pos
    }

    pub fn leaf_labels(&self) -> &[usize] {
        &self.leaf_labels
    }

    /// Label of a leaf node.
    pub fn label_of(&self, v: usize) -> Option<usize> {
        self.is_leaf(v)
            .then(|| self.leaf_labels[v + 1 - self.n_leaves()])
    }

    /// Node index of each label: entry `label - 1`.
    pub fn nodes_by_label(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_leaves()];
        for (pos, &label) in self.leaf_labels.iter().enumerate() {
            out[label - 1] = self.leaf_node(pos);
        }
        out
    }

    pub fn edge_tau(&self, v: usize) -> f64 {
        self.edge_tau[v]
    }

    pub fn edge_taus(&self) -> &[f64] {
        &self.edge_tau
    }

    /// Node indices in the subtree below `v`, at its deepest level.
    pub fn descendant_leaves(&self, v: usize) -> std::ops::Range<usize> {
        let depth = self.h - Self::level(v);
        let first = ((v + 1) << depth) - 1;
        first..first + (1 << depth)
    }

    /// Distance from the root along the tree.
    pub fn root_distances(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_nodes()];
        for v in 1..self.n_nodes() {
            d[v] = d[(v - 1) / 2] + self.edge_tau[v];
        }
        d
    }

    pub fn lca(mut u: usize, mut v: usize) -> usize {
        while u != v {
            if u > v {
                u = (u - 1) / 2;
            } else {
                v = (v - 1) / 2;
            }
        }
        u
    }

    /// Reorders children so that, at every internal node, the left subtree
    /// holds the smaller minimum label. Topology and lengths are unchanged.
    pub fn canonicalize(&self) -> Phylogeny {
        let nodes = self.n_nodes();
        let mut min_label = vec![usize::MAX; nodes];
        for v in (0..nodes).rev() {
            min_label[v] = match self.children(v) {
                None => self.label_of(v).unwrap(),
                Some((a, b)) => min_label[a].min(min_label[b]),
            };
        }
        // old node for each new index
        let mut source = vec![0usize; nodes];
        for w in 0..(self.n_leaves() - 1) {
            let (a, b) = self.children(source[w]).unwrap();
            let (first, second) = if min_label[a] <= min_label[b] {
                (a, b)
            } else {
                (b, a)
            };
            source[2 * w + 1] = first;
            source[2 * w + 2] = second;
        }
        let edge_tau = source.iter().map(|&v| self.edge_tau[v]).collect();
        let leaf_labels = (0..self.n_leaves())
            .map(|pos| self.label_of(source[self.leaf_node(pos)]).unwrap())
            .collect();
        Phylogeny {
            h: self.h,
            edge_tau,
            leaf_labels,
        }
    }

    /// Same tree with labels replaced by `relabel[label - 1]`.
    pub fn relabeled(&self, relabel: &[usize]) -> Result<Phylogeny> {
        let labels = self.leaf_labels.iter().map(|&l| relabel[l - 1]).collect();
        Phylogeny::new(self.h, self.edge_tau.clone(), labels)
    }

    /// Largest absolute difference between corresponding edge lengths, or
    /// `None` if shape or labels differ.
    pub fn max_length_diff(&self, other: &Phylogeny) -> Option<f64> {
        (self.h == other.h && self.leaf_labels == other.leaf_labels).then(|| {
            self.edge_tau
                .iter()
                .zip(&other.edge_tau)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
    }

    pub fn to_newick(&self) -> String {
        newick::write_phylogeny(self)
    }
}

fn check_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::TreeShape(format!(
            "expected {n} leaf labels, got {}",
            labels.len()
        )));
    }
    let mut seen = vec![false; n];
    for &l in labels {
        if l == 0 || l > n || std::mem::replace(&mut seen[l - 1], true) {
            return Err(Error::TreeShape(format!(
                "leaf labels must be a permutation of 1..={n}"
            )));
        }
    }
    Ok(())
}

/// Complete binary tree on `h` levels with edge lengths uniform on `[f, g]`
/// and a uniformly random leaf labeling.
pub fn random_homogeneous_phylogeny<R: Rng + ?Sized>(
    h: usize,
    f: f64,
    g: f64,
    rng: &mut R,
) -> Result<Phylogeny> {
    if h < 1 {
        return Err(Error::InvalidParameter("h must be >= 1".into()));
    }
    if !(f > 0.0) || !(f <= g) || !g.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need 0 < f <= g, got f = {f}, g = {g}"
        )));
    }
    let n = 1usize << h;
    let mut edge_tau = vec![0.0; 2 * n - 1];
    for t in edge_tau.iter_mut().skip(1) {
        *t = if f == g { g } else { rng.random_range(f..=g) };
    }
    let mut labels: Vec<usize> = (1..=n).collect();
    labels.shuffle(rng);
    Phylogeny::new(h, edge_tau, labels)
}

/// All-pairs path lengths over the nodes of a phylogeny.
#[derive(Clone, Debug)]
pub struct TreeMetric {
    n_nodes: usize,
    dist: Vec<f64>,
}

impl TreeMetric {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.dist[u * self.n_nodes + v]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

pub fn tree_metric(phy: &Phylogeny) -> TreeMetric {
    let n_nodes = phy.n_nodes();
    let root = phy.root_distances();
    let mut dist = vec![0.0; n_nodes * n_nodes];
    for u in 0..n_nodes {
        for v in (u + 1)..n_nodes {
            let d = root[u] + root[v] - 2.0 * root[Phylogeny::lca(u, v)];
            dist[u * n_nodes + v] = d;
            dist[v * n_nodes + u] = d;
        }
    }
    TreeMetric { n_nodes, dist }
}

/// Sum of edge lengths on the path between two nodes.
pub fn path_length(phy: &Phylogeny, mut u: usize, mut v: usize) -> f64 {
    let mut total = 0.0;
    while u != v {
        if u > v {
            total += phy.edge_tau(u);
            u = (u - 1) / 2;
        } else {
            total += phy.edge_tau(v);
            v = (v - 1) / 2;
        }
    }
    total
}

/// A leaf bipartition, stored as the side not containing label 1.
pub type Split = Vec<u64>;

/// Unrooted leaf-labeled tree. Nodes `0..n` are the leaves (node `i` carries
/// label `i + 1`); internal nodes follow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    adj: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an undirected edge list.
    pub fn from_edges(n_leaves: usize, n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n_nodes];
        for &(a, b) in edges {
            if a >= n_nodes || b >= n_nodes || a == b {
                return Err(Error::TreeShape(format!("bad edge ({a}, {b})")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        let t = Topology { n: n_leaves, adj };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        let internal = self.n.saturating_sub(2);
        if self.adj.len() != self.n + internal {
            return Err(Error::TreeShape(format!(
                "{} leaves need {internal} internal vertices, found {}",
                self.n,
                self.adj.len().saturating_sub(self.n)
            )));
        }
        if self.n < 2 {
            return Ok(());
        }
        for (v, nb) in self.adj.iter().enumerate() {
            let want = if v < self.n { 1 } else { 3 };
            if nb.len() != want {
                return Err(Error::TreeShape(format!(
                    "vertex {v} has degree {}, expected {want}",
                    nb.len()
                )));
            }
        }
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adj[v] {
                if !std::mem::replace(&mut seen[w], true) {
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::TreeShape("topology is disconnected".into()));
        }
        Ok(())
    }

    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn n_internal(&self) -> usize {
        self.adj.len() - self.n
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Non-trivial splits (both sides have at least two leaves).
    pub fn splits(&self) -> BTreeSet<Split> {
        let mut out = BTreeSet::new();
        if self.n < 4 {
            return out;
        }
        let words = self.n.div_ceil(64);
        // Root at leaf 0 (label 1); every edge's lower side excludes label 1.
        let mut order = Vec::with_capacity(self.adj.len());
        let mut parent = vec![usize::MAX; self.adj.len()];
        let mut stack = vec![0usize];
        parent[0] = 0;
        while let Some(v) = stack.pop() {
            order.push(v);
            for &w in &self.adj[v] {
                if parent[w] == usize::MAX {
                    parent[w] = v;
                    stack.push(w);
                }
            }
        }
        let mut below: Vec<Split> = vec![vec![0; words]; self.adj.len()];
        for &v in order.iter().rev() {
            if v < self.n {
                below[v][v / 64] |= 1 << (v % 64);
            }
            if v != 0 {
                let size: u32 = below[v].iter().map(|w| w.count_ones()).sum();
                if size >= 2 && (size as usize) <= self.n - 2 {
                    out.insert(below[v].clone());
                }
                let p = parent[v];
                let child = std::mem::take(&mut below[v]);
                for (a, b) in below[p].iter_mut().zip(&child) {
                    *a |= b;
                }
                below[v] = child;
            }
        }
        out
    }

    pub fn to_newick(&self) -> String {
        newick::write_topology(self)
    }
}

/// Split-based comparison of two unrooted topologies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TopologyComparison {
    pub equal: bool,
    pub robinson_foulds: usize,
}

/// Robinson-Foulds distance: number of splits present in exactly one tree.
pub fn robinson_foulds(a: &Topology, b: &Topology) -> Result<usize> {
    if a.n_leaves() != b.n_leaves() {
        return Err(Error::LeafSetMismatch);
    }
    let sa = a.splits();
    let sb = b.splits();
    Ok(sa.symmetric_difference(&sb).count())
}

pub fn topologies_equal(a: &Topology, b: &Topology) -> Result<TopologyComparison> {
    let rf = robinson_foulds(a, b)?;
    Ok(TopologyComparison {
        equal: rf == 0,
        robinson_foulds: rf,
    })
}

/// Removes the root: its two incident edges become a single edge.
pub fn unroot(phy: &Phylogeny) -> Topology {
    let n = phy.n_leaves();
    if phy.h() == 0 {
        return Topology {
            n: 1,
            adj: vec![Vec::new()],
        };
    }
    // internal non-root phylogeny nodes 1..n-1 map to n + (v - 1)
    let map = |v: usize| -> usize {
        if phy.is_leaf(v) {
            phy.label_of(v).unwrap() - 1
        } else {
            n + v - 1
        }
    };
    let n_nodes = n + (n - 2);
    let mut edges = Vec::with_capacity(n_nodes - 1);
    for v in 3..phy.n_nodes() {
        edges.push((map(v), map((v - 1) / 2)));
    }
    edges.push((map(1), map(2)));
    Topology::from_edges(n, n_nodes, &edges)
        .expect("complete binary tree unroots to a binary topology")
}

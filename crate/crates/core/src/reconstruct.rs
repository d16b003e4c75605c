//! Level-by-level topology reconstruction on a complete binary tree.
//!
//! Each level starts from the active vertices `Z` (leaves first), estimates
//! their pairwise distances, keeps every quartet split whose gated
//! four-point value exceeds `f/2`, pairs vertices that are never separated by
//! a kept split into cherries, and replaces each cherry by its parent. Parent
//! sequences are estimated from the parent's descendant leaves with the
//! diluted-tree root estimator. The last two vertices are joined by one edge.

use serde::Serialize;

use crate::asr::diluted_root_estimator;
use crate::error::{Error, Result};
use crate::metric::{DistortedMetric, QuartetSplit};
use crate::par::{fold_range, map_slice, Execution};
use crate::rng::{derive_seed, stream_rng};
use crate::simulate::{Alignment, State};
use crate::tree::{path_length, Phylogeny, Topology};

/// Algorithm constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructParams {
    /// Dilution step for parent sequences.
    pub l: usize,
    /// Diameter bound `D`; quartets with an estimate above `D + ln(W/4)` are discarded.
    pub d: f64,
    /// Gate width `W` (> 5).
    pub w: f64,
    /// Known lower bound `f` on branch lengths; splits need `F > f/2`.
    pub f_min: f64,
    /// Added to `D` at each level (missing entries count as 0). Lets the
    /// gate follow the bias that reconstructed sequences add to distances.
    pub level_offsets: Vec<f64>,
}

impl ReconstructParams {
    pub fn new(l: usize, d: f64, w: f64, f_min: f64) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidParameter("l must be >= 1".into()));
        }
        if !(w > 5.0) {
            return Err(Error::InvalidParameter(format!("W must exceed 5, got {w}")));
        }
        if !(f_min > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need f > 0 and finite D, got f={f_min}, D={d}"
            )));
        }
        Ok(ReconstructParams {
            l,
            d,
            w,
            f_min,
            level_offsets: Vec::new(),
        })
    }

    pub fn with_level_offsets(mut self, offsets: Vec<f64>) -> Self {
        self.level_offsets = offsets;
        self
    }

    /// `D` in effect at `level`.
    pub fn d_at(&self, level: usize) -> f64 {
        self.d + self.level_offsets.get(level).copied().unwrap_or(0.0)
    }

    /// `D = 2 (g * lookahead + 2 b_bar)`, sized so cherry-scale quartets
    /// pass the gate when reconstructed vertices carry bias up to `b_bar`.
    pub fn default_d(g: f64, b_bar: f64, lookahead: usize) -> f64 {
        2.0 * (g * lookahead as f64 + 2.0 * b_bar)
    }
}

/// An active vertex: its node id in the output topology and its descendant
/// leaves (indices `label - 1`) in merge order, so every sub-clade is a
/// contiguous block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub node: usize,
    pub leaves: Vec<usize>,
}

/// State carried between levels.
#[derive(Clone, Debug)]
pub struct LevelState {
    pub level: usize,
    pub z: Vec<Vertex>,
    /// Number of accepted quartet splits at the previous level.
    pub accepted_splits: usize,
}

/// Never-separated pair table entry in a failure record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CandidatePair {
    /// Smallest leaf label below each vertex.
    pub u: usize,
    pub v: usize,
    pub cooccurrences: u32,
}

/// Why and where a level failed, with the candidate-pair table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    pub level: usize,
    pub reason: String,
    pub vertices: usize,
    pub accepted_splits: usize,
    pub candidates: Vec<CandidatePair>,
}

impl FailureRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// Pairwise counts over accepted splits: how often `u, v` fall on opposite
/// sides, and how often on the same side.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitRelations {
    pub m: usize,
    pub separated: Vec<u32>,
    pub cooccur: Vec<u32>,
    pub accepted: usize,
}

impl SplitRelations {
    fn empty(m: usize) -> Self {
        SplitRelations {
            m,
            separated: vec![0; m * m],
            cooccur: vec![0; m * m],
            accepted: 0,
        }
    }

    fn add(&mut self, side1: [usize; 2], side2: [usize; 2]) {
        let m = self.m;
        for x in side1 {
            for y in side2 {
                self.separated[x * m + y] += 1;
                self.separated[y * m + x] += 1;
            }
        }
        for [a, b] in [side1, side2] {
            self.cooccur[a * m + b] += 1;
            self.cooccur[b * m + a] += 1;
        }
        self.accepted += 1;
    }

    fn merge(mut self, o: SplitRelations) -> Self {
        for (a, b) in self.separated.iter_mut().zip(&o.separated) {
            *a += b;
        }
        for (a, b) in self.cooccur.iter_mut().zip(&o.cooccur) {
            *a += b;
        }
        self.accepted += o.accepted;
        self
    }

    pub fn from_splits(m: usize, splits: &[QuartetSplit]) -> Self {
        let mut r = SplitRelations::empty(m);
        for s in splits {
            if let Some((a, b)) = s.sides() {
                r.add(a, b);
            }
        }
        r
    }

    /// Accepted splits over every 4-subset of `metric` inside the gate.
    /// `F(xy|zw)` and `F(yx|zw)` differ (one crosses `x` with `z`, the other
    /// with `w`), and the split set ranges over all orderings of the four
    /// vertices, so `xy|zw` is kept when either ordering exceeds `f/2`.
    pub fn from_metric(metric: &DistortedMetric, f_min: f64, exec: Execution) -> Self {
        let m = metric.len();
        let gate = metric.gate();
        let words = m.div_ceil(64);
        let mut near = vec![0u64; m * words];
        for i in 0..m {
            for j in 0..m {
                if i != j && metric.get(i, j) <= gate {
                    near[i * words + j / 64] |= 1 << (j % 64);
                }
            }
        }
        let above = |row: usize, from: usize, mask: &[u64]| -> Vec<usize> {
            (from..m)
                .filter(|&j| {
                    mask[j / 64] >> (j % 64) & 1 == 1
                        && near[row * words + j / 64] >> (j % 64) & 1 == 1
                })
                .collect()
        };
        let t = f_min / 2.0;
        let tau = |i: usize, j: usize| metric.get(i, j);
        fold_range(
            exec,
            m,
            || SplitRelations::empty(m),
            |mut acc, a| {
                let row_a = &near[a * words..(a + 1) * words];
                for b in above(a, a + 1, row_a) {
                    let ab: Vec<u64> = (0..words).map(|x| row_a[x] & near[b * words + x]).collect();
                    for c in above(b, b + 1, &ab) {
                        let abc: Vec<u64> =
                            (0..words).map(|x| ab[x] & near[c * words + x]).collect();
                        for d in (c + 1..m).filter(|&d| abc[d / 64] >> (d % 64) & 1 == 1) {
                            let s_ab_cd = tau(a, b) + tau(c, d);
                            let s_ac_bd = tau(a, c) + tau(b, d);
                            let s_ad_bc = tau(a, d) + tau(b, c);
                            if 0.5 * (s_ac_bd.max(s_ad_bc) - s_ab_cd) > t {
                                acc.add([a, b], [c, d]);
                            }
                            if 0.5 * (s_ab_cd.max(s_ad_bc) - s_ac_bd) > t {
                                acc.add([a, c], [b, d]);
                            }
                            if 0.5 * (s_ab_cd.max(s_ac_bd) - s_ad_bc) > t {
                                acc.add([a, d], [b, c]);
                            }
                        }
                    }
                }
                acc
            },
            SplitRelations::merge,
        )
    }

    pub fn separated(&self, u: usize, v: usize) -> u32 {
        self.separated[u * self.m + v]
    }

    pub fn cooccur(&self, u: usize, v: usize) -> u32 {
        self.cooccur[u * self.m + v]
    }

    /// Never separated and on the same side at least once.
    pub fn is_candidate(&self, u: usize, v: usize) -> bool {
        u != v && self.separated(u, v) == 0 && self.cooccur(u, v) > 0
    }

    pub fn candidate_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.m {
            for v in u + 1..self.m {
                if self.is_candidate(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

/// Why cherry matching failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MatchFailure {
    /// A vertex has no candidate partner left.
    Unmatched(usize),
    /// Every remaining vertex has two or more candidates.
    Ambiguous(Vec<usize>),
    OddCount(usize),
}

impl std::fmt::Display for MatchFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatchFailure::Unmatched(v) => write!(f, "vertex {v} has no candidate cherry partner"),
            MatchFailure::Ambiguous(vs) => {
                write!(f, "ambiguous cherries among {} vertices", vs.len())
            }
            MatchFailure::OddCount(m) => write!(f, "odd number of vertices ({m})"),
        }
    }
}

/// Pairs vertices into cherries. A vertex whose only candidate partner is
/// `v` is matched to `v`; repeating this must consume every vertex. A vertex
/// with no candidate, or a state where every vertex has several, fails.
pub fn match_cherries(
    rel: &SplitRelations,
) -> std::result::Result<Vec<(usize, usize)>, MatchFailure> {
    let m = rel.m;
    if m % 2 == 1 {
        return Err(MatchFailure::OddCount(m));
    }
    let mut free = vec![true; m];
    let mut pairs = Vec::with_capacity(m / 2);
    let mut remaining = m;
    while remaining > 0 {
        let mut forced = None;
        let mut stuck = Vec::new();
        for u in (0..m).filter(|&u| free[u]) {
            let mut partners = (0..m).filter(|&v| free[v] && rel.is_candidate(u, v));
            match (partners.next(), partners.next()) {
                (None, _) => return Err(MatchFailure::Unmatched(u)),
                (Some(v), None) => {
                    forced = Some((u, v));
                    break;
                }
                _ => stuck.push(u),
            }
        }
        let Some((u, v)) = forced else {
            return Err(MatchFailure::Ambiguous(stuck));
        };
        free[u] = false;
        free[v] = false;
        remaining -= 2;
        pairs.push((u.min(v), u.max(v)));
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Cherries implied by a set of quartet splits over vertices `0..m`.
pub fn identify_cherries(
    splits: &[QuartetSplit],
    m: usize,
) -> std::result::Result<Vec<(usize, usize)>, MatchFailure> {
    match_cherries(&SplitRelations::from_splits(m, splits))
}

/// Supplies the distance matrix over the active vertices at each level.
pub trait DistanceSource {
    fn metric(
        &mut self,
        level: usize,
        z: &[Vertex],
        params: &ReconstructParams,
    ) -> Result<DistortedMetric>;
}

fn vertex_labels(z: &[Vertex]) -> Vec<String> {
    z.iter()
        .map(|v| format!("{}", v.leaves.iter().min().unwrap() + 1))
        .collect()
}

/// Estimated distances from leaf sequences and reconstructed parent
/// sequences.
pub struct SequenceDistances<'a> {
    q: usize,
    k: usize,
    /// Leaf index -> row of the alignment.
    rows: Vec<&'a [State]>,
    l: usize,
    seed: u64,
    exec: Execution,
    /// Sequences of the vertices at the current level.
    current: Vec<(usize, Vec<State>)>,
}

impl<'a> SequenceDistances<'a> {
    /// Alignment rows must be labeled `1..=n` (any order).
    pub fn new(align: &'a Alignment, l: usize, seed: u64, exec: Execution) -> Result<Self> {
        let n = align.n_rows();
        let mut rows: Vec<Option<&[State]>> = vec![None; n];
        for (r, label) in align.labels().iter().enumerate() {
            let idx = label
                .parse::<usize>()
                .ok()
                .filter(|&x| x >= 1 && x <= n)
                .ok_or(Error::LeafSetMismatch)?;
            if rows[idx - 1].replace(align.row(r)).is_some() {
                return Err(Error::LeafSetMismatch);
            }
        }
        Ok(SequenceDistances {
            q: align.q(),
            k: align.k(),
            rows: rows.into_iter().map(|r| r.unwrap()).collect(),
            l,
            seed,
            exec,
            current: Vec::new(),
        })
    }

    /// Diluted-estimator sequence of a vertex from its descendant leaves.
    fn reconstruct(&self, level: usize, v: &Vertex) -> Vec<State> {
        let h = v.leaves.len().trailing_zeros() as usize;
        let mut rng = stream_rng(derive_seed(self.seed, level as u64), v.node as u64);
        let mut column = vec![0; v.leaves.len()];
        (0..self.k)
            .map(|i| {
                for (c, &leaf) in column.iter_mut().zip(&v.leaves) {
                    *c = self.rows[leaf][i];
                }
                diluted_root_estimator(&column, h, self.q, self.l, &mut rng)
            })
            .collect()
    }

    /// Sequences of the current vertices, by topology node id.
    pub fn sequences(&self) -> &[(usize, Vec<State>)] {
        &self.current
    }
}

impl DistanceSource for SequenceDistances<'_> {
    fn metric(
        &mut self,
        level: usize,
        z: &[Vertex],
        params: &ReconstructParams,
    ) -> Result<DistortedMetric> {
        self.current = map_slice(self.exec, z, |v| {
            let seq = if v.leaves.len() == 1 {
                self.rows[v.leaves[0]].to_vec()
            } else {
                self.reconstruct(level, v)
            };
            (v.node, seq)
        });
        let seqs: Vec<&[State]> = self.current.iter().map(|(_, s)| s.as_slice()).collect();
        DistortedMetric::from_sequences(
            vertex_labels(z),
            &seqs,
            self.q,
            params.d_at(level),
            params.w,
            self.exec,
        )
    }
}

/// True tree distances between the nodes the vertices stand for (the common
/// ancestor of their leaves), plus an optional per-vertex bias `b(level)`
/// added once for each endpoint that is not a leaf.
pub struct ExactDistances<'a> {
    phy: &'a Phylogeny,
    by_label: Vec<usize>,
    bias: Box<dyn Fn(usize) -> f64 + 'a>,
}

impl<'a> ExactDistances<'a> {
    pub fn new(phy: &'a Phylogeny) -> Self {
        ExactDistances {
            phy,
            by_label: phy.nodes_by_label(),
            bias: Box::new(|_| 0.0),
        }
    }

    pub fn with_bias(mut self, bias: impl Fn(usize) -> f64 + 'a) -> Self {
        self.bias = Box::new(bias);
        self
    }

    fn node_of(&self, v: &Vertex) -> usize {
        v.leaves
            .iter()
            .map(|&l| self.by_label[l])
            .reduce(Phylogeny::lca)
            .unwrap()
    }
}

impl DistanceSource for ExactDistances<'_> {
    fn metric(
        &mut self,
        level: usize,
        z: &[Vertex],
        params: &ReconstructParams,
    ) -> Result<DistortedMetric> {
        let nodes: Vec<usize> = z.iter().map(|v| self.node_of(v)).collect();
        let b = if level == 0 { 0.0 } else { (self.bias)(level) };
        let m = z.len();
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    values[i * m + j] = path_length(self.phy, nodes[i], nodes[j]) + 2.0 * b;
                }
            }
        }
        DistortedMetric::new(vertex_labels(z), values, params.d_at(level), params.w)
    }
}

/// Per-level summary of a successful run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub vertices: usize,
    pub accepted_splits: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub topology: Topology,
    pub levels: Vec<LevelSummary>,
}

/// Runs the level loop on `n = 2^h` leaves with distances from `source`.
pub fn reconstruct_with<S: DistanceSource>(
    n: usize,
    params: &ReconstructParams,
    source: &mut S,
    exec: Execution,
) -> Result<Reconstruction> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::TreeShape(format!("need 2^h >= 2 leaves, got {n}")));
    }
    let mut state = LevelState {
        level: 0,
        z: (0..n)
            .map(|i| Vertex {
                node: i,
                leaves: vec![i],
            })
            .collect(),
        accepted_splits: 0,
    };
    let mut next_node = n;
    let mut edges = Vec::with_capacity(2 * n);
    let mut levels = Vec::new();
    while state.z.len() > 2 {
        let metric = source.metric(state.level, &state.z, params)?;
        let rel = SplitRelations::from_metric(&metric, params.f_min, exec);
        let pairs = match_cherries(&rel).map_err(|why| {
            let labels = vertex_labels(&state.z);
            let candidates = rel
                .candidate_pairs()
                .into_iter()
                .map(|(u, v)| CandidatePair {
                    u: labels[u].parse().unwrap(),
                    v: labels[v].parse().unwrap(),
                    cooccurrences: rel.cooccur(u, v),
                })
                .collect();
            Error::Reconstruction(Box::new(FailureRecord {
                level: state.level,
                reason: why.to_string(),
                vertices: state.z.len(),
                accepted_splits: rel.accepted,
                candidates,
            }))
        })?;
        levels.push(LevelSummary {
            level: state.level,
            vertices: state.z.len(),
            accepted_splits: rel.accepted,
        });
        let mut z = Vec::with_capacity(pairs.len());
        for (u, v) in pairs {
            let (a, b) = (&state.z[u], &state.z[v]);
            edges.push((next_node, a.node));
            edges.push((next_node, b.node));
            z.push(Vertex {
                node: next_node,
                leaves: [a.leaves.as_slice(), b.leaves.as_slice()].concat(),
            });
            next_node += 1;
        }
        state = LevelState {
            level: state.level + 1,
            z,
            accepted_splits: rel.accepted,
        };
    }
    edges.push((state.z[0].node, state.z[1].node));
    let topology = Topology::from_edges(n, next_node, &edges)?;
    Ok(Reconstruction { topology, levels })
}

/// Reconstructs the unrooted topology from a leaf alignment.
pub fn reconstruct_homogeneous(
    align: &Alignment,
    params: &ReconstructParams,
    seed: u64,
    exec: Execution,
) -> Result<Reconstruction> {
    let mut source = SequenceDistances::new(align, params.l, seed, exec)?;
    reconstruct_with(align.n_rows(), params, &mut source, exec)
}

/// Reconstructs from exact tree distances (the noiseless check).
pub fn reconstruct_exact(
    phy: &Phylogeny,
    params: &ReconstructParams,
    exec: Execution,
) -> Result<Reconstruction> {
    reconstruct_with(phy.n_leaves(), params, &mut ExactDistances::new(phy), exec)
}

/// Diluted-estimator sequences for a set of parents, each given by its
/// descendant leaves in merge order.
pub fn reconstruct_internal_sequences(
    parents: &[Vertex],
    align: &Alignment,
    l: usize,
    level: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<State>>> {
    let src = SequenceDistances::new(align, l, seed, exec)?;
    for p in parents {
        if !p.leaves.len().is_power_of_two() {
            return Err(Error::TreeShape(format!(
                "vertex {} has {} leaves",
                p.node,
                p.leaves.len()
            )));
        }
    }
    Ok(map_slice(exec, parents, |p| src.reconstruct(level, p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Pairing;
    use crate::model::potts_rate_matrix;
    use crate::rng::rng_from_seed;
    use crate::simulate::{sample_alignment, Sampler};
    use crate::tree::{random_homogeneous_phylogeny, tree_metric, unroot};

    fn params() -> ReconstructParams {
        ReconstructParams::new(2, 100.0, 20.0, 0.1).unwrap()
    }

    #[test]
    fn single_quartet_cherries() {
        let s = QuartetSplit {
            taxa: [0, 1, 2, 3],
            pairing: Pairing::AbCd,
        };
        assert_eq!(identify_cherries(&[s], 4).unwrap(), vec![(0, 1), (2, 3)]);
        assert!(matches!(
            identify_cherries(&[], 6),
            Err(MatchFailure::Unmatched(_))
        ));
    }

    #[test]
    fn three_cherries_from_exact_splits() {
        // six leaves of an h=3 tree (one cherry removed), all 15 quartets
        let mut rng = rng_from_seed(9);
        let phy = random_homogeneous_phylogeny(3, 0.1, 0.6, &mut rng).unwrap();
        let t = tree_metric(&phy);
        let nodes: Vec<usize> = phy.nodes_by_label().into_iter().take(8).collect();
        let keep: Vec<usize> = {
            // drop the cherry holding label 8
            let v8 = nodes[7];
            let sib = if v8 % 2 == 1 { v8 + 1 } else { v8 - 1 };
            nodes
                .iter()
                .copied()
                .filter(|&v| v != v8 && v != sib)
                .collect()
        };
        let m = keep.len();
        let values: Vec<f64> = (0..m * m)
            .map(|x| t.get(keep[x / m], keep[x % m]))
            .collect();
        let metric =
            DistortedMetric::new((0..m).map(|i| i.to_string()).collect(), values, 100.0, 20.0)
                .unwrap();
        // every ordered 4-tuple, each accepted split recorded once
        let mut splits = std::collections::BTreeSet::new();
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let t = [a, b, c, d];
                        if (0..4).any(|i| (i + 1..4).any(|j| t[i] == t[j])) {
                            continue;
                        }
                        if crate::metric::fp_indicator(&metric, t, 0.1)[0] {
                            let (mut x, mut y) = ([a.min(b), a.max(b)], [c.min(d), c.max(d)]);
                            if y < x {
                                std::mem::swap(&mut x, &mut y);
                            }
                            splits.insert((x, y));
                        }
                    }
                }
            }
        }
        let splits: Vec<QuartetSplit> = splits
            .into_iter()
            .map(|(x, y)| QuartetSplit {
                taxa: [x[0], x[1], y[0], y[1]],
                pairing: Pairing::AbCd,
            })
            .collect();
        let got = identify_cherries(&splits, m).unwrap();
        let want: Vec<(usize, usize)> = {
            let mut w = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    if (keep[i] - 1) / 2 == (keep[j] - 1) / 2 {
                        w.push((i, j));
                    }
                }
            }
            w
        };
        assert_eq!(got, want);
        // the fast path agrees with the explicit split list
        let rel = SplitRelations::from_metric(&metric, 0.1, Execution::default());
        assert_eq!(rel, SplitRelations::from_splits(m, &splits));
    }

    #[test]
    fn ambiguity_is_a_failure() {
        // 4 vertices, no splits but every pair co-occurs: all degrees 3
        let mut rel = SplitRelations::empty(4);
        for u in 0..4 {
            for v in 0..4 {
                if u != v {
                    rel.cooccur[u * 4 + v] = 1;
                }
            }
        }
        assert!(matches!(
            match_cherries(&rel),
            Err(MatchFailure::Ambiguous(_))
        ));
    }

    #[test]
    fn exact_metrics_recover_small_trees() {
        let mut rng = rng_from_seed(1);
        for h in 1..=4 {
            for _ in 0..10 {
                let phy = random_homogeneous_phylogeny(h, 0.1, 0.6, &mut rng).unwrap();
                let rec = reconstruct_exact(&phy, &params(), Execution::default()).unwrap();
                assert!(
                    crate::tree::topologies_equal(&rec.topology, &unroot(&phy))
                        .unwrap()
                        .equal
                );
            }
        }
    }

    #[test]
    fn per_vertex_bias_leaves_the_topology_unchanged() {
        let mut rng = rng_from_seed(2);
        let phy = random_homogeneous_phylogeny(4, 0.1, 0.6, &mut rng).unwrap();
        let want = unroot(&phy);
        for b in [0.3, 1.7] {
            let mut src = ExactDistances::new(&phy).with_bias(|_| b);
            let rec = reconstruct_with(16, &params(), &mut src, Execution::default()).unwrap();
            assert!(
                crate::tree::topologies_equal(&rec.topology, &want)
                    .unwrap()
                    .equal
            );
        }
    }

    #[test]
    fn relabeling_permutes_the_output() {
        let mut rng = rng_from_seed(3);
        let phy = random_homogeneous_phylogeny(3, 0.1, 0.6, &mut rng).unwrap();
        let perm = [3, 7, 1, 8, 2, 6, 4, 5];
        let moved = phy.relabeled(&perm).unwrap();
        let a = reconstruct_exact(&phy, &params(), Execution::default()).unwrap();
        let b = reconstruct_exact(&moved, &params(), Execution::default()).unwrap();
        assert!(
            crate::tree::topologies_equal(&a.topology, &unroot(&phy))
                .unwrap()
                .equal
        );
        assert!(
            crate::tree::topologies_equal(&b.topology, &unroot(&moved))
                .unwrap()
                .equal
        );
    }

    #[test]
    fn tight_gate_fails_with_a_record() {
        let phy = Phylogeny::uniform(3, 0.5).unwrap();
        let p = ReconstructParams::new(2, -1.5, 20.0, 0.1).unwrap();
        match reconstruct_exact(&phy, &p, Execution::default()) {
            Err(Error::Reconstruction(rec)) => {
                assert_eq!(rec.level, 0);
                assert_eq!(rec.vertices, 8);
                assert!(rec.to_json().contains("\"level\": 0"));
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn parent_sequences() {
        // two leaves agreeing everywhere: q = 2 forces that state
        let labels = vec!["1".to_string(), "2".to_string()];
        let align = Alignment::new(2, 5, labels, vec![0, 1, 1, 0, 1, 0, 1, 1, 0, 1]).unwrap();
        let parent = Vertex {
            node: 2,
            leaves: vec![0, 1],
        };
        let seqs = reconstruct_internal_sequences(
            std::slice::from_ref(&parent),
            &align,
            1,
            0,
            4,
            Execution::default(),
        )
        .unwrap();
        assert_eq!(seqs[0], vec![0, 1, 1, 0, 1]);
        let again =
            reconstruct_internal_sequences(&[parent], &align, 1, 0, 4, Execution::default())
                .unwrap();
        assert_eq!(seqs, again);
    }

    #[test]
    fn one_site_does_not_crash() {
        let mut rng = rng_from_seed(5);
        let phy = random_homogeneous_phylogeny(3, 0.1, 0.6, &mut rng).unwrap();
        let model = potts_rate_matrix(2).unwrap();
        let data = sample_alignment(&phy, &model, 1, &mut rng, Sampler::Broadcast, false).unwrap();
        let out = reconstruct_homogeneous(&data.leaves, &params(), 1, Execution::default());
        match out {
            Ok(r) => assert_eq!(r.topology.n_leaves(), 8),
            Err(Error::Reconstruction(_)) => {}
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = rng_from_seed(6);
        let phy = random_homogeneous_phylogeny(4, 0.1, 0.3, &mut rng).unwrap();
        let model = potts_rate_matrix(8).unwrap();
        let data =
            sample_alignment(&phy, &model, 300, &mut rng, Sampler::Broadcast, false).unwrap();
        let p = ReconstructParams::new(2, 1.0, 20.0, 0.1).unwrap();
        let a = reconstruct_homogeneous(&data.leaves, &p, 8, Execution::Sequential);
        let b = reconstruct_homogeneous(&data.leaves, &p, 8, Execution::default());
        assert_eq!(a, b);
    }
}

//! i.i.d. site samples of a Markov model on a phylogeny.
//!
//! Two independent samplers are provided: top-down broadcasting through the
//! transition matrices, and (symmetric model only) the random-cluster
//! representation, where each edge is open with probability `e^{-tau}` and
//! every open cluster receives a uniform state. Their laws coincide, which
//! the tests check against the exact leaf distribution.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::RateModel;
use crate::tree::Phylogeny;

/// Character states, 0-based internally; files use `1..=q`.
pub type State = u16;

/// Sequences over `[q]` for a set of named nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    q: usize,
    k: usize,
    labels: Vec<String>,
    /// Row-major: row `r`, site `i` at `r * k + i`.
    states: Vec<State>,
}

impl Alignment {
    pub fn new(q: usize, k: usize, labels: Vec<String>, states: Vec<State>) -> Result<Self> {
        if q < 2 || q > State::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "alphabet size {q} out of range"
            )));
        }
        if states.len() != labels.len() * k {
            return Err(Error::LengthMismatch(states.len(), labels.len() * k));
        }
        if let Some(s) = states.iter().find(|&&s| s as usize >= q) {
            return Err(Error::InvalidParameter(format!(
                "state {} exceeds q = {q}",
                s + 1
            )));
        }
        Ok(Alignment {
            q,
            k,
            labels,
            states,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, r: usize) -> &[State] {
        &self.states[r * self.k..(r + 1) * self.k]
    }

    pub fn row_by_label(&self, label: &str) -> Option<&[State]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|r| self.row(r))
    }

    /// Rows relabeled by `f`; row order and data unchanged.
    pub fn relabeled(&self, f: impl Fn(&str) -> String) -> Alignment {
        Alignment {
            labels: self.labels.iter().map(|l| f(l)).collect(),
            ..self.clone()
        }
    }

    /// `q=<q> k=<k>` header, then `<label>\t<s1> <s2> ...` with 1-based states.
    pub fn to_text(&self) -> String {
        let mut out = format!("q={} k={}\n", self.q, self.k);
        for r in 0..self.n_rows() {
            out.push_str(&self.labels[r]);
            out.push('\t');
            for (i, s) in self.row(r).iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", s + 1);
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Alignment::to_text`] output; `#` lines and blank lines are skipped
    /// and any run of whitespace separates fields.
    pub fn parse(text: &str) -> Result<Alignment> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let bad = |line: usize, message: String| Error::AlignmentFormat { line, message };
        let (hline, header) = lines
            .next()
            .ok_or_else(|| bad(0, "missing header".into()))?;
        let mut q = None;
        let mut k = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("q", v)) => q = v.parse::<usize>().ok(),
                Some(("k", v)) => k = v.parse::<usize>().ok(),
                _ => return Err(bad(hline, format!("unexpected header field {field:?}"))),
            }
        }
        let (q, k) = match (q, k) {
            (Some(q), Some(k)) => (q, k),
            _ => return Err(bad(hline, "header must be `q=<q> k=<k>`".into())),
        };
        let mut labels = Vec::new();
        let mut states = Vec::new();
        for (ln, line) in lines {
            let mut fields = line.split_whitespace();
            let label = fields.next().unwrap().to_string();
            let before = states.len();
            for f in fields {
                let s: usize = f.parse().map_err(|_| bad(ln, format!("bad state {f:?}")))?;
                if s == 0 || s > q {
                    return Err(bad(ln, format!("state {s} outside 1..={q}")));
                }
                states.push((s - 1) as State);
            }
            if states.len() - before != k {
                return Err(bad(
                    ln,
                    format!("expected {k} states, found {}", states.len() - before),
                ));
            }
            labels.push(label);
        }
        Alignment::new(q, k, labels, states)
    }
}

/// Which sampler generates the site patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Sampler {
    #[default]
    Broadcast,
    RandomCluster,
}

impl std::str::FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "broadcast" => Ok(Sampler::Broadcast),
            "random-cluster" | "cluster" => Ok(Sampler::RandomCluster),
            _ => Err(Error::InvalidParameter(format!("unknown sampler {s:?}"))),
        }
    }
}

/// States at every node for `k` sites, node-major like [`Alignment`].
#[derive(Clone, Debug)]
pub struct NodeStates {
    pub k: usize,
    pub states: Vec<State>,
}

impl NodeStates {
    pub fn node(&self, v: usize) -> &[State] {
        &self.states[v * self.k..(v + 1) * self.k]
    }

    /// Site `i` across leaf positions `0..n`.
    pub fn leaf_column(&self, phy: &Phylogeny, site: usize) -> Vec<State> {
        (0..phy.n_leaves())
            .map(|p| self.states[phy.leaf_node(p) * self.k + site])
            .collect()
    }
}

fn sample_categorical<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> State {
    let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1) as State
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    row.iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Top-down sampler with per-edge cumulative transition rows.
struct Broadcaster {
    q: usize,
    root: Vec<f64>,
    /// edge (node) -> q cumulative rows of length q
    rows: Vec<Vec<f64>>,
}

impl Broadcaster {
    fn new(phy: &Phylogeny, model: &RateModel) -> Result<Self> {
        let q = model.q();
        let mut rows = vec![Vec::new(); phy.n_nodes()];
        for (v, row) in rows.iter_mut().enumerate().skip(1) {
            let m = model.transition_matrix(phy.edge_tau(v))?;
            *row = (0..q).flat_map(|i| cumulative(m.row(i))).collect();
        }
        Ok(Broadcaster {
            q,
            root: cumulative(model.pi()),
            rows,
        })
    }

    fn site<R: Rng + ?Sized>(&self, out: &mut [State], rng: &mut R) {
        out[0] = sample_categorical(&self.root, rng);
        for v in 1..out.len() {
            let s = out[(v - 1) / 2] as usize;
            out[v] = sample_categorical(&self.rows[v][s * self.q..(s + 1) * self.q], rng);
        }
    }
}

/// Disjoint sets with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i;
        }
        self.size.fill(1);
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

struct ClusterSampler {
    q: usize,
    open_prob: Vec<f64>,
    uf: UnionFind,
    color: Vec<State>,
}

impl ClusterSampler {
    fn new(phy: &Phylogeny, q: usize) -> Self {
        let open_prob = (0..phy.n_nodes())
            .map(|v| (-phy.edge_tau(v)).exp())
            .collect();
        ClusterSampler {
            q,
            open_prob,
            uf: UnionFind::new(phy.n_nodes()),
            color: vec![0; phy.n_nodes()],
        }
    }

    fn site<R: Rng + ?Sized>(&mut self, out: &mut [State], rng: &mut R) {
        self.uf.reset();
        for v in 1..out.len() {
            if rng.random::<f64>() < self.open_prob[v] {
                self.uf.union(v, (v - 1) / 2);
            }
        }
        for v in 0..out.len() {
            if self.uf.find(v) == v {
                self.color[v] = rng.random_range(0..self.q) as State;
            }
        }
        for v in 0..out.len() {
            let r = self.uf.find(v);
            out[v] = self.color[r];
        }
    }
}

/// One site of the model at every node, by broadcasting from the root.
pub fn broadcast_sample<R: Rng + ?Sized>(
    phy: &Phylogeny,
    model: &RateModel,
    rng: &mut R,
) -> Result<Vec<State>> {
    let b = Broadcaster::new(phy, model)?;
    let mut out = vec![0; phy.n_nodes()];
    b.site(&mut out, rng);
    Ok(out)
}

/// One site of the `q`-state symmetric model at every node, via percolation
/// clusters.
pub fn random_cluster_sample<R: Rng + ?Sized>(
    phy: &Phylogeny,
    q: usize,
    rng: &mut R,
) -> Result<Vec<State>> {
    if q < 2 {
        return Err(Error::InvalidParameter(format!("q must be >= 2, got {q}")));
    }
    let mut s = ClusterSampler::new(phy, q);
    let mut out = vec![0; phy.n_nodes()];
    s.site(&mut out, rng);
    Ok(out)
}

/// `k` i.i.d. sites at every node.
pub fn sample_node_states<R: Rng + ?Sized>(
    phy: &Phylogeny,
    model: &RateModel,
    k: usize,
    sampler: Sampler,
    rng: &mut R,
) -> Result<NodeStates> {
    let nodes = phy.n_nodes();
    let mut site = vec![0; nodes];
    let mut states = vec![0; nodes * k];
    let mut scatter = |i: usize, site: &[State]| {
        for (v, &s) in site.iter().enumerate() {
            states[v * k + i] = s;
        }
    };
    match sampler {
        Sampler::Broadcast => {
            let b = Broadcaster::new(phy, model)?;
            for i in 0..k {
                b.site(&mut site, rng);
                scatter(i, &site);
            }
        }
        Sampler::RandomCluster => {
            if !model.is_potts() {
                return Err(Error::UnsupportedModel);
            }
            let mut c = ClusterSampler::new(phy, model.q());
            for i in 0..k {
                c.site(&mut site, rng);
                scatter(i, &site);
            }
        }
    }
    Ok(NodeStates { k, states })
}

/// Leaf alignment plus, on request, the hidden internal states.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    /// Rows labeled `1..=n`, in label order.
    pub leaves: Alignment,
    /// Rows labeled `v<index>` for every internal node, in level order.
    pub internal: Option<Alignment>,
}

pub fn sample_alignment<R: Rng + ?Sized>(
    phy: &Phylogeny,
    model: &RateModel,
    k: usize,
    rng: &mut R,
    sampler: Sampler,
    keep_internal: bool,
) -> Result<SimulatedData> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let all = sample_node_states(phy, model, k, sampler, rng)?;
    let by_label = phy.nodes_by_label();
    let mut leaf_states = Vec::with_capacity(by_label.len() * k);
    for &v in &by_label {
        leaf_states.extend_from_slice(all.node(v));
    }
    let labels = (1..=by_label.len()).map(|l| l.to_string()).collect();
    let leaves = Alignment::new(model.q(), k, labels, leaf_states)?;
    let internal = if keep_internal {
        let count = phy.n_leaves() - 1;
        let labels = (0..count).map(|v| format!("v{v}")).collect();
        Some(Alignment::new(
            model.q(),
            k,
            labels,
            all.states[..count * k].to_vec(),
        )?)
    } else {
        None
    };
    Ok(SimulatedData { leaves, internal })
}

/// Largest table `exact_leaf_distribution` will build.
pub const EXACT_TABLE_LIMIT: usize = 1_000_000;

/// Index of a leaf pattern: `sum_j s_{label j} q^{j-1}` (label 1 is the
/// least significant digit).
pub fn leaf_outcome_index(states_by_label: &[State], q: usize) -> usize {
    states_by_label
        .iter()
        .rev()
        .fold(0, |acc, &s| acc * q + s as usize)
}

/// Exact joint law of the leaf states, indexed by [`leaf_outcome_index`].
pub fn exact_leaf_distribution(phy: &Phylogeny, model: &RateModel) -> Result<Vec<f64>> {
    let q = model.q();
    let n = phy.n_leaves();
    let size = (q as u64)
        .checked_pow(n as u32)
        .filter(|&s| s <= EXACT_TABLE_LIMIT as u64)
        .ok_or_else(|| Error::TooLarge(format!("q^n = {q}^{n} exceeds {EXACT_TABLE_LIMIT}")))?
        as usize;

    // table[s * width + idx]: P(leaf pattern idx below v | state s at v),
    // leaves below v in position order, first position least significant.
    fn rec(phy: &Phylogeny, model: &RateModel, v: usize) -> Result<(usize, Vec<f64>)> {
        let q = model.q();
        match phy.children(v) {
            None => {
                let mut t = vec![0.0; q * q];
                for s in 0..q {
                    t[s * q + s] = 1.0;
                }
                Ok((q, t))
            }
            Some((a, b)) => {
                let lift = |c: usize| -> Result<(usize, Vec<f64>)> {
                    let (w, t) = rec(phy, model, c)?;
                    let m = model.transition_matrix(phy.edge_tau(c))?;
                    let mut u = vec![0.0; q * w];
                    for s in 0..q {
                        for x in 0..q {
                            let p = m.get(s, x);
                            if p == 0.0 {
                                continue;
                            }
                            for idx in 0..w {
                                u[s * w + idx] += p * t[x * w + idx];
                            }
                        }
                    }
                    Ok((w, u))
                };
                let (wa, ua) = lift(a)?;
                let (wb, ub) = lift(b)?;
                let w = wa * wb;
                let mut t = vec![0.0; q * w];
                for s in 0..q {
                    for ib in 0..wb {
                        let pb = ub[s * wb + ib];
                        for ia in 0..wa {
                            t[s * w + ib * wa + ia] = ua[s * wa + ia] * pb;
                        }
                    }
                }
                Ok((w, t))
            }
        }
    }

    let (w, table) = rec(phy, model, 0)?;
    debug_assert_eq!(w, size);
    let pi = model.pi();
    let labels = phy.leaf_labels();
    let mut out = vec![0.0; size];
    let mut digits = vec![0 as State; n];
    for pos_idx in 0..size {
        let p: f64 = (0..q).map(|s| pi[s] * table[s * w + pos_idx]).sum();
        let mut rem = pos_idx;
        for (pos, &label) in labels.iter().enumerate() {
            let _ = pos;
            digits[label - 1] = (rem % q) as State;
            rem /= q;
        }
        out[leaf_outcome_index(&digits, q)] = p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::potts_rate_matrix;
    use crate::rng::rng_from_seed;
    use crate::stats::chi_square_gof;
    use crate::tree::random_homogeneous_phylogeny;

    fn exact_agree_h1(tau: f64) -> f64 {
        // brute force over root and two leaf states, q = 2
        let m = potts_rate_matrix(2)
            .unwrap()
            .transition_matrix(tau)
            .unwrap();
        let mut p = 0.0;
        for r in 0..2 {
            for a in 0..2 {
                p += 0.5 * m.get(r, a) * m.get(r, a);
            }
        }
        p
    }

    #[test]
    fn zero_length_edges_copy_root() {
        let phy = Phylogeny::uniform(3, 0.0).unwrap();
        let model = potts_rate_matrix(4).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let s = broadcast_sample(&phy, &model, &mut rng).unwrap();
            assert!(s.iter().all(|&x| x == s[0]));
            let s = random_cluster_sample(&phy, 4, &mut rng).unwrap();
            assert!(s.iter().all(|&x| x == s[0]));
        }
    }

    #[test]
    fn cherry_agreement_matches_enumeration() {
        let want = exact_agree_h1(0.5);
        assert!((want - (1.0 + (-1.0f64).exp()) / 2.0).abs() < 1e-12);
        // open/closed case analysis for the random-cluster sampler
        let open = (-0.5f64).exp();
        let rc = open * open + (1.0 - open * open) / 2.0;
        assert!((rc - want).abs() < 1e-12);

        let phy = Phylogeny::uniform(1, 0.5).unwrap();
        let model = potts_rate_matrix(2).unwrap();
        let table = exact_leaf_distribution(&phy, &model).unwrap();
        assert!((table[0] + table[3] - want).abs() < 1e-12);
        assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let n = 200_000;
        let mut rng = rng_from_seed(2);
        for sampler in [Sampler::Broadcast, Sampler::RandomCluster] {
            let s = sample_node_states(&phy, &model, n, sampler, &mut rng).unwrap();
            let agree = (0..n).filter(|&i| s.node(1)[i] == s.node(2)[i]).count() as f64 / n as f64;
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!(
                (agree - want).abs() < 4.0 * se,
                "{sampler:?}: {agree} vs {want}"
            );
        }
    }

    #[test]
    fn single_node_marginal_is_stationary() {
        // 20 independent streams; the summed statistic is chi-square with 40 df
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let phy = Phylogeny::uniform(2, 0.3).unwrap();
        let model = potts_rate_matrix(3).unwrap();
        let mut total = 0.0;
        for seed in 0..20 {
            let s = sample_node_states(
                &phy,
                &model,
                20_000,
                Sampler::Broadcast,
                &mut rng_from_seed(seed),
            )
            .unwrap();
            let mut counts = vec![0u64; 3];
            for &x in s.node(5) {
                counts[x as usize] += 1;
            }
            total += chi_square_gof(&counts, &[1.0 / 3.0; 3]).statistic;
        }
        let p = ChiSquared::new(40.0).unwrap().sf(total);
        assert!(p > 1e-3, "pooled statistic {total}, p = {p}");
    }

    #[test]
    fn cluster_sampler_rejects_general_models() {
        let pi = [0.25, 0.25, 0.5];
        let rows = vec![
            vec![-0.75, 0.25, 0.5],
            vec![0.25, -0.75, 0.5],
            vec![0.25, 0.25, -0.5],
        ];
        let model = crate::model::validate_gtr(3, &rows, &pi).unwrap().model;
        let phy = Phylogeny::uniform(1, 0.1).unwrap();
        let r = sample_alignment(
            &phy,
            &model,
            5,
            &mut rng_from_seed(1),
            Sampler::RandomCluster,
            false,
        );
        assert_eq!(r.unwrap_err(), Error::UnsupportedModel);
    }

    #[test]
    fn per_edge_disagreement_rate() {
        let mut rng = rng_from_seed(8);
        let phy = random_homogeneous_phylogeny(3, 0.1, 0.8, &mut rng).unwrap();
        let q = 4;
        let model = potts_rate_matrix(q).unwrap();
        let k = 50_000;
        for sampler in [Sampler::Broadcast, Sampler::RandomCluster] {
            let s = sample_node_states(&phy, &model, k, sampler, &mut rng).unwrap();
            for v in 1..phy.n_nodes() {
                let p = (q as f64 - 1.0) * crate::model::delta_from_tau(q, phy.edge_tau(v));
                let dis = (0..k)
                    .filter(|&i| s.node(v)[i] != s.node((v - 1) / 2)[i])
                    .count() as f64
                    / k as f64;
                let se = (p * (1.0 - p) / k as f64).sqrt();
                assert!((dis - p).abs() < 3.5 * se, "edge {v}: {dis} vs {p}");
            }
        }
    }

    #[test]
    fn alignment_text_round_trip_and_determinism() {
        let mut rng = rng_from_seed(3);
        let phy = random_homogeneous_phylogeny(2, 0.1, 0.5, &mut rng).unwrap();
        let model = potts_rate_matrix(4).unwrap();
        let a = sample_alignment(
            &phy,
            &model,
            7,
            &mut rng_from_seed(9),
            Sampler::Broadcast,
            true,
        )
        .unwrap();
        let b = sample_alignment(
            &phy,
            &model,
            7,
            &mut rng_from_seed(9),
            Sampler::Broadcast,
            true,
        )
        .unwrap();
        assert_eq!(a.leaves, b.leaves);
        let text = a.leaves.to_text();
        assert!(text.starts_with("q=4 k=7\n1\t"));
        assert_eq!(
            Alignment::parse(&format!("# comment\n{text}")).unwrap(),
            a.leaves
        );
        assert_eq!(a.internal.as_ref().unwrap().n_rows(), 3);

        let single =
            sample_alignment(&phy, &model, 1, &mut rng, Sampler::Broadcast, false).unwrap();
        assert_eq!(single.leaves.k(), 1);
        assert!(single.internal.is_none());
        assert!(sample_alignment(&phy, &model, 0, &mut rng, Sampler::Broadcast, false).is_err());
    }

    #[test]
    fn alignment_parse_errors() {
        assert!(matches!(
            Alignment::parse("q=2 k=2\n1\t1 3\n"),
            Err(Error::AlignmentFormat { line: 2, .. })
        ));
        assert!(matches!(
            Alignment::parse("q=2 k=2\n1\t1\n"),
            Err(Error::AlignmentFormat { line: 2, .. })
        ));
        assert!(matches!(
            Alignment::parse("k=2\n"),
            Err(Error::AlignmentFormat { line: 1, .. })
        ));
    }

    #[test]
    fn exact_table_is_normalized_and_state_symmetric() {
        let mut rng = rng_from_seed(12);
        let phy = random_homogeneous_phylogeny(2, 0.1, 0.9, &mut rng).unwrap();
        let q = 3;
        let model = potts_rate_matrix(q).unwrap();
        let t = exact_leaf_distribution(&phy, &model).unwrap();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // cyclic relabeling of the alphabet leaves the law unchanged
        for idx in 0..t.len() {
            let mut digits: Vec<State> = Vec::new();
            let mut rem = idx;
            for _ in 0..4 {
                digits.push(((rem % q + 1) % q) as State);
                rem /= q;
            }
            assert!((t[idx] - t[leaf_outcome_index(&digits, q)]).abs() < 1e-14);
        }
        let big = Phylogeny::uniform(5, 0.1).unwrap();
        assert!(matches!(
            exact_leaf_distribution(&big, &potts_rate_matrix(4).unwrap()),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn exact_table_matches_brute_force() {
        // enumerate internal states explicitly on h = 2
        let mut rng = rng_from_seed(14);
        let phy = random_homogeneous_phylogeny(2, 0.1, 0.9, &mut rng).unwrap();
        let q = 2;
        let model = potts_rate_matrix(q).unwrap();
        let t = exact_leaf_distribution(&phy, &model).unwrap();
        let m: Vec<_> = (0..7)
            .map(|v| model.transition_matrix(phy.edge_tau(v)).unwrap())
            .collect();
        let mut brute = vec![0.0; t.len()];
        for r in 0..q {
            for a in 0..q {
                for b in 0..q {
                    for leaves in 0..16usize {
                        let s: Vec<usize> = (0..4).map(|p| (leaves >> p) & 1).collect();
                        let p = 0.5
                            * m[1].get(r, a)
                            * m[2].get(r, b)
                            * m[3].get(a, s[0])
                            * m[4].get(a, s[1])
                            * m[5].get(b, s[2])
                            * m[6].get(b, s[3]);
                        let mut by_label = vec![0; 4];
                        for pos in 0..4 {
                            by_label[phy.leaf_labels()[pos] - 1] = s[pos] as State;
                        }
                        brute[leaf_outcome_index(&by_label, q)] += p;
                    }
                }
            }
        }
        for (x, y) in t.iter().zip(&brute) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

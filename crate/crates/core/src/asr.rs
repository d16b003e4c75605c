//! Root state estimators on a known tree.
//!
//! The diluted-tree estimator looks for an `l`-diluted binary subtree whose
//! leaves all carry state `i`: every retained vertex at level `s l` keeps
//! exactly two descendants at level `(s + 1) l`. `B_l` is the set of states
//! for which such a subtree exists. The estimator draws `X` uniformly, keeps
//! it if `X` is in `B_l` and otherwise outputs a uniform state other than `X`.
//!
//! All functions here take leaf states in *position* order (left to right in
//! the complete tree), which is what [`crate::simulate::NodeStates::leaf_column`]
//! returns.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{delta_from_tau, RateModel};
use crate::par::{map_range, Execution};
use crate::rng::stream_rng;
use crate::simulate::{sample_node_states, Sampler, State};
use crate::tree::Phylogeny;

/// Sites simulated per random stream in Monte Carlo loops. Results depend
/// only on the seed, never on the thread count.
const BATCH: usize = 256;

/// A subset of `[q]` stored as 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSet {
    q: usize,
    words: Vec<u64>,
}

fn n_words(q: usize) -> usize {
    q.div_ceil(64)
}

impl StateSet {
    pub fn empty(q: usize) -> Self {
        StateSet {
            q,
            words: vec![0; n_words(q)],
        }
    }

    pub fn full(q: usize) -> Self {
        let mut s = StateSet::empty(q);
        for i in 0..q {
            s.insert(i);
        }
        s
    }

    pub fn from_states(q: usize, states: impl IntoIterator<Item = usize>) -> Self {
        let mut s = StateSet::empty(q);
        for i in states {
            s.insert(i);
        }
        s
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.q, "state {i} out of range");
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.q && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.q).filter(|&i| self.contains(i))
    }
}

/// Dilution step and the padding rule used when `h` is not a multiple of `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DilutionParams {
    pub l: usize,
    /// Pad with 0-length levels below the leaves (the only supported rule).
    pub pad_bottom: bool,
}

impl DilutionParams {
    pub fn new(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidParameter(
                "dilution step l must be >= 1".into(),
            ));
        }
        Ok(DilutionParams {
            l,
            pad_bottom: true,
        })
    }

    /// Padded height: the smallest multiple of `l` that is at least `h`.
    pub fn padded_height(&self, h: usize) -> usize {
        h.div_ceil(self.l) * self.l
    }
}

fn check_leaves(len: usize, h: usize, l: usize) {
    assert!(l >= 1, "dilution step l must be >= 1");
    assert_eq!(len, 1usize << h, "expected 2^h leaf states");
}

/// `B_l`: every state `i` with an `l`-diluted subtree monochromatic in `i`.
///
/// Padding is virtual. Below a vertex at the last diluted level each real
/// leaf stands for `2^pad` identical copies, so with `pad >= 1` a single
/// matching leaf already supplies two copies and the bottom step becomes an
/// OR over real leaves.
pub fn qualifying_states(leaf_states: &[State], h: usize, q: usize, l: usize) -> StateSet {
    check_leaves(leaf_states.len(), h, l);
    let w = n_words(q);
    if h == 0 {
        return StateSet::from_states(q, [leaf_states[0] as usize]);
    }
    let padded = h.div_ceil(l) * l;
    let pad = padded - h;
    let mut level = padded - l;
    let chunk = 1usize << (h - level);
    let mut cur = vec![0u64; (1 << level) * w];
    let mut ones = vec![0u64; w];
    for (v, leaves) in leaf_states.chunks(chunk).enumerate() {
        let out = &mut cur[v * w..(v + 1) * w];
        if pad > 0 {
            for &s in leaves {
                out[s as usize / 64] |= 1 << (s % 64);
            }
        } else {
            ones.fill(0);
            for &s in leaves {
                let (i, bit) = (s as usize / 64, 1u64 << (s % 64));
                out[i] |= ones[i] & bit;
                ones[i] |= bit;
            }
        }
    }
    let group = 1usize << l;
    let mut next = Vec::new();
    while level > 0 {
        level -= l;
        next.clear();
        next.resize((1 << level) * w, 0);
        for (v, kids) in cur.chunks(group * w).enumerate() {
            let out = &mut next[v * w..(v + 1) * w];
            ones.fill(0);
            for kid in kids.chunks(w) {
                for i in 0..w {
                    out[i] |= ones[i] & kid[i];
                    ones[i] |= kid[i];
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    StateSet { q, words: cur }
}

/// Whether `B_{i,l}` holds. Materializes the padded leaf levels and runs a
/// boolean "at least two qualifying descendants" recursion for one state;
/// deliberately independent of [`qualifying_states`].
pub fn diluted_tree_event(leaf_states: &[State], h: usize, i: State, l: usize) -> bool {
    check_leaves(leaf_states.len(), h, l);
    if h == 0 {
        return leaf_states[0] == i;
    }
    let padded = h.div_ceil(l) * l;
    let copies = 1usize << (padded - h);
    let mut cur: Vec<bool> = leaf_states
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s == i, copies))
        .collect();
    while cur.len() > 1 {
        cur = cur
            .chunks(1 << l)
            .map(|kids| kids.iter().filter(|&&b| b).count() >= 2)
            .collect();
    }
    cur[0]
}

/// Law of the diluted estimator's output given `B`:
/// `P(j) = (1/q) [1{j in B} + (|B^c| - 1{j not in B}) / (q - 1)]`.
pub fn estimator_output_law(b: &StateSet) -> Vec<f64> {
    let q = b.q();
    let outside = (q - b.len()) as f64;
    let qf = q as f64;
    (0..q)
        .map(|j| {
            let inside = b.contains(j);
            let rejected_to_j = outside - if inside { 0.0 } else { 1.0 };
            (if inside { 1.0 } else { 0.0 } + rejected_to_j / (qf - 1.0)) / qf
        })
        .collect()
}

/// Applies the randomized rule to a given `B`.
pub fn draw_from_qualifying<R: Rng + ?Sized>(b: &StateSet, rng: &mut R) -> State {
    let q = b.q();
    let x = rng.random_range(0..q);
    if b.contains(x) {
        return x as State;
    }
    let y = rng.random_range(0..q - 1);
    (if y >= x { y + 1 } else { y }) as State
}

pub fn diluted_root_estimator<R: Rng + ?Sized>(
    leaf_states: &[State],
    h: usize,
    q: usize,
    l: usize,
    rng: &mut R,
) -> State {
    draw_from_qualifying(&qualifying_states(leaf_states, h, q, l), rng)
}

/// States attaining the maximum leaf count.
pub fn plurality_states(leaf_states: &[State], q: usize) -> Vec<State> {
    let mut counts = vec![0usize; q];
    for &s in leaf_states {
        counts[s as usize] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    (0..q)
        .filter(|&i| counts[i] == best)
        .map(|i| i as State)
        .collect()
}

/// Plurality vote over the leaves, ties broken uniformly.
pub fn majority_root_estimator<R: Rng + ?Sized>(
    leaf_states: &[State],
    q: usize,
    rng: &mut R,
) -> State {
    let tied = plurality_states(leaf_states, q);
    tied[rng.random_range(0..tied.len())]
}

/// `P[s_root = i | leaves]` by the pruning recursion. Leaf states in position
/// order.
pub fn exact_root_posterior(phy: &Phylogeny, model: &RateModel, leaf_states: &[State]) -> Vec<f64> {
    let q = model.q();
    assert_eq!(leaf_states.len(), phy.n_leaves());
    let first_leaf = phy.n_nodes() - phy.n_leaves();
    let mut partial = vec![vec![0.0; q]; phy.n_nodes()];
    for v in (0..phy.n_nodes()).rev() {
        let mut lv = if v >= first_leaf {
            let mut e = vec![0.0; q];
            e[leaf_states[v - first_leaf] as usize] = 1.0;
            e
        } else {
            let (a, b) = phy.children(v).expect("internal node");
            let ma = model.propagate(phy.edge_tau(a), &partial[a]);
            let mb = model.propagate(phy.edge_tau(b), &partial[b]);
            ma.iter().zip(&mb).map(|(x, y)| x * y).collect()
        };
        // rescale to keep deep trees away from underflow
        let scale = lv.iter().copied().fold(0.0, f64::max);
        if scale > 0.0 {
            lv.iter_mut().for_each(|x| *x /= scale);
        }
        partial[v] = lv;
    }
    let mut post: Vec<f64> = partial[0]
        .iter()
        .zip(model.pi())
        .map(|(l, p)| l * p)
        .collect();
    let z: f64 = post.iter().sum();
    post.iter_mut().for_each(|x| *x /= z);
    post
}

/// Root estimators compared in experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootEstimator {
    Diluted { l: usize },
    Majority,
    Posterior,
}

impl RootEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            RootEstimator::Diluted { .. } => "diluted",
            RootEstimator::Majority => "majority",
            RootEstimator::Posterior => "posterior",
        }
    }

    /// Probability, over the estimator's internal randomness only, that it
    /// outputs `root` on these leaves. Averaging this instead of a 0/1 hit
    /// gives the same mean with lower variance.
    pub fn hit_probability(
        &self,
        phy: &Phylogeny,
        model: &RateModel,
        leaves: &[State],
        root: State,
    ) -> f64 {
        let q = model.q();
        match *self {
            RootEstimator::Diluted { l } => {
                estimator_output_law(&qualifying_states(leaves, phy.h(), q, l))[root as usize]
            }
            RootEstimator::Majority => tie_share(&plurality_states(leaves, q), root),
            RootEstimator::Posterior => {
                let post = exact_root_posterior(phy, model, leaves);
                let best = post.iter().copied().fold(0.0, f64::max);
                let tied: Vec<State> = (0..q)
                    .filter(|&i| post[i] >= best * (1.0 - 1e-12))
                    .map(|i| i as State)
                    .collect();
                tie_share(&tied, root)
            }
        }
    }
}

fn tie_share(tied: &[State], root: State) -> f64 {
    if tied.contains(&root) {
        1.0 / tied.len() as f64
    } else {
        0.0
    }
}

/// Runs `trials` independent broadcast sites in deterministic batches and
/// hands `(root state, leaf states in position order)` to `visit`.
fn simulate_batches<A, F>(
    phy: &Phylogeny,
    model: &RateModel,
    trials: usize,
    seed: u64,
    exec: Execution,
    init: impl Fn() -> A + Sync,
    visit: F,
) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(&mut A, State, &[State]) + Sync,
{
    let batches = trials.div_ceil(BATCH);
    let parts = map_range(exec, batches, |b| -> Result<A> {
        let mut rng = stream_rng(seed, b as u64);
        let k = BATCH.min(trials - b * BATCH);
        let states = sample_node_states(phy, model, k, Sampler::Broadcast, &mut rng)?;
        let mut acc = init();
        for site in 0..k {
            visit(
                &mut acc,
                states.node(0)[site],
                &states.leaf_column(phy, site),
            );
        }
        Ok(acc)
    });
    parts.into_iter().collect()
}

/// Per-trial hit probabilities of `estimator` at the root of `phy`.
pub fn root_hit_samples(
    phy: &Phylogeny,
    model: &RateModel,
    estimator: RootEstimator,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let parts = simulate_batches(
        phy,
        model,
        trials,
        seed,
        exec,
        Vec::new,
        |acc, root, leaves| acc.push(estimator.hit_probability(phy, model, leaves, root)),
    )?;
    Ok(parts.concat())
}

/// Monte Carlo estimate of the diluted estimator's error channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorChannelEstimate {
    pub q: usize,
    pub l: usize,
    /// Row `i`: estimated law of the output given root state `i`.
    pub matrix: Vec<Vec<f64>>,
    /// Standard error of each entry of `matrix`.
    pub stderr: Vec<Vec<f64>>,
    /// Root-state counts behind each row.
    pub row_counts: Vec<usize>,
    /// Mean of the diagonal entries, weighted by row counts.
    pub diag_mean: f64,
    pub diag_stderr: f64,
    /// Potts length fitted to `diag_mean`; `+inf` without signal.
    pub b_hat: f64,
    /// `-ln(eps / (2 (q - 1)))` from the measured `eps`.
    pub b_bar: f64,
    /// `P[root state in B_l]`.
    pub epsilon: f64,
    /// `P[j in B_l | root state != j]`.
    pub cross: f64,
    pub no_signal: bool,
    pub sample_count: usize,
}

/// Potts length whose channel has diagonal `diag`: inverts
/// `diag = 1 - (q - 1)(1 - e^{-b}) / q`. Infinite when `diag <= 1/q`.
pub fn potts_length_from_diagonal(q: usize, diag: f64) -> f64 {
    let qf = q as f64;
    let arg = 1.0 - qf * (1.0 - diag) / (qf - 1.0);
    if arg <= 0.0 {
        f64::INFINITY
    } else {
        (-arg.ln()).max(0.0)
    }
}

pub fn b_bar_from_epsilon(q: usize, epsilon: f64) -> f64 {
    if epsilon <= 0.0 {
        f64::INFINITY
    } else {
        -(epsilon / (2.0 * (q as f64 - 1.0))).ln()
    }
}

#[derive(Clone)]
struct ChannelAcc {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    counts: Vec<usize>,
    in_b: usize,
    cross: f64,
    diag: Vec<f64>,
}

impl ChannelAcc {
    fn new(q: usize) -> Self {
        ChannelAcc {
            sum: vec![0.0; q * q],
            sumsq: vec![0.0; q * q],
            counts: vec![0; q],
            in_b: 0,
            cross: 0.0,
            diag: Vec::new(),
        }
    }

    fn merge(mut self, o: ChannelAcc) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&o.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&o.sumsq) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
        self.in_b += o.in_b;
        self.cross += o.cross;
        self.diag.extend(o.diag);
        self
    }
}

/// Estimates `P[output = j | root = i]` for the `l`-diluted estimator on
/// `phy` under the symmetric model. Each sampled site contributes the exact
/// output law given its `B_l`, so no estimator randomness enters.
pub fn estimate_error_channel(
    phy: &Phylogeny,
    q: usize,
    l: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ErrorChannelEstimate> {
    DilutionParams::new(l)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let model = crate::model::potts_rate_matrix(q)?;
    let h = phy.h();
    let parts = simulate_batches(
        phy,
        &model,
        trials,
        seed,
        exec,
        || ChannelAcc::new(q),
        |acc, root, leaves| {
            let b = qualifying_states(leaves, h, q, l);
            let law = estimator_output_law(&b);
            let r = root as usize;
            for (j, p) in law.iter().enumerate() {
                acc.sum[r * q + j] += p;
                acc.sumsq[r * q + j] += p * p;
            }
            acc.counts[r] += 1;
            acc.diag.push(law[r]);
            let root_in = b.contains(r);
            acc.in_b += root_in as usize;
            acc.cross += (b.len() - root_in as usize) as f64 / (q - 1) as f64;
        },
    )?;
    let acc = parts
        .into_iter()
        .reduce(ChannelAcc::merge)
        .unwrap_or_else(|| ChannelAcc::new(q));
    let mut matrix = vec![vec![0.0; q]; q];
    let mut stderr = vec![vec![f64::NAN; q]; q];
    for i in 0..q {
        let n = acc.counts[i];
        for j in 0..q {
            if n == 0 {
                matrix[i][j] = f64::NAN;
                continue;
            }
            let m = acc.sum[i * q + j] / n as f64;
            matrix[i][j] = m;
            if n > 1 {
                let var = ((acc.sumsq[i * q + j] - n as f64 * m * m) / (n - 1) as f64).max(0.0);
                stderr[i][j] = (var / n as f64).sqrt();
            }
        }
    }
    let diag_mean = crate::stats::mean(&acc.diag);
    let diag_stderr = crate::stats::std_error(&acc.diag);
    let b_hat = potts_length_from_diagonal(q, diag_mean);
    let epsilon = acc.in_b as f64 / trials as f64;
    Ok(ErrorChannelEstimate {
        q,
        l,
        matrix,
        stderr,
        row_counts: acc.counts,
        diag_mean,
        diag_stderr,
        b_hat,
        b_bar: b_bar_from_epsilon(q, epsilon),
        epsilon,
        cross: acc.cross / trials as f64,
        no_signal: b_hat.is_infinite(),
        sample_count: trials,
    })
}

/// Statistical check that an estimated channel is of the symmetric form.
#[derive(Clone, Debug, PartialEq)]
pub struct PottsFormCheck {
    /// Mean off-diagonal entry.
    pub offdiag_mean: f64,
    /// RMS deviation of off-diagonal entries from their mean.
    pub offdiag_rms_dev: f64,
    /// RMS of the off-diagonal standard errors.
    pub offdiag_rms_se: f64,
    /// Largest `|entry - mean| / se` over off-diagonal entries.
    pub max_z: f64,
    /// `(diag_mean - 1/q) / diag_stderr`.
    pub diag_z: f64,
    pub equal_offdiagonals: bool,
    pub diag_above_uniform: bool,
}

impl PottsFormCheck {
    pub fn passed(&self) -> bool {
        self.equal_offdiagonals && self.diag_above_uniform
    }
}

/// Off-diagonals count as equal when their spread about the common mean is
/// within `z` standard errors in RMS; a per-entry test over `q (q - 1)`
/// entries would fail by multiplicity alone. The diagonal must exceed `1/q`
/// by `z` standard errors.
pub fn potts_form_check(est: &ErrorChannelEstimate, z: f64) -> PottsFormCheck {
    let q = est.q;
    let mut entries = Vec::new();
    for i in 0..q {
        for j in 0..q {
            if i != j && est.matrix[i][j].is_finite() && est.stderr[i][j].is_finite() {
                entries.push((est.matrix[i][j], est.stderr[i][j]));
            }
        }
    }
    let n = entries.len().max(1) as f64;
    let offdiag_mean = entries.iter().map(|e| e.0).sum::<f64>() / n;
    let offdiag_rms_dev = (entries
        .iter()
        .map(|e| (e.0 - offdiag_mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let offdiag_rms_se = (entries.iter().map(|e| e.1 * e.1).sum::<f64>() / n).sqrt();
    let max_z = entries
        .iter()
        .filter(|e| e.1 > 0.0)
        .map(|e| (e.0 - offdiag_mean).abs() / e.1)
        .fold(0.0, f64::max);
    let diag_z = (est.diag_mean - 1.0 / q as f64) / est.diag_stderr;
    PottsFormCheck {
        offdiag_mean,
        offdiag_rms_dev,
        offdiag_rms_se,
        max_z,
        diag_z,
        equal_offdiagonals: !entries.is_empty() && offdiag_rms_dev <= z * offdiag_rms_se,
        diag_above_uniform: diag_z > z,
    }
}

/// One candidate dilution step in a calibration run.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRow {
    pub l: usize,
    /// `P[B_{i,l} | root = i]`.
    pub epsilon: f64,
    /// `P[B_{i,l} | root != i]`.
    pub cross: f64,
    /// Fitted channel length at the calibration depth.
    pub b_hat: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub l: usize,
    pub epsilon: f64,
    pub table: Vec<CalibrationRow>,
}

/// Calibration settings beyond `(q, g, h_max)`.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationOptions {
    pub l_max: usize,
    pub trials: usize,
    /// `eps * trials` must reach this many events, so a lucky handful of
    /// hits cannot certify a step.
    pub min_events: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            l_max: 6,
            trials: 10_000,
            min_events: 10,
        }
    }
}

/// Smallest `l` whose measured `eps = P[B_{i,l} | root = i]` is positive and
/// at least twice `P[B_{i,l} | root != i]`, on a depth-`h_max` tree with every
/// branch of length `g`.
pub fn calibrate_dilution(
    q: usize,
    g: f64,
    h_max: usize,
    opts: CalibrationOptions,
    seed: u64,
    exec: Execution,
) -> Result<Calibration> {
    if !(g > 0.0 && g < std::f64::consts::LN_2) {
        return Err(Error::InvalidParameter(format!(
            "calibration needs 0 < g < ln 2, got {g}"
        )));
    }
    if opts.l_max == 0 || opts.trials == 0 {
        return Err(Error::InvalidParameter(
            "l_max and trials must be >= 1".into(),
        ));
    }
    let phy = Phylogeny::uniform(h_max, g)?;
    let mut table = Vec::new();
    for l in 1..=opts.l_max {
        let est = estimate_error_channel(
            &phy,
            q,
            l,
            opts.trials,
            crate::rng::derive_seed(seed, l as u64),
            exec,
        )?;
        let events = est.epsilon * opts.trials as f64;
        let passes = events >= opts.min_events as f64 && est.epsilon >= 2.0 * est.cross;
        table.push(CalibrationRow {
            l,
            epsilon: est.epsilon,
            cross: est.cross,
            b_hat: est.b_hat,
            passes,
        });
        if passes {
            return Ok(Calibration {
                l,
                epsilon: est.epsilon,
                table,
            });
        }
    }
    Err(Error::CalibrationFailed {
        l_max: opts.l_max,
        table,
    })
}

/// Expected disagreement probability on a symmetric channel of length `b`.
pub fn potts_error_rate(q: usize, b: f64) -> f64 {
    (q as f64 - 1.0) * delta_from_tau(q, b)
}

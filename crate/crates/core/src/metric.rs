//! Distances from sequences, the diameter-gated metric and quartet tests.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::RateModel;
use crate::par::{map_range, Execution};
use crate::rng::stream_rng;
use crate::simulate::{sample_node_states, Sampler, State};
use crate::tree::{tree_metric, Phylogeny};

/// `-ln(1 - q/(q-1) * mismatches/k)`, or `+inf` once the argument is `<= 0`.
pub fn distance_from_mismatches(mismatches: usize, k: usize, q: usize) -> f64 {
    let qf = q as f64;
    let arg = 1.0 - qf / (qf - 1.0) * mismatches as f64 / k as f64;
    if arg <= 0.0 {
        f64::INFINITY
    } else {
        // exact zero for identical sequences rather than -0.0
        (-arg.ln()).max(0.0)
    }
}

/// Estimated evolutionary distance between two aligned sequences.
pub fn estimate_distance(u: &[State], v: &[State], q: usize) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(Error::InvalidParameter(
            "sequences must have k >= 1 sites".into(),
        ));
    }
    let mismatches = u.iter().zip(v).filter(|(a, b)| a != b).count();
    Ok(distance_from_mismatches(mismatches, u.len(), q))
}

/// Pairwise distance estimates together with the gate constants `D` and `W`.
/// `+inf` marks saturated pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortedMetric {
    labels: Vec<String>,
    values: Vec<f64>,
    d: f64,
    w: f64,
}

impl DistortedMetric {
    pub fn new(labels: Vec<String>, values: Vec<f64>, d: f64, w: f64) -> Result<Self> {
        let m = labels.len();
        if values.len() != m * m {
            return Err(Error::LengthMismatch(values.len(), m * m));
        }
        for i in 0..m {
            if values[i * m + i] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "nonzero self-distance for {}",
                    labels[i]
                )));
            }
            for j in 0..i {
                let (a, b) = (values[i * m + j], values[j * m + i]);
                if a != b || a.is_nan() || a < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "bad distance between {} and {}",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        if !(w > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gate needs finite D and W > 0, got D={d}, W={w}"
            )));
        }
        Ok(DistortedMetric {
            labels,
            values,
            d,
            w,
        })
    }

    /// All pairwise estimates over `seqs`; pairs are evaluated in parallel.
    pub fn from_sequences(
        labels: Vec<String>,
        seqs: &[&[State]],
        q: usize,
        d: f64,
        w: f64,
        exec: Execution,
    ) -> Result<Self> {
        let m = seqs.len();
        if labels.len() != m {
            return Err(Error::LengthMismatch(labels.len(), m));
        }
        let rows = map_range(exec, m, |i| -> Result<Vec<f64>> {
            (0..m)
                .map(|j| {
                    if i == j {
                        Ok(0.0)
                    } else {
                        estimate_distance(seqs[i], seqs[j], q)
                    }
                })
                .collect()
        });
        let mut values = Vec::with_capacity(m * m);
        for r in rows {
            values.extend(r?);
        }
        DistortedMetric::new(labels, values, d, w)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// Quartets with any estimate above `D + ln(W/4)` are not trusted.
    pub fn gate(&self) -> f64 {
        self.d + (self.w / 4.0).ln()
    }

    /// Header row of labels, then one row per label; `+inf` prints as `inf`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&self.labels[i]);
            for j in 0..self.len() {
                let v = self.get(i, j);
                if v.is_infinite() {
                    out.push_str("\tinf");
                } else {
                    let _ = write!(out, "\t{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Which pairing of `[a, b, c, d]` a quartet test chose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pairing {
    AbCd,
    AcBd,
    AdBc,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuartetSplit {
    pub taxa: [usize; 4],
    pub pairing: Pairing,
}

impl QuartetSplit {
    /// The two sides, if determined.
    pub fn sides(&self) -> Option<([usize; 2], [usize; 2])> {
        let [a, b, c, d] = self.taxa;
        match self.pairing {
            Pairing::AbCd => Some(([a, b], [c, d])),
            Pairing::AcBd => Some(([a, c], [b, d])),
            Pairing::AdBc => Some(([a, d], [b, c])),
            Pairing::Undetermined => None,
        }
    }
}

/// Ungated `F(xy|zw) = (t(x,z) + t(y,w) - t(x,y) - t(z,w)) / 2`.
pub fn four_point_raw(m: &DistortedMetric, x: usize, y: usize, z: usize, w: usize) -> f64 {
    0.5 * (m.get(x, z) + m.get(y, w) - m.get(x, y) - m.get(z, w))
}

fn max_pairwise(m: &DistortedMetric, t: [usize; 4]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            best = best.max(m.get(t[i], t[j]));
        }
    }
    best
}

/// Whether every pairwise estimate in the quartet is within the gate.
pub fn passes_gate(m: &DistortedMetric, taxa: [usize; 4]) -> bool {
    max_pairwise(m, taxa) <= m.gate()
}

/// Gated four-point value of the split `xy|zw`: `+inf` when the quartet
/// fails the diameter test.
pub fn four_point_value(m: &DistortedMetric, x: usize, y: usize, z: usize, w: usize) -> f64 {
    if !passes_gate(m, [x, y, z, w]) {
        return f64::INFINITY;
    }
    four_point_raw(m, x, y, z, w)
}

/// Sign rule on `F(ab|cd)`: positive gives `ab|cd`, negative `ac|bd`, zero
/// `ad|bc`. Gated or saturated quartets are undetermined.
///
/// "Zero" allows rounding noise of the size of the distances involved, so
/// exact tree metrics built from floating-point path sums land on `ad|bc`.
pub fn four_point_split(m: &DistortedMetric, taxa: [usize; 4]) -> QuartetSplit {
    let [a, b, c, d] = taxa;
    let f = four_point_value(m, a, b, c, d);
    let zero = 16.0 * f64::EPSILON * max_pairwise(m, taxa);
    let pairing = if !f.is_finite() {
        Pairing::Undetermined
    } else if f > zero {
        Pairing::AbCd
    } else if f < -zero {
        Pairing::AcBd
    } else {
        Pairing::AdBc
    };
    QuartetSplit { taxa, pairing }
}

/// `1{F(s) > f/2}` for the splits `ab|cd`, `ac|bd`, `ad|bc`, in that order.
/// A gated quartet is discarded: all three indicators are 0.
pub fn fp_indicator(m: &DistortedMetric, taxa: [usize; 4], f_min: f64) -> [bool; 3] {
    if !passes_gate(m, taxa) {
        return [false; 3];
    }
    let [a, b, c, d] = taxa;
    let t = f_min / 2.0;
    [
        four_point_raw(m, a, b, c, d) > t,
        four_point_raw(m, a, c, b, d) > t,
        four_point_raw(m, a, d, b, c) > t,
    ]
}

/// Outcome of [`distance_concentration_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub k: usize,
    pub trials: usize,
    /// Leaf pairs with true distance below `D`, counted once per trial.
    pub short_pairs: usize,
    /// Fraction of short-pair estimates within `delta` of the truth.
    pub short_within_delta: f64,
    /// Fraction of trials in which every short pair was within `delta`.
    pub short_all_within_delta: f64,
    pub far_pairs: usize,
    /// Far pairs (true distance `> D + ln W`) rejected by the gate `D + ln(W/4)`.
    pub far_gated: f64,
    /// Far pairs estimated above `D + ln(W/2)`.
    pub far_above_half_w: f64,
    pub near_pairs: usize,
    /// Pairs with true distance `< D + ln(W/5)` admitted by the gate.
    pub near_admitted: f64,
    /// `k / ln n`.
    pub c_prime: f64,
}

impl ConcentrationReport {
    /// Short-distance and gate rates all at least `1 - 1/n`.
    pub fn passes(&self, n: usize) -> bool {
        let bar = 1.0 - 1.0 / n as f64;
        let ok = |count: usize, rate: f64| count == 0 || rate >= bar;
        ok(self.short_pairs, self.short_within_delta)
            && ok(self.far_pairs, self.far_gated)
            && ok(self.near_pairs, self.near_admitted)
    }
}

#[derive(Default)]
struct ConcAcc {
    short: (usize, usize, usize),
    far: (usize, usize, usize),
    near: (usize, usize),
}

/// Simulates `trials` alignments of `k` sites and checks, over leaf pairs,
/// that short distances concentrate and that the diameter gate separates far
/// pairs from near ones.
pub fn distance_concentration_check(
    phy: &Phylogeny,
    model: &RateModel,
    k: usize,
    d: f64,
    w: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ConcentrationReport> {
    if k == 0 || trials == 0 {
        return Err(Error::InvalidParameter("k and trials must be >= 1".into()));
    }
    let q = model.q();
    let truth = tree_metric(phy);
    let leaves = phy.nodes_by_label();
    let n = leaves.len();
    let gate = d + (w / 4.0).ln();
    let far_line = d + w.ln();
    let near_line = d + (w / 5.0).ln();
    let half_w = d + (w / 2.0).ln();
    let parts = map_range(exec, trials, |t| -> Result<ConcAcc> {
        let mut rng = stream_rng(seed, t as u64);
        let states = sample_node_states(phy, model, k, Sampler::Broadcast, &mut rng)?;
        let mut acc = ConcAcc::default();
        let mut all_short = true;
        for i in 0..n {
            for j in i + 1..n {
                let tau = truth.get(leaves[i], leaves[j]);
                let est = estimate_distance(states.node(leaves[i]), states.node(leaves[j]), q)?;
                if tau < d {
                    acc.short.0 += 1;
                    if (est - tau).abs() < delta {
                        acc.short.1 += 1;
                    } else {
                        all_short = false;
                    }
                }
                if tau > far_line {
                    acc.far.0 += 1;
                    acc.far.1 += (est > gate) as usize;
                    acc.far.2 += (est > half_w) as usize;
                }
                if tau < near_line {
                    acc.near.0 += 1;
                    acc.near.1 += (est <= gate) as usize;
                }
            }
        }
        acc.short.2 = all_short as usize;
        Ok(acc)
    });
    let mut tot = ConcAcc::default();
    for p in parts {
        let p = p?;
        tot.short = (
            tot.short.0 + p.short.0,
            tot.short.1 + p.short.1,
            tot.short.2 + p.short.2,
        );
        tot.far = (
            tot.far.0 + p.far.0,
            tot.far.1 + p.far.1,
            tot.far.2 + p.far.2,
        );
        tot.near = (tot.near.0 + p.near.0, tot.near.1 + p.near.1);
    }
    let rate = |hit: usize, all: usize| {
        if all == 0 {
            f64::NAN
        } else {
            hit as f64 / all as f64
        }
    };
    Ok(ConcentrationReport {
        k,
        trials,
        short_pairs: tot.short.0,
        short_within_delta: rate(tot.short.1, tot.short.0),
        short_all_within_delta: rate(tot.short.2, trials),
        far_pairs: tot.far.0,
        far_gated: rate(tot.far.1, tot.far.0),
        far_above_half_w: rate(tot.far.2, tot.far.0),
        near_pairs: tot.near.0,
        near_admitted: rate(tot.near.1, tot.near.0),
        c_prime: k as f64 / (n.max(2) as f64).ln(),
    })
}

/// Smallest `k` on `k_grid` (ascending) whose report passes at the `1 - 1/n`
/// level, returned with its report.
pub fn smallest_passing_k(
    phy: &Phylogeny,
    model: &RateModel,
    k_grid: &[usize],
    d: f64,
    w: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Option<ConcentrationReport>> {
    for &k in k_grid {
        let r = distance_concentration_check(phy, model, k, d, w, delta, trials, seed, exec)?;
        if r.passes(phy.n_leaves()) {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

//! Sweep harness: reconstruction success and root-estimation accuracy over
//! parameter grids, the two-topology distinguishability probe, and the
//! minimal sequence length search.
//!
//! Every cell gets its own seed, `derive_seed(master, cell_index)`, and runs
//! sequentially inside its own job, so output is identical for any `--jobs`.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asr::{estimate_error_channel, RootEstimator};
use crate::error::{Error, Result};
use crate::model::potts_rate_matrix;
use crate::par::{map_range, map_slice, Execution};
use crate::reconstruct::{reconstruct_homogeneous, ReconstructParams};
use crate::rng::{derive_seed, stream_rng};
use crate::simulate::{exact_leaf_distribution, sample_alignment, Sampler};
use crate::stats::{mean, quantile, resample, std_error};
use crate::tree::{random_homogeneous_phylogeny, topologies_equal, unroot, Phylogeny};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Ptr,
    Asr,
}

/// Parameter grids for a sweep. Cells are the cartesian product of the
/// grids, in the order q, tau, h, k (reconstruction) or estimator, q, tau,
/// h, l (root estimation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub q: Vec<usize>,
    pub tau: Vec<f64>,
    pub h: Vec<usize>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default = "default_l")]
    pub l: Vec<usize>,
    #[serde(default = "default_estimators")]
    pub estimator: Vec<String>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_w")]
    pub w: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_l() -> Vec<usize> {
    vec![2]
}

fn default_estimators() -> Vec<String> {
    vec!["diluted".into(), "majority".into()]
}

fn default_w() -> f64 {
    20.0
}

const LIST_KEYS: [&str; 6] = ["q", "tau", "h", "k", "l", "estimator"];

impl SweepConfig {
    /// Reads JSON (first non-blank character `{`) or `key = value` lines,
    /// where grid values are comma separated and `#` starts a comment.
    pub fn parse(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            let mut map = serde_json::Map::new();
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("line {}: expected key = value", i + 1))
                })?;
                let key = key.trim().replace('-', "_");
                let items: Vec<serde_json::Value> =
                    value.split(',').map(|s| scalar(s.trim())).collect();
                let v = if LIST_KEYS.contains(&key.as_str()) {
                    serde_json::Value::Array(items)
                } else if items.len() == 1 {
                    items.into_iter().next().unwrap()
                } else {
                    return Err(Error::Config(format!(
                        "line {}: {key} takes a single value",
                        i + 1
                    )));
                };
                map.insert(key, v);
            }
            serde_json::from_value(serde_json::Value::Object(map))
                .map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.q.is_empty() || self.q.iter().any(|&q| q < 2) {
            return bad("q grid must be non-empty with every q >= 2".into());
        }
        if self.tau.is_empty() || self.tau.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("tau grid must be non-empty and positive".into());
        }
        if self.h.is_empty() || self.h.contains(&0) {
            return bad("h grid must be non-empty and positive".into());
        }
        if self.l.is_empty() || self.l.contains(&0) {
            return bad("l grid must be non-empty and positive".into());
        }
        if !(self.w > 5.0) {
            return bad(format!("w must exceed 5, got {}", self.w));
        }
        match self.experiment {
            Experiment::Ptr => {
                if self.k.is_empty() || self.k.contains(&0) {
                    return bad("k grid must be non-empty and positive".into());
                }
                if self.h.iter().any(|&h| h < 2) {
                    return bad("reconstruction needs h >= 2".into());
                }
                if self.l.len() != 1 {
                    return bad("reconstruction sweeps take a single l".into());
                }
            }
            Experiment::Asr => {
                if self.estimator.is_empty() {
                    return bad("estimator list is empty".into());
                }
                for e in &self.estimator {
                    if e != "uniform" {
                        parse_estimator(e, 1)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of rows a complete run writes.
    pub fn n_cells(&self) -> usize {
        match self.experiment {
            Experiment::Ptr => self.ptr_cells().len(),
            Experiment::Asr => self.asr_cells().len(),
        }
    }

    fn ptr_cells(&self) -> Vec<PtrCell> {
        let mut out = Vec::new();
        for &q in &self.q {
            for &tau in &self.tau {
                for &h in &self.h {
                    for &k in &self.k {
                        out.push(PtrCell { q, tau, h, k });
                    }
                }
            }
        }
        out
    }

    fn asr_cells(&self) -> Vec<AsrCell> {
        let mut out = Vec::new();
        for name in &self.estimator {
            // the dilution step only matters for the diluted estimator
            let ls: &[usize] = if name == "diluted" { &self.l } else { &[0] };
            for &q in &self.q {
                for &tau in &self.tau {
                    for &h in &self.h {
                        for &l in ls {
                            out.push(AsrCell {
                                estimator: name.clone(),
                                q,
                                tau,
                                h,
                                l,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

fn scalar(s: &str) -> serde_json::Value {
    if let Ok(i) = s.parse::<u64>() {
        return i.into();
    }
    if let Ok(x) = s.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(x) {
            return serde_json::Value::Number(n);
        }
    }
    serde_json::Value::String(s.trim_matches('"').to_string())
}

/// Maps an estimator name to a [`RootEstimator`]; `diluted` uses step `l`.
pub fn parse_estimator(name: &str, l: usize) -> Result<RootEstimator> {
    match name {
        "diluted" => Ok(RootEstimator::Diluted { l }),
        "majority" => Ok(RootEstimator::Majority),
        "posterior" => Ok(RootEstimator::Posterior),
        other => Err(Error::Config(format!("unknown estimator {other:?}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
struct PtrCell {
    q: usize,
    tau: f64,
    h: usize,
    k: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct AsrCell {
    estimator: String,
    q: usize,
    tau: f64,
    h: usize,
    l: usize,
}

pub const PTR_HEADER: &str = "q,tau,h,n,k,trials,successes,rate,stderr,runtime";
pub const ASR_HEADER: &str = "estimator,q,tau,h,l,trials,accuracy,stderr";
/// Leading CSV columns that identify a cell, for [`CsvAppender::open`].
pub const PTR_KEY_COLUMNS: usize = 5;
pub const ASR_KEY_COLUMNS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PtrRow {
    pub q: usize,
    pub tau: f64,
    pub h: usize,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub stderr: f64,
    /// Wall-clock seconds.
    pub runtime: f64,
}

impl PtrRow {
    fn key(&self) -> String {
        format!("{},{},{},{},{}", self.q, self.tau, self.h, self.n, self.k)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3}",
            self.q,
            self.tau,
            self.h,
            self.n,
            self.k,
            self.trials,
            self.successes,
            self.rate,
            self.stderr,
            self.runtime
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsrRow {
    pub estimator: String,
    pub q: usize,
    pub tau: f64,
    pub h: usize,
    pub l: usize,
    pub trials: usize,
    pub accuracy: f64,
    pub stderr: f64,
}

impl AsrRow {
    fn key(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.estimator, self.q, self.tau, self.h, self.l
        )
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.estimator,
            self.q,
            self.tau,
            self.h,
            self.l,
            self.trials,
            self.accuracy,
            self.stderr
        )
    }
}

/// Serializes rows into a CSV file. Opening an existing file collects the
/// keys of rows already present so a rerun skips finished cells.
pub struct CsvAppender {
    file: Mutex<File>,
    done: HashSet<String>,
}

impl CsvAppender {
    /// `preamble` lines are written (as `#` comments) only when the file is new.
    pub fn open(
        path: &Path,
        preamble: &str,
        header: &str,
        key_columns: usize,
    ) -> Result<CsvAppender> {
        let mut done = HashSet::new();
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        if !fresh {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.starts_with('#') || line == header || line.trim().is_empty() {
                    continue;
                }
                let key: Vec<&str> = line.split(',').take(key_columns).collect();
                done.insert(key.join(","));
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            for l in preamble.lines() {
                writeln!(file, "# {l}")?;
            }
            writeln!(file, "{header}")?;
        }
        Ok(CsvAppender {
            file: Mutex::new(file),
            done,
        })
    }

    pub fn is_done(&self, key: &str) -> bool {
        self.done.contains(key)
    }

    pub fn append(&self, line: &str) -> Result<()> {
        let mut f = self.file.lock().expect("appender poisoned");
        writeln!(f, "{line}")?;
        f.flush()?;
        Ok(())
    }
}

/// Channel length that a sequence reconstructed by the `l`-diluted
/// estimator from `level` generations of leaves carries, for each level
/// `0..h`. Level 0 (leaves) is exact. Levels without signal are capped at
/// `cap`.
pub fn level_bias_schedule(
    q: usize,
    tau: f64,
    h: usize,
    l: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    const CAP: f64 = 5.0;
    let mut out = vec![0.0];
    for level in 1..h {
        let phy = Phylogeny::uniform(level, tau)?;
        let est =
            estimate_error_channel(&phy, q, l, trials, derive_seed(seed, level as u64), exec)?;
        out.push(est.b_hat.min(CAP));
    }
    Ok(out)
}

/// Gate radius used for branch length `g`: the cousin distance `4g` plus
/// `1.5g`, still short of the second-cousin distance `6g`.
pub fn gate_radius(g: f64) -> f64 {
    5.5 * g
}

/// Parameters for reconstructing a depth-`h` tree with branch lengths in
/// `[f, g]`: the leaf-level gate `D + ln(W/4)` equals [`gate_radius`], and at
/// each level the gate grows by twice the estimated reconstruction bias.
pub fn ptr_params(
    q: usize,
    f: f64,
    g: f64,
    h: usize,
    l: usize,
    w: f64,
    seed: u64,
    exec: Execution,
) -> Result<ReconstructParams> {
    let bias = level_bias_schedule(q, g, h, l, 4000, seed, exec)?;
    let d = gate_radius(g) - (w / 4.0).ln();
    Ok(ReconstructParams::new(l, d, w, f)?
        .with_level_offsets(bias.iter().map(|b| 2.0 * b).collect()))
}

/// Outcome of one batch of reconstruction trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PtrOutcome {
    pub trials: usize,
    pub successes: usize,
    /// Trials ending in a reconstruction failure (as opposed to a wrong tree).
    pub failures: usize,
}

impl PtrOutcome {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Success count for `trials` independent runs: each draws a random
/// labeled tree with all branch lengths `tau`, simulates `k` sites, and
/// reconstructs. Trial `t` uses stream `t` under `seed`.
pub fn ptr_success(
    q: usize,
    tau: f64,
    h: usize,
    k: usize,
    l: usize,
    w: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<PtrOutcome> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let model = potts_rate_matrix(q)?;
    let params = ptr_params(q, tau, tau, h, l, w, derive_seed(seed, u64::MAX), exec)?;
    let results = map_range(exec, trials, |t| -> Result<(bool, bool)> {
        let mut rng = stream_rng(seed, t as u64);
        let phy = random_homogeneous_phylogeny(h, tau, tau, &mut rng)?;
        let data = sample_alignment(&phy, &model, k, &mut rng, Sampler::Broadcast, false)?;
        match reconstruct_homogeneous(&data.leaves, &params, rng.random(), Execution::Sequential) {
            Ok(r) => Ok((topologies_equal(&r.topology, &unroot(&phy))?.equal, false)),
            Err(Error::Reconstruction(_)) => Ok((false, true)),
            Err(e) => Err(e),
        }
    });
    let mut out = PtrOutcome {
        trials,
        successes: 0,
        failures: 0,
    };
    for r in results {
        let (ok, failed) = r?;
        out.successes += ok as usize;
        out.failures += failed as usize;
    }
    Ok(out)
}

fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Runs every reconstruction cell of `cfg`, skipping cells already in
/// `appender`. Returns the rows computed in this call, in cell order.
pub fn ptr_success_sweep(
    cfg: &SweepConfig,
    appender: Option<&CsvAppender>,
    exec: Execution,
) -> Result<Vec<PtrRow>> {
    cfg.validate()?;
    if cfg.experiment != Experiment::Ptr {
        return Err(Error::Config("not a reconstruction sweep".into()));
    }
    let l = cfg.l[0];
    let cells = cfg.ptr_cells();
    let indexed: Vec<(usize, PtrCell)> = cells.into_iter().enumerate().collect();
    let rows = map_slice(exec, &indexed, |(i, c)| -> Result<Option<PtrRow>> {
        let key = format!("{},{},{},{},{}", c.q, c.tau, c.h, 1usize << c.h, c.k);
        if appender.is_some_and(|a| a.is_done(&key)) {
            return Ok(None);
        }
        let start = Instant::now();
        let o = ptr_success(
            c.q,
            c.tau,
            c.h,
            c.k,
            l,
            cfg.w,
            cfg.trials,
            derive_seed(cfg.seed, *i as u64),
            Execution::Sequential,
        )?;
        let rate = o.rate();
        let row = PtrRow {
            q: c.q,
            tau: c.tau,
            h: c.h,
            n: 1 << c.h,
            k: c.k,
            trials: cfg.trials,
            successes: o.successes,
            rate,
            stderr: binomial_stderr(rate, cfg.trials),
            runtime: start.elapsed().as_secs_f64(),
        };
        debug_assert_eq!(row.key(), key);
        if let Some(a) = appender {
            a.append(&row.to_csv())?;
        }
        Ok(Some(row))
    });
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs every root-estimation cell of `cfg`. The `uniform` estimator is the
/// guessing baseline and reports exactly `1/q`.
pub fn asr_accuracy_sweep(
    cfg: &SweepConfig,
    appender: Option<&CsvAppender>,
    exec: Execution,
) -> Result<Vec<AsrRow>> {
    cfg.validate()?;
    if cfg.experiment != Experiment::Asr {
        return Err(Error::Config("not a root-estimation sweep".into()));
    }
    let cells: Vec<(usize, AsrCell)> = cfg.asr_cells().into_iter().enumerate().collect();
    let rows = map_slice(exec, &cells, |(i, c)| -> Result<Option<AsrRow>> {
        let mut row = AsrRow {
            estimator: c.estimator.clone(),
            q: c.q,
            tau: c.tau,
            h: c.h,
            l: c.l,
            trials: cfg.trials,
            accuracy: 1.0 / c.q as f64,
            stderr: 0.0,
        };
        if appender.is_some_and(|a| a.is_done(&row.key())) {
            return Ok(None);
        }
        if c.estimator != "uniform" {
            let est = parse_estimator(&c.estimator, c.l)?;
            let phy = Phylogeny::uniform(c.h, c.tau)?;
            let model = potts_rate_matrix(c.q)?;
            let hits = crate::asr::root_hit_samples(
                &phy,
                &model,
                est,
                cfg.trials,
                derive_seed(cfg.seed, *i as u64),
                Execution::Sequential,
            )?;
            row.accuracy = mean(&hits);
            row.stderr = if hits.len() > 1 {
                std_error(&hits)
            } else {
                0.0
            };
        }
        if let Some(a) = appender {
            a.append(&row.to_csv())?;
        }
        Ok(Some(row))
    });
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Bootstrap comparison of per-trial accuracies across increasing depths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrendReport {
    pub means: Vec<f64>,
    /// Fraction of replicates whose means strictly decrease with depth.
    pub decreasing_fraction: f64,
    /// Decay is declared when `decreasing_fraction >= confidence`.
    pub decaying: bool,
    /// Percentile interval for the last mean minus `baseline`.
    pub last_excess_interval: (f64, f64),
}

/// Trend test over `samples[d]` (per-trial values at the `d`-th depth).
pub fn bootstrap_trend(
    samples: &[Vec<f64>],
    baseline: f64,
    replicates: usize,
    confidence: f64,
    seed: u64,
) -> TrendReport {
    assert!(samples.len() >= 2 && samples.iter().all(|s| !s.is_empty()));
    let means: Vec<f64> = samples.iter().map(|s| mean(s)).collect();
    let mut decreasing = 0usize;
    let mut last = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let mut rng = stream_rng(seed, r as u64);
        let m: Vec<f64> = samples
            .iter()
            .map(|s| mean(&resample(s, &mut rng)))
            .collect();
        decreasing += m.windows(2).all(|w| w[1] < w[0]) as usize;
        last.push(m[m.len() - 1] - baseline);
    }
    let frac = decreasing as f64 / replicates.max(1) as f64;
    let alpha = 1.0 - confidence;
    TrendReport {
        means,
        decreasing_fraction: frac,
        decaying: frac >= confidence,
        last_excess_interval: (
            quantile(&last, alpha / 2.0),
            quantile(&last, 1.0 - alpha / 2.0),
        ),
    }
}

/// Two depth-`depth` trees with every branch `tau` that differ by swapping
/// the second and third quarter of the leaves: the top quartet of subtrees
/// is `(A,B),(C,D)` in one and `(A,C),(B,D)` in the other.
pub fn quartet_swap_pair(depth: usize, tau: f64) -> Result<(Phylogeny, Phylogeny)> {
    if depth < 2 {
        return Err(Error::InvalidParameter(
            "quartet swap needs depth >= 2".into(),
        ));
    }
    let a = Phylogeny::uniform(depth, tau)?;
    let n = a.n_leaves();
    let quarter = n / 4;
    let relabel: Vec<usize> = (0..n)
        .map(|i| match i / quarter {
            1 => i + quarter + 1,
            2 => i - quarter + 1,
            _ => i + 1,
        })
        .collect();
    let b = a.relabeled(&relabel)?;
    Ok((a, b))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    pub depth: usize,
    pub k: usize,
    /// Total variation between the single-site leaf laws.
    pub tv: f64,
    /// Bhattacharyya coefficient between the single-site leaf laws.
    pub bhattacharyya: f64,
    /// Bounds on the optimal success probability with `k` sites, equal prior.
    /// Exact when `k = 1`.
    pub success_lower: f64,
    pub success_upper: f64,
}

/// Exact single-site comparison of two phylogenies on the same labels,
/// lifted to `k` sites through Bhattacharyya bounds on the Bayes error.
pub fn exact_distinguishability(
    a: &Phylogeny,
    b: &Phylogeny,
    q: usize,
    k: usize,
) -> Result<ProbeResult> {
    if a.n_leaves() != b.n_leaves() {
        return Err(Error::LeafSetMismatch);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let model = potts_rate_matrix(q)?;
    let pa = exact_leaf_distribution(a, &model)?;
    let pb = exact_leaf_distribution(b, &model)?;
    let tv = 0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let bc = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x * y).sqrt())
        .sum::<f64>()
        .min(1.0);
    let (lo, hi) = if k == 1 {
        (0.5 * (1.0 + tv), 0.5 * (1.0 + tv))
    } else {
        let bk = bc.powi(k as i32);
        let hi = 0.5 * (1.0 + (1.0 - bk * bk).max(0.0).sqrt());
        (
            1.0 - 0.5 * bk,
            hi.min(0.5 * (1.0 + (k as f64 * tv).min(1.0))),
        )
    };
    Ok(ProbeResult {
        depth: a.h(),
        k,
        tv,
        bhattacharyya: bc,
        success_lower: lo,
        success_upper: hi,
    })
}

/// Exact probe on the quartet-swap pair of depth `depth`.
pub fn distinguishability_probe(q: usize, tau: f64, depth: usize, k: usize) -> Result<ProbeResult> {
    let (a, b) = quartet_swap_pair(depth, tau)?;
    exact_distinguishability(&a, &b, q, k)
}

/// Monte Carlo version for trees too large to enumerate: each trial picks
/// one of the pair at random, simulates `k` sites and reconstructs; the
/// guess is whichever tree the result matches, or a coin flip otherwise.
pub fn sampled_distinguishability(
    q: usize,
    tau: f64,
    depth: usize,
    k: usize,
    l: usize,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let (a, b) = quartet_swap_pair(depth, tau)?;
    let (ta, tb) = (unroot(&a), unroot(&b));
    let model = potts_rate_matrix(q)?;
    let params = ptr_params(
        q,
        tau,
        tau,
        depth,
        l,
        20.0,
        derive_seed(seed, u64::MAX),
        exec,
    )?;
    let hits = map_range(exec, trials, |t| -> Result<f64> {
        let mut rng = stream_rng(seed, t as u64);
        let first = rng.random_bool(0.5);
        let phy = if first { &a } else { &b };
        let data = sample_alignment(phy, &model, k, &mut rng, Sampler::Broadcast, false)?;
        let guess = match reconstruct_homogeneous(
            &data.leaves,
            &params,
            rng.random(),
            Execution::Sequential,
        ) {
            Ok(r) if topologies_equal(&r.topology, &ta)?.equal => Some(true),
            Ok(r) if topologies_equal(&r.topology, &tb)?.equal => Some(false),
            Ok(_) | Err(Error::Reconstruction(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(match guess {
            Some(g) => (g == first) as u8 as f64,
            None => 0.5,
        })
    });
    let hits: Result<Vec<f64>> = hits.into_iter().collect();
    Ok(mean(&hits?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinKResult {
    /// Smallest tested `k` reaching the target, `None` if censored.
    pub k_star: Option<usize>,
    pub censored: bool,
    /// Every `(k, success rate)` evaluated, in evaluation order.
    pub curve: Vec<(usize, f64)>,
}

/// Doubles `k` from 1 until the success rate reaches `target`, then bisects
/// between the last failing and first passing `k` down to a 5% gap.
/// Stops with a censored result once `k` would exceed `cap`.
#[allow(clippy::too_many_arguments)]
pub fn find_min_k(
    q: usize,
    tau: f64,
    h: usize,
    l: usize,
    target: f64,
    trials: usize,
    cap: usize,
    seed: u64,
    exec: Execution,
) -> Result<MinKResult> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target rate must lie in (0, 1), got {target}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "branch length must be positive, got {tau}"
        )));
    }
    let mut curve = Vec::new();
    let mut rate_at = |k: usize| -> Result<f64> {
        let r = ptr_success(
            q,
            tau,
            h,
            k,
            l,
            20.0,
            trials,
            derive_seed(seed, k as u64),
            exec,
        )?
        .rate();
        curve.push((k, r));
        Ok(r)
    };
    let mut lo = 0usize;
    let mut hi = 1usize;
    loop {
        if hi > cap {
            return Ok(MinKResult {
                k_star: None,
                censored: true,
                curve,
            });
        }
        if rate_at(hi)? >= target {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 && (hi - lo) as f64 > 0.05 * hi as f64 {
        let mid = lo + (hi - lo) / 2;
        if rate_at(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(MinKResult {
        k_star: Some(hi),
        censored: false,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asr_cfg() -> SweepConfig {
        SweepConfig::parse("experiment = asr\nq = 2, 3\ntau = 0.1\nh = 2\nestimator = diluted, uniform\ntrials = 50\nseed = 9").unwrap()
    }

    #[test]
    fn config_formats_agree() {
        let kv = SweepConfig::parse(
            "experiment=ptr\nq=2\ntau=0.2,0.9 # two regimes\nh=3\nk=100\ntrials=4\nseed=5",
        )
        .unwrap();
        let js = SweepConfig::parse(
            r#"{"experiment":"ptr","q":[2],"tau":[0.2,0.9],"h":[3],"k":[100],"trials":4,"seed":5}"#,
        )
        .unwrap();
        assert_eq!(kv, js);
        assert_eq!(kv.n_cells(), 2);
    }

    #[test]
    fn config_rejections() {
        assert!(SweepConfig::parse("experiment=ptr\nq=2\ntau=0.2\nh=3\nk=100\ntrials=0").is_err());
        assert!(SweepConfig::parse("experiment=ptr\nq=2\ntau=-1\nh=3\nk=100\ntrials=1").is_err());
        assert!(SweepConfig::parse(
            "experiment=asr\nq=2\ntau=0.2\nh=3\nestimator=oracle\ntrials=1"
        )
        .is_err());
        assert!(
            SweepConfig::parse("experiment=asr\nq=2\ntau=0.2\nh=3\ntrials=1\ncolour=blue").is_err()
        );
    }

    #[test]
    fn asr_sweep_is_reproducible_and_resumable() {
        let cfg = asr_cfg();
        let a = asr_accuracy_sweep(&cfg, None, Execution::Parallel).unwrap();
        let b = asr_accuracy_sweep(&cfg, None, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.n_cells());
        assert!(a
            .iter()
            .filter(|r| r.estimator == "uniform")
            .all(|r| r.accuracy == 1.0 / r.q as f64));

        let dir = tempdir();
        let path = dir.join("asr.csv");
        let app = CsvAppender::open(&path, "test", ASR_HEADER, ASR_KEY_COLUMNS).unwrap();
        let first = asr_accuracy_sweep(&cfg, Some(&app), Execution::Parallel).unwrap();
        drop(app);
        let app = CsvAppender::open(&path, "test", ASR_HEADER, ASR_KEY_COLUMNS).unwrap();
        let second = asr_accuracy_sweep(&cfg, Some(&app), Execution::Parallel).unwrap();
        assert_eq!(first.len(), cfg.n_cells());
        assert!(second.is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        let data_rows = text
            .lines()
            .filter(|l| !l.starts_with('#') && *l != ASR_HEADER)
            .count();
        assert_eq!(data_rows, cfg.n_cells());
        std::fs::remove_dir_all(dir).ok();
    }

    fn tempdir() -> PathBuf {
        let d = std::env::temp_dir().join(format!(
            "pottstree-exp-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn small_taus_give_near_perfect_accuracy() {
        let cfg = SweepConfig::parse("experiment=asr\nq=2,4\ntau=0.001\nh=3\nestimator=diluted,majority,posterior\nl=1\ntrials=200").unwrap();
        for r in asr_accuracy_sweep(&cfg, None, Execution::Parallel).unwrap() {
            // the diluted estimator keeps a rejected guess only half the time
            // even when every leaf agrees: its accuracy tends to 2/q
            let limit = if r.estimator == "diluted" && r.q > 2 {
                2.0 / r.q as f64
            } else {
                1.0
            };
            assert!((r.accuracy - limit).abs() < 0.02, "{r:?}");
        }
    }

    #[test]
    fn swap_pair_is_a_quartet_change() {
        let (a, b) = quartet_swap_pair(3, 0.3).unwrap();
        let rf = crate::tree::robinson_foulds(&unroot(&a), &unroot(&b)).unwrap();
        assert_eq!(rf, 2);
    }

    #[test]
    fn probe_identical_trees() {
        let a = Phylogeny::uniform(2, 0.4).unwrap();
        for k in [1, 10] {
            let p = exact_distinguishability(&a, &a, 2, k).unwrap();
            assert!(p.tv.abs() < 1e-12);
            assert!((p.success_lower - 0.5).abs() < 1e-9 && (p.success_upper - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn probe_is_symmetric_and_ordered() {
        let (a, b) = quartet_swap_pair(3, 0.5).unwrap();
        let ab = exact_distinguishability(&a, &b, 2, 20).unwrap();
        let ba = exact_distinguishability(&b, &a, 2, 20).unwrap();
        assert!((ab.tv - ba.tv).abs() < 1e-14);
        assert!(ab.tv > 0.0);
        assert!(ab.success_lower <= ab.success_upper + 1e-12);
    }

    #[test]
    fn trend_test_detects_synthetic_decay() {
        let decaying: Vec<Vec<f64>> = (0..4)
            .map(|d| {
                vec![0.9 - 0.1 * d as f64; 100]
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + 0.01 * (i % 3) as f64)
                    .collect()
            })
            .collect();
        assert!(bootstrap_trend(&decaying, 0.5, 200, 0.95, 1).decaying);
        let flat: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..100).map(|i| 0.7 + 0.01 * (i % 5) as f64).collect())
            .collect();
        let r = bootstrap_trend(&flat, 0.5, 200, 0.95, 1);
        assert!(!r.decaying);
        assert!(r.last_excess_interval.0 > 0.0);
    }

    #[test]
    fn min_k_rejects_bad_input_and_censors() {
        assert!(find_min_k(2, 0.0, 3, 2, 0.9, 5, 64, 1, Execution::Parallel).is_err());
        assert!(find_min_k(2, 0.2, 3, 2, 1.0, 5, 64, 1, Execution::Parallel).is_err());
        let r = find_min_k(2, 0.2, 3, 2, 0.9, 5, 2, 1, Execution::Parallel).unwrap();
        assert!(r.censored && r.k_star.is_none());
    }

    #[test]
    fn bias_schedule_shape() {
        let b = level_bias_schedule(2, 0.2, 4, 2, 2000, 3, Execution::Parallel).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b[0], 0.0);
        assert!(b[1..].iter().all(|x| *x > 0.0));
    }
}

//! Quick oracle and invariant checks, run by the `verify` subcommand.
//! Each check is small enough that the whole table finishes in seconds.

use rand::Rng;
use serde::Serialize;

use crate::asr::{exact_root_posterior, root_hit_samples, RootEstimator};
use crate::error::Result;
use crate::model::{expm_series, potts_rate_matrix, potts_transition, Matrix, RateModel};
use crate::par::Execution;
use crate::reconstruct::{reconstruct_exact, ReconstructParams};
use crate::rng::stream_rng;
use crate::simulate::{
    exact_leaf_distribution, leaf_outcome_index, sample_alignment, Sampler, State,
};
use crate::stats::chi_square_gof;
use crate::tree::{
    parse_phylogeny, random_homogeneous_phylogeny, topologies_equal, unroot, Phylogeny,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every check with generators derived from `seed`.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        check("potts-closed-form", potts_closed_form),
        check("channel-composition", || channel_composition(seed)),
        check("posterior-enumeration", || posterior_enumeration(seed)),
        check("sampler-goodness-of-fit", || sampler_fit(seed)),
        check("noiseless-reconstruction", || {
            noiseless_reconstruction(seed)
        }),
        check("newick-roundtrip", || newick_roundtrip(seed)),
        check("parallel-determinism", || parallel_determinism(seed)),
    ]
}

/// Renders checks as an aligned text table.
pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{:width$}  {status}  {}\n", c.name, c.detail));
    }
    out
}

fn potts_closed_form() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for q in [2, 4, 16, 64] {
        let model = potts_rate_matrix(q)?;
        for tau in [
            0.05,
            std::f64::consts::LN_2 / 2.0,
            0.5,
            std::f64::consts::LN_2,
            2.0,
        ] {
            let series = expm_series(&model.rate().scaled(tau));
            worst = worst.max(potts_transition(q, tau).max_abs_diff(&series));
        }
    }
    Ok((
        worst <= 1e-10,
        format!("max |closed form - series| = {worst:.2e}"),
    ))
}

fn channel_composition(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream_rng(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let q = rng.random_range(2..=8);
        let (b1, b2) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let m = potts_rate_matrix(q)?;
        let lhs = m.transition_matrix(b1)?.mul(&m.transition_matrix(b2)?);
        worst = worst.max(lhs.max_abs_diff(&m.transition_matrix(b1 + b2)?));
    }
    Ok((
        worst <= 1e-10,
        format!("max deviation {worst:.2e} over 100 triples"),
    ))
}

/// Root posterior by summing the joint law over every internal assignment.
pub fn enumerated_posterior(
    phy: &Phylogeny,
    model: &RateModel,
    leaves: &[State],
) -> Result<Vec<f64>> {
    let q = model.q();
    let internal = phy.n_nodes() - phy.n_leaves();
    let mats: Vec<Matrix> = (0..phy.n_nodes())
        .map(|v| model.transition_matrix(phy.edge_tau(v)))
        .collect::<Result<_>>()?;
    let mut post = vec![0.0; q];
    let mut states = vec![0usize; phy.n_nodes()];
    for (p, &s) in leaves.iter().enumerate() {
        states[internal + p] = s as usize;
    }
    for code in 0..q.pow(internal as u32) {
        let mut c = code;
        for s in states.iter_mut().take(internal) {
            *s = c % q;
            c /= q;
        }
        let mut w = model.pi()[states[0]];
        for v in 1..phy.n_nodes() {
            w *= mats[v].get(states[phy.parent(v).unwrap()], states[v]);
        }
        post[states[0]] += w;
    }
    let z: f64 = post.iter().sum();
    Ok(post.into_iter().map(|x| x / z).collect())
}

fn posterior_enumeration(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream_rng(seed, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let h = rng.random_range(1..=3);
        let q = rng.random_range(2..=3);
        let phy = random_homogeneous_phylogeny(h, 0.05, 1.5, &mut rng)?;
        let model = potts_rate_matrix(q)?;
        let leaves: Vec<State> = (0..phy.n_leaves())
            .map(|_| rng.random_range(0..q as State))
            .collect();
        let a = exact_root_posterior(&phy, &model, &leaves);
        let b = enumerated_posterior(&phy, &model, &leaves)?;
        worst = a
            .iter()
            .zip(&b)
            .fold(worst, |m, (x, y)| m.max((x - y).abs()));
    }
    Ok((
        worst <= 1e-12,
        format!("max deviation {worst:.2e} over 30 instances"),
    ))
}

fn sampler_fit(seed: u64) -> Result<(bool, String)> {
    let phy = Phylogeny::uniform(2, 0.4)?;
    let model = potts_rate_matrix(3)?;
    let exact = exact_leaf_distribution(&phy, &model)?;
    let labels = phy.nodes_by_label();
    let mut details = Vec::new();
    let mut ok = true;
    for (i, sampler) in [Sampler::Broadcast, Sampler::RandomCluster]
        .into_iter()
        .enumerate()
    {
        let mut rng = stream_rng(seed, 10 + i as u64);
        let k = 20_000;
        let data = sample_alignment(&phy, &model, k, &mut rng, sampler, false)?;
        let mut counts = vec![0u64; exact.len()];
        let mut column = vec![0 as State; labels.len()];
        for site in 0..k {
            for (j, c) in column.iter_mut().enumerate() {
                *c = data.leaves.row(j)[site];
            }
            counts[leaf_outcome_index(&column, 3)] += 1;
        }
        let g = chi_square_gof(&counts, &exact);
        ok &= g.p_value > 1e-3;
        details.push(format!("{sampler:?} p={:.3}", g.p_value));
    }
    Ok((ok, details.join(", ")))
}

fn noiseless_reconstruction(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream_rng(seed, 3);
    let (f, g) = (0.1, 0.6);
    let params =
        ReconstructParams::new(2, crate::experiments::gate_radius(g) - 5f64.ln(), 20.0, f)?;
    let mut ok = 0;
    let total = 30;
    for t in 0..total {
        let phy = random_homogeneous_phylogeny(2 + t % 3, f, g, &mut rng)?;
        if let Ok(r) = reconstruct_exact(&phy, &params, Execution::Sequential) {
            ok += topologies_equal(&r.topology, &unroot(&phy))?.equal as usize;
        }
    }
    Ok((
        ok == total,
        format!("{ok}/{total} trees recovered from exact distances"),
    ))
}

fn newick_roundtrip(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream_rng(seed, 4);
    let mut ok = true;
    for h in 1..=5 {
        let phy = random_homogeneous_phylogeny(h, 0.1, 0.9, &mut rng)?;
        let back = parse_phylogeny(&phy.to_newick())?;
        ok &= back
            .canonicalize()
            .max_length_diff(&phy.canonicalize())
            .is_some_and(|d| d < 1e-9);
    }
    Ok((ok, "h = 1..5".into()))
}

fn parallel_determinism(seed: u64) -> Result<(bool, String)> {
    let phy = Phylogeny::uniform(5, 0.3)?;
    let model = potts_rate_matrix(4)?;
    let est = RootEstimator::Diluted { l: 2 };
    let a = root_hit_samples(&phy, &model, est, 1000, seed, Execution::Sequential)?;
    let b = root_hit_samples(&phy, &model, est, 1000, seed, Execution::Parallel)?;
    Ok((
        a == b,
        "sequential and parallel root samples identical".into(),
    ))
}

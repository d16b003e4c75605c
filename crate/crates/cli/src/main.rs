use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use pottstree::experiments::{
    self, asr_accuracy_sweep, ptr_params, ptr_success_sweep, CsvAppender, Experiment, SweepConfig,
    ASR_HEADER, ASR_KEY_COLUMNS, PTR_HEADER, PTR_KEY_COLUMNS,
};
use pottstree::model::RateModel;
use pottstree::par::with_jobs;
use pottstree::rng::{derive_seed, rng_from_seed};
use pottstree::simulate::{sample_alignment, Alignment, Sampler};
use pottstree::tree::{
    newick_records, parse_newick, parse_phylogeny, random_homogeneous_phylogeny, topologies_equal,
};
use pottstree::{potts_rate_matrix, Error, Execution};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(
    name = "pottstree",
    version,
    about = "Simulate and reconstruct Markov models on complete binary trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random complete binary tree with branch lengths uniform on [f, g].
    GenTree(GenTreeArgs),
    /// Simulate an alignment on a tree.
    Simulate(SimulateArgs),
    /// Reconstruct the unrooted topology from an alignment.
    Reconstruct(ReconstructArgs),
    /// Root-state accuracy of the estimators on a uniform tree.
    AsrEval(AsrEvalArgs),
    /// Run a parameter sweep from a config file.
    Sweep(SweepArgs),
    /// Exact distinguishability of two quartet-swapped trees.
    Probe(ProbeArgs),
    /// Run the oracle and invariant checks.
    Verify(VerifyArgs),
    /// Compare two trees by unrooted topology.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GenTreeArgs {
    #[arg(long)]
    h: usize,
    #[arg(long)]
    f: f64,
    #[arg(long)]
    g: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(id = "model_source", required = true, multiple = false, args = ["q", "model"])]
struct ModelArgs {
    /// Alphabet size of the symmetric model.
    #[arg(long)]
    q: Option<usize>,
    /// Model file: q, then q rows of the rate matrix, then the stationary law.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    tree: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// `broadcast` or `random-cluster`.
    #[arg(long, default_value = "broadcast")]
    sampler: Sampler,
    /// Also write internal node sequences.
    #[arg(long)]
    internal: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    alignment: PathBuf,
    /// Lower bound on branch lengths.
    #[arg(long)]
    f: f64,
    /// Upper bound on branch lengths.
    #[arg(long)]
    g: f64,
    #[arg(long, default_value_t = 2)]
    l: usize,
    /// Override the base diameter bound.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    w: f64,
    /// Split threshold; defaults to `f`.
    #[arg(long)]
    f_min: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the failure record as JSON.
    #[arg(long)]
    failure_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AsrEvalArgs {
    #[arg(long)]
    q: usize,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    h: usize,
    #[arg(long, default_value_t = 2)]
    l: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Comma-separated: diluted, majority, posterior, uniform.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "diluted,majority,uniform"
    )]
    estimator: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for sweep cells.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a matplotlib script that plots the CSV.
    #[arg(long)]
    plot_script: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long)]
    tau: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    depth: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Use simulation and reconstruction instead of exact enumeration.
    #[arg(long)]
    sampled: bool,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 2)]
    l: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Reconstruction,
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::rng().random();
        eprintln!("seed: {s}");
        s
    })
}

fn header(config: &impl std::fmt::Debug, seed: Option<u64>) -> String {
    let mut h = format!("# pottstree {VERSION}\n# config: {config:?}\n");
    if let Some(s) = seed {
        h.push_str(&format!("# seed: {s}\n"));
    }
    h
}

fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn read(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn first_record(text: &str, path: &Path) -> std::result::Result<String, Failure> {
    newick_records(text)
        .next()
        .map(str::to_string)
        .ok_or_else(|| Failure::Usage(format!("{}: no tree found", path.display())))
}

fn load_model(m: &ModelArgs) -> std::result::Result<RateModel, Failure> {
    match (m.q, &m.model) {
        (Some(q), None) => Ok(potts_rate_matrix(q)?),
        (None, Some(p)) => Ok(RateModel::parse_config(&read(p)?)?.model),
        _ => Err(Failure::Usage("give exactly one of --q and --model".into())),
    }
}

fn gen_tree(a: GenTreeArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let phy = random_homogeneous_phylogeny(a.h, a.f, a.g, &mut rng_from_seed(seed))?;
    emit(
        a.out.as_deref(),
        &format!("{}{}\n", header(&a, Some(seed)), phy.to_newick()),
    )?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let phy = parse_phylogeny(&first_record(&read(&a.tree)?, &a.tree)?)?;
    let model = load_model(&a.model)?;
    let data = sample_alignment(
        &phy,
        &model,
        a.k,
        &mut rng_from_seed(seed),
        a.sampler,
        a.internal,
    )?;
    let mut text = header(&a, Some(seed));
    text.push_str(&data.leaves.to_text());
    if let Some(internal) = &data.internal {
        // internal rows use the same format after a marker comment
        text.push_str("# internal\n");
        text.push_str(&internal.to_text());
    }
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let text = read(&a.alignment)?;
    // an alignment written with --internal carries a second block
    let leaves_only = text.split("# internal\n").next().unwrap_or("");
    let align = Alignment::parse(leaves_only)?;
    let n = align.n_rows();
    if !n.is_power_of_two() || n < 4 {
        return Err(Failure::Usage(format!("need 2^h >= 4 sequences, got {n}")));
    }
    let h = n.trailing_zeros() as usize;
    let mut params = ptr_params(
        align.q(),
        a.f,
        a.g,
        h,
        a.l,
        a.w,
        derive_seed(seed, 1),
        Execution::Sequential,
    )?;
    if let Some(d) = a.d {
        params.d = d;
    }
    if let Some(f) = a.f_min {
        params.f_min = f;
    }
    match pottstree::reconstruct::reconstruct_homogeneous(
        &align,
        &params,
        derive_seed(seed, 2),
        Execution::Sequential,
    ) {
        Ok(r) => {
            emit(
                a.out.as_deref(),
                &format!("{}{}\n", header(&a, Some(seed)), r.topology.to_newick()),
            )?;
            Ok(())
        }
        Err(Error::Reconstruction(rec)) => {
            eprintln!(
                "reconstruction failed at level {}: {}",
                rec.level, rec.reason
            );
            if let Some(p) = &a.failure_json {
                fs::write(p, rec.to_json())?;
            }
            Err(Failure::Reconstruction)
        }
        Err(e) => Err(e.into()),
    }
}

fn asr_eval(a: AsrEvalArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let cfg = SweepConfig {
        experiment: Experiment::Asr,
        q: vec![a.q],
        tau: vec![a.tau],
        h: vec![a.h],
        k: Vec::new(),
        l: vec![a.l],
        estimator: a.estimator.clone(),
        trials: a.trials,
        seed,
        w: 20.0,
        output: None,
    };
    let rows = asr_accuracy_sweep(&cfg, None, Execution::Sequential)?;
    let mut text = header(&a, Some(seed));
    text.push_str(ASR_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn plot_script(csv: &Path, experiment: Experiment) -> String {
    let (x, y, group) = match experiment {
        Experiment::Ptr => ("k", "rate", "h"),
        Experiment::Asr => ("h", "accuracy", "estimator"),
    };
    format!(
        "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
         df = pd.read_csv({csv:?}, comment=\"#\")\n\
         for key, part in df.groupby(\"{group}\"):\n    plt.plot(part[\"{x}\"], part[\"{y}\"], marker=\"o\", label=f\"{group}={{key}}\")\n\
         plt.xlabel(\"{x}\")\nplt.ylabel(\"{y}\")\nplt.legend()\nplt.savefig({png:?})\n",
        csv = csv.display().to_string(),
        png = csv.with_extension("png").display().to_string(),
    )
}

fn sweep(a: SweepArgs) -> CliResult {
    let cfg = SweepConfig::parse(&read(&a.config)?)?;
    let out = a.out.clone().or_else(|| cfg.output.clone());
    let preamble = format!(
        "pottstree {VERSION}\nconfig: {}\nseed: {}",
        serde_json::to_string(&cfg).unwrap_or_default(),
        cfg.seed
    );
    let (header_line, keys) = match cfg.experiment {
        Experiment::Ptr => (PTR_HEADER, PTR_KEY_COLUMNS),
        Experiment::Asr => (ASR_HEADER, ASR_KEY_COLUMNS),
    };
    let appender = match &out {
        Some(p) => Some(CsvAppender::open(p, &preamble, header_line, keys)?),
        None => None,
    };
    let rows: Vec<String> = with_jobs(a.jobs, || -> pottstree::Result<Vec<String>> {
        Ok(match cfg.experiment {
            Experiment::Ptr => ptr_success_sweep(&cfg, appender.as_ref(), Execution::Parallel)?
                .iter()
                .map(|r| r.to_csv())
                .collect(),
            Experiment::Asr => asr_accuracy_sweep(&cfg, appender.as_ref(), Execution::Parallel)?
                .iter()
                .map(|r| r.to_csv())
                .collect(),
        })
    })?;
    if out.is_none() {
        let mut text: String = preamble.lines().map(|l| format!("# {l}\n")).collect();
        text.push_str(header_line);
        text.push('\n');
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        emit(None, &text)?;
    }
    if let Some(p) = &a.plot_script {
        let csv = out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
        fs::write(p, plot_script(&csv, cfg.experiment))?;
    }
    Ok(())
}

fn probe(a: ProbeArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let mut text = header(&a, Some(seed));
    if a.sampled {
        text.push_str("depth,k,trials,success\n");
        for (i, &d) in a.depth.iter().enumerate() {
            let s = experiments::sampled_distinguishability(
                a.q,
                a.tau,
                d,
                a.k,
                a.l,
                a.trials,
                derive_seed(seed, i as u64),
                Execution::Sequential,
            )?;
            text.push_str(&format!("{d},{},{},{s}\n", a.k, a.trials));
        }
    } else {
        text.push_str("depth,k,tv,bhattacharyya,success_lower,success_upper\n");
        for &d in &a.depth {
            let p = experiments::distinguishability_probe(a.q, a.tau, d, a.k)?;
            text.push_str(&format!(
                "{d},{},{},{},{},{}\n",
                p.k, p.tv, p.bhattacharyya, p.success_lower, p.success_upper
            ));
        }
    }
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult {
    let seed = resolve_seed(a.seed);
    let checks = pottstree::verify::run_all(seed);
    print!(
        "{}{}",
        header(&a, Some(seed)),
        pottstree::verify::format_table(&checks)
    );
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn compare(a: CompareArgs) -> CliResult {
    let ta = parse_newick(&first_record(&read(&a.a)?, &a.a)?)?.topology();
    let tb = parse_newick(&first_record(&read(&a.b)?, &a.b)?)?.topology();
    let c = topologies_equal(&ta, &tb)?;
    // a reader that stops early (grep -q) is not an error
    let _ = emit(
        None,
        &format!(
            "equal\t{}\nrobinson_foulds\t{}\n",
            c.equal, c.robinson_foulds
        ),
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenTree(a) => gen_tree(a),
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::AsrEval(a) => asr_eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Probe(a) => probe(a),
        Command::Verify(a) => verify(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Reconstruction) => ExitCode::from(2),
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(3)
        }
    }
}

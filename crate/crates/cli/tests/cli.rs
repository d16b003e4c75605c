use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pottstree"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .collect()
}

#[test]
fn gen_tree_writes_header_and_newick() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "gen-tree", "--h", "3", "--f", "0.1", "--g", "0.3", "--seed", "7",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# pottstree "));
    assert!(text.contains("# seed: 7"));
    let tree = data_lines(&text)[0];
    let phy = pottstree::tree::parse_phylogeny(tree).unwrap();
    assert_eq!(phy.n_leaves(), 8);
    // same seed, same tree
    let again = run(
        &[
            "gen-tree", "--h", "3", "--f", "0.1", "--g", "0.3", "--seed", "7",
        ],
        dir.path(),
    );
    assert_eq!(stdout(&again), text);
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["gen-tree", "--h", "2", "--f", "0.1", "--g", "0.3"],
        dir.path(),
    );
    assert!(o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    let seed: u64 = err.trim().strip_prefix("seed: ").unwrap().parse().unwrap();
    assert!(stdout(&o).contains(&format!("# seed: {seed}")));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["gen-tree", "--h", "3"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(run(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(
        run(
            &[
                "simulate",
                "--tree",
                "missing.nwk",
                "--q",
                "2",
                "--k",
                "5",
                "--seed",
                "1"
            ],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    // --q and --model are mutually exclusive
    let o = run(
        &[
            "simulate", "--tree", "t.nwk", "--q", "2", "--model", "m.txt", "--k", "5",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(
        &["gen-tree", "--h", "3", "--f", "0.2", "--g", "0.2", "--seed", "3", "--out", "t.nwk"],
        d
    )
    .status
    .success());
    assert!(run(
        &[
            "simulate", "--tree", "t.nwk", "--q", "2", "--k", "4000", "--seed", "3", "--out",
            "a.aln"
        ],
        d
    )
    .status
    .success());
    let align = std::fs::read_to_string(d.join("a.aln")).unwrap();
    assert!(align.starts_with("# pottstree "));
    let parsed = pottstree::simulate::Alignment::parse(&align).unwrap();
    assert_eq!((parsed.n_rows(), parsed.k(), parsed.q()), (8, 4000, 2));

    let o = run(
        &[
            "reconstruct",
            "--alignment",
            "a.aln",
            "--f",
            "0.2",
            "--g",
            "0.2",
            "--seed",
            "3",
            "--out",
            "r.nwk",
        ],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = stdout(&run(&["compare", "t.nwk", "r.nwk"], d));
    assert!(cmp.contains("equal\ttrue"), "{cmp}");
    assert!(cmp.contains("robinson_foulds\t0"));
}

#[test]
fn model_file_and_internal_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("m.txt"),
        "# two-state model\n2\n-1 1\n1 -1\n0.5 0.5\n",
    )
    .unwrap();
    assert!(run(
        &["gen-tree", "--h", "2", "--f", "0.1", "--g", "0.2", "--seed", "1", "--out", "t.nwk"],
        d
    )
    .status
    .success());
    let o = run(
        &[
            "simulate",
            "--tree",
            "t.nwk",
            "--model",
            "m.txt",
            "--k",
            "20",
            "--seed",
            "1",
            "--internal",
        ],
        d,
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# internal"));
    let leaves =
        pottstree::simulate::Alignment::parse(text.split("# internal\n").next().unwrap()).unwrap();
    assert_eq!(leaves.n_rows(), 4);
}

#[test]
fn reconstruction_failure_exits_two_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(
        &[
            "gen-tree", "--h", "3", "--f", "0.2", "--g", "0.2", "--seed", "5", "--out", "t.nwk",
        ],
        d,
    );
    run(
        &[
            "simulate", "--tree", "t.nwk", "--q", "2", "--k", "500", "--seed", "5", "--out",
            "a.aln",
        ],
        d,
    );
    // a negative diameter bound admits no quartet, so no cherry can be matched
    let o = run(
        &[
            "reconstruct",
            "--alignment",
            "a.aln",
            "--f",
            "0.2",
            "--g",
            "0.2",
            "--d=-10",
            "--seed",
            "1",
            "--failure-json",
            "fail.json",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
    let json = std::fs::read_to_string(d.join("fail.json")).unwrap();
    assert!(json.contains("\"level\""));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--seed", "11"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("PASS") && !text.contains("FAIL"));
}

#[test]
fn asr_eval_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "asr-eval", "--q", "4", "--tau", "0.3", "--h", "3", "--trials", "200", "--seed", "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "estimator,q,tau,h,l,trials,accuracy,stderr");
    assert_eq!(rows.len(), 4);
    assert!(rows
        .iter()
        .any(|r| r.starts_with("uniform,4,0.3,3,0,200,0.25,")));
}

#[test]
fn sweep_is_resumable_and_job_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("s.cfg"),
        "experiment = ptr\nq = 2\ntau = 0.2\nh = 2, 3\nk = 200, 800\ntrials = 3\nseed = 4\n",
    )
    .unwrap();
    let one = run(&["sweep", "--config", "s.cfg", "--jobs", "1"], d);
    let four = run(&["sweep", "--config", "s.cfg", "--jobs", "4"], d);
    assert!(one.status.success() && four.status.success());
    let strip = |o: &Output| -> Vec<String> {
        // runtime is the last column and varies between runs
        data_lines(&stdout(o))
            .iter()
            .map(|l| {
                l.rsplit_once(',')
                    .map_or(l.to_string(), |x| x.0.to_string())
            })
            .collect()
    };
    assert_eq!(strip(&one), strip(&four));
    assert_eq!(strip(&one).len(), 5);

    assert!(run(
        &[
            "sweep",
            "--config",
            "s.cfg",
            "--out",
            "s.csv",
            "--plot-script",
            "plot.py"
        ],
        d
    )
    .status
    .success());
    assert!(run(&["sweep", "--config", "s.cfg", "--out", "s.csv"], d)
        .status
        .success());
    let csv = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(csv.starts_with("# pottstree"));
    assert_eq!(data_lines(&csv).len(), 5, "{csv}");
    assert!(std::fs::read_to_string(d.join("plot.py"))
        .unwrap()
        .contains("s.csv"));
}

#[test]
fn sweep_rejects_zero_trials() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.cfg"),
        "experiment = ptr\nq = 2\ntau = 0.2\nh = 3\nk = 200\ntrials = 0\n",
    )
    .unwrap();
    assert_eq!(
        run(&["sweep", "--config", "s.cfg"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn probe_exact_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["probe", "--tau", "0.9", "--depth", "2,3", "--seed", "1"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 3);
    let tv: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(tv[1] < tv[0]);
}

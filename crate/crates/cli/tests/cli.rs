use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fairscore::bench::ExperimentConfig;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fairscore"));
    c.env_remove("FAIRSCORE_JOBS");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "stdout differs from {}", path.display());
}

const TOY: &str = r#"
output_dir = "out"
processors = ["reweighing", "platt"]

[[datasets]]
id = "toy"

[datasets.synthetic]
rows = 400

[learners]
enabled = ["logistic"]

[learners.logistic]
max_iterations = 200
"#;

fn toy_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("toy.toml");
    std::fs::write(&p, format!("{TOY}{extra}")).unwrap();
    p
}

// ------------------------------------------------------------ validate

#[test]
fn validate_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("OK\n"));
    // cost section absent from the file, filled in from defaults
    assert!(text.contains("[cost]\nroi = 0.2664"), "{text}");
    let echoed = ExperimentConfig::from_toml_str(&text[3..], &[]).unwrap();
    assert_eq!(echoed.learners.logistic.max_iterations, 200);
}

#[test]
fn validate_without_config_matches_golden() {
    let o = run(&["validate"]);
    assert_eq!(o.status.code(), Some(0));
    golden("validate_defaults.txt", &stdout(&o));
}

#[test]
fn validate_lists_violations_with_key_paths() {
    let o = run(&["validate", "--set", "preproc.di.lambda=1.3", "--set", "folds=1"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("preproc.di.lambda: 1.3 out of [0,1]"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("folds:")), "{text}");
}

#[test]
fn validate_json_round_trips() {
    let o = run(&["validate", "--json", "--set", "seed=7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text);
    assert_eq!(v["ok"], true);
    assert_eq!(v["config"]["seed"], 7);
    let cfg: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(cfg.seed, 7);
}

#[test]
fn malformed_config_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "foldz = 3\n").unwrap();
    let o = run(&["validate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("foldz"), "{}", stderr(&o));
    let o = run(&["validate", "--config", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/x.toml"));
}

// ------------------------------------------------------------ audit

struct Row {
    s: f64,
    y: u8,
    a: u8,
}

fn rows(path: &Path) -> Vec<Row> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                s: f[0].parse().unwrap(),
                y: f[1].parse().unwrap(),
                a: f[2].parse().unwrap(),
            }
        })
        .collect()
}

fn frac(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

/// Metrics by direct counting.
fn audit_oracle(rows: &[Row], tau: f64) -> [f64; 5] {
    let count = |f: &dyn Fn(&Row) -> bool| rows.iter().filter(|r| f(r)).count();
    let acc = |g: u8| frac(count(&|r| r.a == g && r.s > tau), count(&|r| r.a == g));
    let fpr = |g: u8| frac(count(&|r| r.a == g && r.y == 0 && r.s > tau), count(&|r| r.a == g && r.y == 0));
    let fnr = |g: u8| frac(count(&|r| r.a == g && r.y == 1 && r.s <= tau), count(&|r| r.a == g && r.y == 1));
    let ppv = |g: u8| frac(count(&|r| r.a == g && r.y == 1 && r.s > tau), count(&|r| r.a == g && r.s > tau));
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for p in rows.iter().filter(|r| r.y == 1) {
        for n in rows.iter().filter(|r| r.y == 0) {
            pairs += 1.0;
            wins += if p.s > n.s {
                1.0
            } else if p.s == n.s {
                0.5
            } else {
                0.0
            };
        }
    }
    [
        (acc(0) - acc(1)).abs(),
        0.5 * ((fpr(1) - fpr(0)) + (fnr(1) - fnr(0))).abs(),
        (ppv(0) - ppv(1)).abs(),
        wins / pairs,
        frac(count(&|r| r.s > tau), rows.len()),
    ]
}

fn profit_oracle(rows: &[Row], tau: f64, b: f64, roi: f64) -> f64 {
    let mut p = 0.0;
    for r in rows {
        p += match (r.s > tau, r.y) {
            (true, 1) => roi,
            (true, _) => -b,
            (false, 1) => -roi,
            (false, _) => 0.0,
        };
    }
    p / rows.len() as f64
}

#[test]
fn audit_fixture_matches_oracles() {
    let path = fixture("audit8.csv");
    let o = run(&["audit", path.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (roi, p0, p1) = (0.2664, 0.55, 0.10);
    let eb = p1 + (1.0 - p0 - p1) / 2.0;
    let tau = eb / (2.0 * roi + eb);
    assert!((v["cutoff"].as_f64().unwrap() - 0.275 / 0.8078).abs() < 1e-12);
    let rows = rows(&path);
    let [ind, sp, sf, auc, ar] = audit_oracle(&rows, tau);
    for (key, want) in [("ind", ind), ("sp", sp), ("sf", sf), ("auc", auc), ("acceptance_rate", ar)] {
        let got = v[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-12, "{key}: {got} vs {want}");
    }
    let profit = profit_oracle(&rows, tau, eb, roi);
    assert!((v["profit"].as_f64().unwrap() - profit).abs() < 1e-12);

    // maximum profit over cutoffs, integrated over the loss distribution
    let mut cuts: Vec<f64> = rows.iter().map(|r| r.s).collect();
    cuts.push(-1.0);
    let best = |b: f64| cuts.iter().map(|&t| profit_oracle(&rows, t, b, roi)).fold(f64::MIN, f64::max);
    let n = 200_000;
    let uniform: f64 = (0..n).map(|i| best((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    let emp = p0 * best(0.0) + p1 * best(1.0) + (1.0 - p0 - p1) * uniform;
    assert!((v["emp"].as_f64().unwrap() - emp).abs() < 1e-6);
}

#[test]
fn audit_text_matches_golden() {
    let o = run(&["audit", fixture("audit8.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    golden("audit8.txt", &stdout(&o));
}

#[test]
fn audit_fixed_cutoff_and_json_round_trip() {
    let o = run(&["audit", fixture("audit8.csv").to_str().unwrap(), "--cutoff", "0.5", "--json"]);
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let again: serde_json::Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(again, v);
    assert_eq!(v.as_object().unwrap().len(), 9);
    assert_eq!(v["cutoff"], 0.5);
    let [ind, sp, sf, _, ar] = audit_oracle(&rows(&fixture("audit8.csv")), 0.5);
    assert_eq!(v["ind"].as_f64().unwrap(), ind);
    assert_eq!(v["sp"].as_f64().unwrap(), sp);
    assert!((v["sf"].as_f64().unwrap() - sf).abs() < 1e-12);
    assert_eq!(v["acceptance_rate"].as_f64().unwrap(), ar);
}

#[test]
fn perfectly_fair_file_scores_zero() {
    let o = run(&["audit", fixture("fair.csv").to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["ind"], 0.0);
    assert_eq!(v["sp"], 0.0);
    assert_eq!(v["sf"], 0.0);
}

#[test]
fn audit_reports_the_bad_line() {
    let o = run(&["audit", fixture("bad_score.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 7: score out of [0,1]"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("score,label\n0.5,1\n", "line 1"),
        ("score,label,sensitive\n0.5,2,0\n", "line 2: label must be 0 or 1"),
        ("score,label,sensitive\n0.5,1,0\nx,1,0\n", "line 3: score `x` is not a number"),
        ("score,label,sensitive\n0.5,1\n", "line 2: expected 3 fields"),
        ("score,label,sensitive\n", "no rows"),
    ];
    for (i, (text, msg)) in cases.iter().enumerate() {
        let p = dir.path().join(format!("c{i}.csv"));
        std::fs::write(&p, text).unwrap();
        let o = run(&["audit", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(stderr(&o).contains(msg), "{text}: {}", stderr(&o));
    }
    let o = run(&["audit", fixture("audit8.csv").to_str().unwrap(), "--cutoff", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn undefined_metrics_print_na() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one_class.csv");
    std::fs::write(&p, "score,label,sensitive\n0.9,1,0\n0.2,1,1\n").unwrap();
    let o = run(&["audit", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("auc              NA"), "{text}");
    let o = run(&["audit", p.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["auc"].is_null());
    assert_eq!(v["ind"], 1.0);
}

// ------------------------------------------------------------ frontier

const RECORD_HEADER: &str =
    "dataset,processor,learner,fold,seed,setting,auc,profit_raw,profit_normalized,acceptance_rate,ind,sp,sf";

fn records_csv(points: &[(f64, f64)]) -> String {
    let mut s = format!("{RECORD_HEADER}\n");
    for (i, (p, sp)) in points.iter().enumerate() {
        s += &format!("d,platt,logistic,{i},1,-,0.7,{p:?},NA,0.5,0.1,{sp:?},NA\n");
    }
    s
}

fn frontier_of(path: &Path) -> Output {
    run(&["frontier", path.to_str().unwrap()])
}

fn folds_in(csv: &str) -> Vec<usize> {
    csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect()
}

#[test]
fn frontier_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    std::fs::write(&p, records_csv(&[(0.05, 0.10), (0.04, 0.05), (0.03, 0.20)])).unwrap();
    let o = frontier_of(&p);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    golden("frontier3.csv", &text);
    assert!(stderr(&o).contains("3 records, 3 with profit and sp: 2 on the frontier, 1 dominated"));

    // idempotent, also through a frontier file
    let f = dir.path().join("f.csv");
    std::fs::write(&f, &text).unwrap();
    assert_eq!(stdout(&frontier_of(&f)), text);

    let o = run(&["frontier", p.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["frontier_points"], 2);
    assert_eq!(v["dominated"], 1);
    assert_eq!(v["frontier"][1]["sp"], 0.05);
}

#[test]
fn frontier_out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    std::fs::write(&p, records_csv(&[(0.05, 0.10), (0.04, 0.05)])).unwrap();
    let out = dir.path().join("front.csv");
    let o = run(&["frontier", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(folds_in(&std::fs::read_to_string(&out).unwrap()), vec![0, 1]);
}

fn dominated(a: (f64, f64), b: (f64, f64)) -> bool {
    b.0 >= a.0 && b.1 <= a.1 && (b.0 > a.0 || b.1 < a.1)
}

#[test]
fn frontier_hundred_points_match_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let mut runner = TestRunner::deterministic();
    // coarse values so ties and duplicates occur
    let strategy = prop::collection::vec((0u32..40, 0u32..40), 100);
    for case in 0..5 {
        let raw = strategy.new_tree(&mut runner).unwrap().current();
        let pts: Vec<(f64, f64)> = raw.iter().map(|&(a, b)| (a as f64 / 100.0, b as f64 / 200.0)).collect();
        let p = dir.path().join(format!("r{case}.csv"));
        std::fs::write(&p, records_csv(&pts)).unwrap();
        let o = frontier_of(&p);
        let mut got = folds_in(&stdout(&o));
        got.sort_unstable();
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| !pts.iter().any(|&q| dominated(pts[i], q)))
            .collect();
        assert_eq!(got, want);
        let f = dir.path().join(format!("f{case}.csv"));
        std::fs::write(&f, o.stdout).unwrap();
        assert_eq!(frontier_of(&f).stdout, std::fs::read(&f).unwrap());
    }
}

#[test]
fn frontier_empty_and_mismatched_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    std::fs::write(&p, format!("{RECORD_HEADER}\n")).unwrap();
    let o = frontier_of(&p);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout(&o), "dataset,processor,learner,fold,profit,sp\n");

    let p = dir.path().join("other.csv");
    std::fs::write(&p, "a,b,c\n1,2,3\n").unwrap();
    let o = frontier_of(&p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not match"));

    let p = dir.path().join("badrow.csv");
    std::fs::write(&p, format!("{RECORD_HEADER}\nd,nonsense,l,0,1,-,1,1,1,1,1,1,1\n")).unwrap();
    let o = frontier_of(&p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

// ------------------------------------------------------------ run

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_writes_reports_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    let o = run(&["run", "--config", cfg, "--set", "seed=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("processor "), "{text}");
    assert!(text.contains("errored cells   0"));
    let first = read_dir_bytes(&dir.path().join("out"));
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["correlations.csv", "frontier.csv", "gains.csv", "records.csv", "records.json", "summary.json"]
    );

    let o2 = bin()
        .args(["run", "--config", cfg, "--set", "seed=1"])
        .env("FAIRSCORE_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(o2.status.code(), Some(0));
    assert_eq!(stdout(&o2), text);
    assert_eq!(read_dir_bytes(&dir.path().join("out")), first);

    // --seed wins over the config and changes the output
    let other = dir.path().join("other");
    let o3 = run(&["run", "--config", cfg, "--seed", "2", "--out", other.to_str().unwrap()]);
    assert_eq!(o3.status.code(), Some(0));
    assert_ne!(read_dir_bytes(&other), first);
}

#[test]
fn run_json_summary_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--json", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let summary: fairscore::bench::Summary = serde_json::from_str(&text).unwrap();
    assert_eq!(summary.records, 15);
    assert_eq!(summary.expected_cells, 15);
    assert!(summary.balanced);
    assert_eq!(serde_json::to_string_pretty(&summary).unwrap() + "\n", text);
    let on_disk = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert_eq!(on_disk, text);
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // too few rows to stratify: every cell errors, the run still reports
    let cfg = toy_config(dir.path(), "");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--set", "datasets.0.synthetic.rows=8"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("cell toy/"));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    assert!(summary.contains("\"errored_cells\": 15"));

    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "datasets=[{id = 'g', csv = '/nonexistent/german.csv', schema = '/nonexistent/s.toml'}]",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/german.csv"), "{}", stderr(&o));

    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--set", "preproc.di.lambda=1.3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(1), "usage error");
}

#[test]
fn dataset_that_fails_to_parse_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "x,y\n1,2\n").unwrap();
    std::fs::write(dir.path().join("s.toml"), "target = \"y\"\n[sensitive]\ncolumn = \"age\"\n").unwrap();
    let cfg = toy_config(dir.path(), "");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "datasets=[{id = 'bad', csv = 'd.csv', schema = 's.toml'}]",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad"), "{}", stderr(&o));
}

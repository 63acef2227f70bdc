use fairscore::bench::config::apply_override;
use fairscore::bench::{
    aggregate_gains, emit_report, pareto_frontier, pareto_indices, rank_correlation,
    read_records_csv, read_records_json, run_experiment, run_experiment_with_jobs, spearman,
    write_records_csv, BenchError, ExperimentConfig, Metric, ProcessorId, ResultRecord,
    SELF_LEARNER,
};
use proptest::prelude::*;

fn small(extra: &[&str]) -> ExperimentConfig {
    let mut o: Vec<String> = vec![
        "datasets.0.synthetic.rows=400".into(),
        "learners.enabled=['logistic']".into(),
        "learners.logistic.max_iterations=200".into(),
    ];
    o.extend(extra.iter().map(|s| s.to_string()));
    ExperimentConfig::from_toml_str(
        "[[datasets]]\nid = \"toy\"\n[datasets.synthetic]\nrows = 400\n",
        &o,
    )
    .unwrap()
}

fn record(
    processor: ProcessorId,
    learner: &str,
    fold: usize,
    ind: f64,
    profit: f64,
) -> ResultRecord {
    ResultRecord {
        dataset: "d".into(),
        processor,
        learner: learner.into(),
        fold,
        seed: 0,
        setting: "-".into(),
        metrics: fairscore::bench::Metrics {
            auc: Some(0.7),
            profit_raw: Some(profit),
            profit_normalized: Some(profit * 2.0),
            acceptance_rate: Some(0.5),
            ind: Some(ind),
            sp: Some(ind / 2.0),
            sf: None,
        },
    }
}

// ---------------------------------------------------------------- run

#[test]
fn one_processor_one_learner_gives_ten_records() {
    let cfg = small(&["processors=['reweighing']"]);
    let out = run_experiment(&cfg).unwrap();
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    assert_eq!(out.records.len(), 10);
    assert_eq!(out.expected_cells, 10);
    let base = out
        .records
        .iter()
        .filter(|r| r.processor == ProcessorId::Unconstrained)
        .count();
    assert_eq!(base, 5);
    for r in &out.records {
        let m = &r.metrics;
        for v in [m.auc, m.profit_raw, m.acceptance_rate, m.ind, m.sp] {
            assert!(v.is_some_and(f64::is_finite));
        }
    }
}

#[test]
fn in_processors_ignore_the_learner_grid() {
    let cfg = small(&[
        "processors=['prejudice_remover']",
        "learners.enabled=[]",
        "inproc.prejudice.eta=[1.0, 15.0]",
    ]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records.len(), 5);
    assert!(out.records.iter().all(|r| r.learner == SELF_LEARNER));
    assert!(out.records.iter().all(|r| r.setting.starts_with("eta=")));
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let cfg = small(&[
        "processors=['di_remover', 'reject_option', 'equalized_odds', 'platt']",
        "preproc.di.lambda=[0.5, 1.0]",
        "postproc.reject_option.thresholds=20",
    ]);
    let a = run_experiment_with_jobs(&cfg, 1).unwrap();
    let b = run_experiment_with_jobs(&cfg, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len() + a.errors.len(), a.expected_cells);
    let mut x = Vec::new();
    let mut y = Vec::new();
    write_records_csv(&mut x, &a.records).unwrap();
    write_records_csv(&mut y, &run_experiment(&cfg).unwrap().records).unwrap();
    assert_eq!(x, y);
}

#[test]
fn network_tuning_and_in_processors_balance_the_ledger() {
    let cfg = small(&[
        "learners.enabled=['network']",
        "learners.network.hidden=[3]",
        "learners.network.decay=[0.5, 1.0]",
        "learners.network.max_iterations=20",
        "inner_folds=2",
        "folds=2",
        "processors=['meta_fair', 'adversarial']",
        "inproc.metafair.sigma=0.8",
        "inproc.adversarial.alpha=0.1",
        "inproc.adversarial.epochs=5",
    ]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.expected_cells, 2 * (1 + 2));
    assert_eq!(out.records.len() + out.errors.len(), out.expected_cells);
    let net = out.records.iter().find(|r| r.learner == "network").unwrap();
    assert!(net.setting.starts_with("hidden=3;decay="));
}

#[test]
fn unreadable_dataset_is_fatal_and_names_the_path() {
    let cfg = ExperimentConfig::from_toml_str(
        "[[datasets]]\nid = \"g\"\ncsv = \"/nonexistent/german.csv\"\nschema = \"/nonexistent/schema.toml\"\n",
        &[],
    )
    .unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/"), "{err}");
}

#[test]
fn degenerate_split_errors_every_cell_without_aborting() {
    // a tiny dataset cannot fill every stratum of both splits and folds
    let cfg = small(&["datasets.0.synthetic.rows=8", "processors=['platt']"]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.records.len() + out.errors.len(), out.expected_cells);
    assert!(!out.errors.is_empty());
}

// ---------------------------------------------------------------- config

#[test]
fn config_defaults_and_overrides() {
    let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
    assert!(cfg.violations().is_empty());
    assert_eq!(cfg.cost.roi, 0.2664);
    assert_eq!(cfg.processors.len(), 8);
    assert_eq!(cfg.preproc.di.lambda.0, vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    let cfg =
        ExperimentConfig::from_toml_str("seed = 3\n", &["seed=9".into(), "cost.roi=0.3".into()])
            .unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.cost.roi, 0.3);
    // the effective config parses back to itself
    let again = ExperimentConfig::from_toml_str(&cfg.to_toml(), &[]).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn config_violations_name_their_keys() {
    let cfg = ExperimentConfig::from_toml_str("[preproc.di]\nlambda = 1.3\n", &[]).unwrap();
    let v = cfg.violations();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].key, "preproc.di.lambda");
    assert!(v[0].message.contains("out of [0,1]"));
    let cfg = ExperimentConfig::from_toml_str("folds = 1\n[learners.network]\nhidden = []\n", &[])
        .unwrap();
    let keys: Vec<String> = cfg.violations().into_iter().map(|v| v.key).collect();
    assert_eq!(keys, vec!["folds", "learners.network.hidden"]);
    assert!(matches!(
        ExperimentConfig::from_toml_str("unknown_key = 1\n", &[]),
        Err(BenchError::Config(_))
    ));
    assert!(matches!(
        ExperimentConfig::from_toml_str("", &["no_equals_sign".into()]),
        Err(BenchError::Config(_))
    ));
}

#[test]
fn overrides_reach_into_arrays_and_fall_back_to_strings() {
    let mut t: toml::Table = "[[datasets]]\nid = \"a\"\n".parse().unwrap();
    apply_override(&mut t, "datasets.0.id", "renamed").unwrap();
    apply_override(&mut t, "cost.p0", "0.5").unwrap();
    assert_eq!(t["datasets"][0]["id"].as_str(), Some("renamed"));
    assert_eq!(t["cost"]["p0"].as_float(), Some(0.5));
    assert!(apply_override(&mut t, "datasets.5.id", "x").is_err());
    assert!(apply_override(&mut t, "cost..p0", "1").is_err());
}

// ---------------------------------------------------------------- gains

#[test]
fn gains_follow_the_sign_convention() {
    let recs = vec![
        record(ProcessorId::Unconstrained, "logistic", 0, 0.4, 0.0492),
        record(ProcessorId::Reweighing, "logistic", 0, 0.1, 0.0463),
        record(ProcessorId::Platt, "logistic", 0, 0.4, 0.0492),
    ];
    let gains = aggregate_gains(&recs).unwrap();
    let get = |p, m| {
        gains
            .iter()
            .find(|g| g.processor == p && g.metric == m)
            .unwrap()
            .gain
    };
    assert!((get(ProcessorId::Reweighing, Metric::Ind).unwrap() - 0.75).abs() < 1e-12);
    let profit = get(ProcessorId::Reweighing, Metric::ProfitRaw).unwrap();
    assert!((profit - (0.0463 - 0.0492) / 0.0492).abs() < 1e-12);
    assert!((profit * 100.0 + 5.89).abs() < 0.01);
    for m in Metric::ALL {
        let g = get(ProcessorId::Platt, m);
        assert!(g.is_none_or(|v| v == 0.0));
    }
    // undefined values are excluded and counted
    let sf = gains
        .iter()
        .find(|g| g.processor == ProcessorId::Platt && g.metric == Metric::Sf)
        .unwrap();
    assert_eq!((sf.cells, sf.excluded), (0, 1));
}

#[test]
fn gains_use_absolute_change_near_zero_and_average_baselines_for_in_processors() {
    let recs = vec![
        record(ProcessorId::Unconstrained, "logistic", 0, 0.0, 0.04),
        record(ProcessorId::Unconstrained, "network", 0, 0.0, 0.06),
        record(ProcessorId::PrejudiceRemover, SELF_LEARNER, 0, 0.01, 0.045),
    ];
    let gains = aggregate_gains(&recs).unwrap();
    let ind = gains.iter().find(|g| g.metric == Metric::Ind).unwrap();
    assert_eq!(ind.absolute_cells, 1);
    assert!((ind.gain.unwrap() + 0.01).abs() < 1e-15);
    let profit = gains
        .iter()
        .find(|g| g.metric == Metric::ProfitRaw)
        .unwrap();
    assert!((profit.gain.unwrap() - (0.045 - 0.05) / 0.05).abs() < 1e-12);
    let orphan = vec![record(ProcessorId::Platt, "logistic", 3, 0.1, 0.1)];
    assert!(matches!(
        aggregate_gains(&orphan),
        Err(BenchError::MissingBaseline { fold: 3, .. })
    ));
}

// ---------------------------------------------------------------- correlation

/// Midrank of each value by counting, then the all-pairs form of Pearson's r.
fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..x.len() {
            let (dx, dy) = (rx[i] - rx[j], ry[i] - ry[j]);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn spearman_examples() {
    let x = [0.3, 0.1, 0.9, 0.5];
    assert!((spearman(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    let rev: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
    let a = [1.0, 2.0, 2.0, 4.0];
    let b = [1.0, 3.0, 2.0, 4.0];
    let got = spearman(&a, &b).unwrap();
    assert!((got - spearman_oracle(&a, &b)).abs() < 1e-12);
    assert!((got - 0.9486832980505138).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
}

proptest! {
    #[test]
    fn spearman_matches_the_pair_oracle(v in prop::collection::vec((0u8..6, 0u8..6), 3..40)) {
        let x: Vec<f64> = v.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = v.iter().map(|p| f64::from(p.1)).collect();
        if let Some(r) = spearman(&x, &y) {
            prop_assert!((r - spearman_oracle(&x, &y)).abs() < 1e-12);
        }
    }
}

#[test]
fn rank_correlation_flips_fairness_signs() {
    let recs: Vec<ResultRecord> = (0..6)
        .map(|i| {
            record(
                ProcessorId::Reweighing,
                "logistic",
                i,
                0.05 * i as f64,
                0.01 * i as f64,
            )
        })
        .collect();
    let c = rank_correlation(
        &recs,
        &[Metric::ProfitRaw, Metric::Ind, Metric::Sp, Metric::Sf],
    )
    .unwrap();
    assert_eq!(c.get(Metric::Ind, Metric::Ind), Some(1.0));
    assert_eq!(c.get(Metric::Ind, Metric::Sp), Some(1.0));
    // profit rises with IND, i.e. with worse fairness
    assert_eq!(c.get(Metric::ProfitRaw, Metric::Ind), Some(-1.0));
    assert_eq!(c.get(Metric::Sf, Metric::Ind), None);
    assert!(matches!(
        rank_correlation(&recs[..2], &[Metric::Ind]),
        Err(BenchError::TooFewRecords { count: 2, .. })
    ));
}

// ---------------------------------------------------------------- frontier

fn dominated_by_brute_force(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().any(|q| {
                let p = points[i];
                q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1)
            })
        })
        .collect()
}

#[test]
fn frontier_examples() {
    let pts = [(0.05, 0.10), (0.04, 0.05), (0.03, 0.20)];
    assert_eq!(pareto_indices(&pts), vec![0, 1]);
    let recs: Vec<ResultRecord> = pts
        .iter()
        .enumerate()
        .map(|(i, &(p, sp))| {
            let mut r = record(ProcessorId::Platt, "logistic", i, 0.0, p);
            r.metrics.sp = Some(sp);
            r
        })
        .collect();
    let f = pareto_frontier(&recs);
    assert_eq!(f.iter().map(|r| r.fold).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(pareto_frontier(&f), f);
    assert_eq!(pareto_frontier(&recs[2..]).len(), 1);
    assert!(pareto_frontier(&[]).is_empty());
}

proptest! {
    #[test]
    fn frontier_matches_brute_force(v in prop::collection::vec((0u8..20, 0u8..20), 1..100)) {
        // coarse values force ties
        let pts: Vec<(f64, f64)> = v.iter().map(|p| (f64::from(p.0) / 100.0, f64::from(p.1) / 50.0)).collect();
        let mut got = pareto_indices(&pts);
        got.sort_unstable();
        prop_assert_eq!(got, dominated_by_brute_force(&pts));
    }
}

// ---------------------------------------------------------------- report

#[test]
fn report_files_round_trip() {
    let cfg = small(&["processors=['reweighing']"]);
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = emit_report(dir.path(), &out, cfg.seed).unwrap();
    assert!(report.summary.balanced);
    assert_eq!(report.summary.records, 10);
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(text.lines().count(), 11);
    let back = read_records_csv(text.as_bytes(), "records.csv").unwrap();
    assert_eq!(back, out.records);
    let json = std::fs::File::open(dir.path().join("records.json")).unwrap();
    assert_eq!(
        read_records_json(json, "records.json").unwrap(),
        out.records
    );
    for f in [
        "gains.csv",
        "correlations.csv",
        "frontier.csv",
        "summary.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let frontier = std::fs::read_to_string(dir.path().join("frontier.csv")).unwrap();
    assert!(frontier.starts_with("dataset,processor,learner,fold,profit,sp\n"));
    assert_eq!(frontier.lines().count(), report.frontier.len() + 1);
}

#[test]
fn empty_records_give_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairscore::bench::RunOutput::default();
    let report = emit_report(dir.path(), &out, 0).unwrap();
    assert!(report.frontier.is_empty());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("frontier.csv")).unwrap(),
        "dataset,processor,learner,fold,profit,sp\n"
    );
    assert_eq!(
        read_records_csv(
            std::fs::File::open(dir.path().join("records.csv")).unwrap(),
            "r"
        )
        .unwrap(),
        vec![]
    );
}

#[test]
fn record_reader_reports_schema_problems() {
    let bad_header = "dataset,processor\nd,platt\n";
    assert!(matches!(
        read_records_csv(bad_header.as_bytes(), "x"),
        Err(BenchError::Schema { .. })
    ));
    let mut buf = Vec::new();
    write_records_csv(
        &mut buf,
        &[record(ProcessorId::Platt, "logistic", 0, 0.1, 0.1)],
    )
    .unwrap();
    let text = String::from_utf8(buf).unwrap().replace(",platt,", ",nope,");
    let err = read_records_csv(text.as_bytes(), "x")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 2"), "{err}");
}

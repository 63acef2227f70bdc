use std::fs;
use std::io::Write;
use std::path::Path;

use fairscore::bench::{
    emit_report, frontiers_by_dataset, is_frontier_csv, read_frontier_csv, read_records_csv, run_experiment_with_jobs,
    write_frontier_csv, ExperimentConfig, Metric, ResultRecord,
};
use serde_json::json;

use crate::Cli;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FATAL: u8 = 1;
pub const EXIT_CELL_ERRORS: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;

/// Writes to stdout; a closed pipe is not an error.
pub fn emit(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
}

pub fn emit_json<T: serde::Serialize>(value: &T) {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("json")));
}

fn fail(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_FATAL
}

/// Config from `--config` (defaults when absent) with `--set` and `--seed` applied.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path, &cli.overrides),
        None => ExperimentConfig::from_toml_str("", &cli.overrides),
    }
    .map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn validate(cli: &Cli) -> u8 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let violations = cfg.violations();
    if cli.json {
        let config: toml::Table = toml::from_str(&cfg.to_toml()).expect("config round-trips");
        let doc = json!({
            "ok": violations.is_empty(),
            "violations": violations
                .iter()
                .map(|v| json!({"key": v.key, "message": v.message}))
                .collect::<Vec<_>>(),
            "config": config,
        });
        emit_json(&doc);
    } else if violations.is_empty() {
        emit(&format!("OK\n{}", cfg.to_toml()));
    } else {
        emit(&violations.iter().map(|v| format!("{v}\n")).collect::<String>());
    }
    if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_FATAL
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

/// Mean test metrics per processor and learner, in record order.
fn summary_table(records: &[ResultRecord]) -> String {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.processor.to_string(), r.learner.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let metrics = [Metric::Auc, Metric::ProfitRaw, Metric::AcceptanceRate, Metric::Ind, Metric::Sp, Metric::Sf];
    let mut out = format!("{:<18} {:<9} {:>5}", "processor", "learner", "cells");
    for m in metrics {
        out += &format!(" {:>10}", m.as_str());
    }
    out.push('\n');
    for (p, l) in keys {
        let rows: Vec<&ResultRecord> = records
            .iter()
            .filter(|r| r.processor.as_str() == p && r.learner == l)
            .collect();
        out += &format!("{p:<18} {l:<9} {:>5}", rows.len());
        for m in metrics {
            out += &format!(" {:>10}", cell(mean(rows.iter().map(|r| m.value(r)))));
        }
        out.push('\n');
    }
    out
}

pub fn run(cli: &Cli, out: Option<&Path>) -> u8 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let violations = cfg.violations();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return EXIT_FATAL;
    }
    let jobs = cli
        .jobs
        .map(usize::from)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let output = match run_experiment_with_jobs(&cfg, jobs) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let dir = out.map_or_else(|| cfg.output_path(), Path::to_path_buf);
    let report = match emit_report(&dir, &output, cfg.seed) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let s = &report.summary;
    if cli.json {
        emit_json(s);
    } else {
        let mut text = summary_table(&output.records);
        text += &format!(
            "\nseed            {}\nexpected cells  {}\nrecords         {}\nerrored cells   {}\nfrontier points {}\n",
            s.seed, s.expected_cells, s.records, s.errored_cells, s.frontier_points
        );
        for n in &s.notes {
            text += &format!("note: {n}\n");
        }
        text += &format!("output          {}\n", dir.display());
        emit(&text);
    }
    for e in &output.errors {
        eprintln!(
            "cell {}/{}/{}/fold {}: {}",
            e.dataset, e.processor, e.learner, e.fold, e.message
        );
    }
    if output.errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_CELL_ERRORS
    }
}

pub fn frontier(cli: &Cli, records: &Path, out: Option<&Path>) -> u8 {
    let name = records.display().to_string();
    let text = match fs::read_to_string(records) {
        Ok(t) => t,
        Err(e) => return fail(format!("{name}: {e}")),
    };
    let parsed = if is_frontier_csv(&text) {
        read_frontier_csv(text.as_bytes(), &name)
    } else {
        read_records_csv(text.as_bytes(), &name)
    };
    let input = match parsed {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let usable = input
        .iter()
        .filter(|r| r.metrics.profit_raw.is_some() && r.metrics.sp.is_some())
        .count();
    let front = frontiers_by_dataset(&input);

    let mut csv = Vec::new();
    write_frontier_csv(&mut csv, &front).expect("in-memory write");
    if let Some(path) = out {
        if let Err(e) = fs::write(path, &csv) {
            return fail(format!("{}: {e}", path.display()));
        }
    }
    if cli.json {
        let doc = json!({
            "records": input.len(),
            "usable": usable,
            "frontier_points": front.len(),
            "dominated": usable - front.len(),
            "frontier": front
                .iter()
                .map(|r| json!({
                    "dataset": r.dataset,
                    "processor": r.processor,
                    "learner": r.learner,
                    "fold": r.fold,
                    "profit": r.metrics.profit_raw,
                    "sp": r.metrics.sp,
                }))
                .collect::<Vec<_>>(),
        });
        emit_json(&doc);
    } else {
        if out.is_none() {
            emit(&String::from_utf8_lossy(&csv));
        }
        eprintln!(
            "{} records, {} with profit and sp: {} on the frontier, {} dominated",
            input.len(),
            usable,
            front.len(),
            usable - front.len()
        );
    }
    if input.is_empty() {
        eprintln!("error: {name}: no records");
        return EXIT_EMPTY;
    }
    EXIT_OK
}

//! Report files. Floats are written in shortest round-trip form; undefined
//! metrics are written as `NA` in CSV and `null` in JSON.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analysis::{
    aggregate_gains, pareto_frontier, rank_correlation, CorrelationMatrix, Gain,
};
use super::config::ProcessorId;
use super::run::RunOutput;
use super::{BenchError, CellError, Metric, Metrics, ResultRecord};

pub const SCHEMA_VERSION: u32 = 1;

const RECORD_HEADER: [&str; 13] = [
    "dataset",
    "processor",
    "learner",
    "fold",
    "seed",
    "setting",
    "auc",
    "profit_raw",
    "profit_normalized",
    "acceptance_rate",
    "ind",
    "sp",
    "sf",
];

const FRONTIER_HEADER: [&str; 6] = ["dataset", "processor", "learner", "fold", "profit", "sp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub seed: u64,
    pub expected_cells: usize,
    pub records: usize,
    pub errored_cells: usize,
    /// Records plus errored cells equal the expected cell count.
    pub balanced: bool,
    pub frontier_points: usize,
    pub files: Vec<String>,
    pub notes: Vec<String>,
    pub errors: Vec<CellError>,
}

/// Everything derived from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub gains: Vec<Gain>,
    pub correlations: Option<CorrelationMatrix>,
    pub frontier: Vec<ResultRecord>,
    pub summary: Summary,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn write_records_csv(out: impl Write, records: &[ResultRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        let m = &r.metrics;
        w.write_record([
            r.dataset.clone(),
            r.processor.to_string(),
            r.learner.clone(),
            r.fold.to_string(),
            r.seed.to_string(),
            r.setting.clone(),
            fmt_opt(m.auc),
            fmt_opt(m.profit_raw),
            fmt_opt(m.profit_normalized),
            fmt_opt(m.acceptance_rate),
            fmt_opt(m.ind),
            fmt_opt(m.sp),
            fmt_opt(m.sf),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a records CSV written by [`write_records_csv`]. `source` names the
/// input in error messages.
pub fn read_records_csv(input: impl Read, source: &str) -> Result<Vec<ResultRecord>, BenchError> {
    let schema = |message: String| BenchError::Schema {
        path: source.to_string(),
        message,
    };
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rd.headers().map_err(|e| schema(e.to_string()))?.clone();
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(schema(format!(
            "header `{}` does not match `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            RECORD_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| schema(format!("line {line}: {e}")))?;
        let at = |message: String| schema(format!("line {line}: {message}"));
        let num = |k: usize| -> Result<Option<f64>, BenchError> {
            match &row[k] {
                "NA" => Ok(None),
                s => s
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| at(format!("{} `{s}` is not a number", RECORD_HEADER[k]))),
            }
        };
        out.push(ResultRecord {
            dataset: row[0].to_string(),
            processor: row[1].parse::<ProcessorId>().map_err(at)?,
            learner: row[2].to_string(),
            fold: row[3]
                .parse()
                .map_err(|_| at(format!("fold `{}`", &row[3])))?,
            seed: row[4]
                .parse()
                .map_err(|_| at(format!("seed `{}`", &row[4])))?,
            setting: row[5].to_string(),
            metrics: Metrics {
                auc: num(6)?,
                profit_raw: num(7)?,
                profit_normalized: num(8)?,
                acceptance_rate: num(9)?,
                ind: num(10)?,
                sp: num(11)?,
                sf: num(12)?,
            },
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RecordsJson {
    schema_version: u32,
    records: Vec<ResultRecord>,
}

pub fn read_records_json(input: impl Read, source: &str) -> Result<Vec<ResultRecord>, BenchError> {
    let doc: RecordsJson = serde_json::from_reader(input).map_err(|e| BenchError::Schema {
        path: source.to_string(),
        message: e.to_string(),
    })?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(BenchError::Schema {
            path: source.to_string(),
            message: format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            ),
        });
    }
    Ok(doc.records)
}

pub fn write_frontier_csv(out: impl Write, frontier: &[ResultRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRONTIER_HEADER)?;
    for r in frontier {
        w.write_record([
            r.dataset.clone(),
            r.processor.to_string(),
            r.learner.clone(),
            r.fold.to_string(),
            fmt_opt(r.metrics.profit_raw),
            fmt_opt(r.metrics.sp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a frontier CSV written by [`write_frontier_csv`]. Only profit and
/// separation are filled in; the seed is 0 and the setting `-`.
pub fn read_frontier_csv(input: impl Read, source: &str) -> Result<Vec<ResultRecord>, BenchError> {
    let schema = |message: String| BenchError::Schema {
        path: source.to_string(),
        message,
    };
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rd.headers().map_err(|e| schema(e.to_string()))?.clone();
    if header.iter().ne(FRONTIER_HEADER.iter().copied()) {
        return Err(schema(format!(
            "header `{}` does not match `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            FRONTIER_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| schema(format!("line {line}: {e}")))?;
        let at = |message: String| schema(format!("line {line}: {message}"));
        let num = |k: usize| -> Result<Option<f64>, BenchError> {
            match &row[k] {
                "NA" => Ok(None),
                s => s
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| at(format!("{} `{s}` is not a number", FRONTIER_HEADER[k]))),
            }
        };
        out.push(ResultRecord {
            dataset: row[0].to_string(),
            processor: row[1].parse::<ProcessorId>().map_err(at)?,
            learner: row[2].to_string(),
            fold: row[3]
                .parse()
                .map_err(|_| at(format!("fold `{}`", &row[3])))?,
            seed: 0,
            setting: "-".to_string(),
            metrics: Metrics {
                profit_raw: num(4)?,
                sp: num(5)?,
                ..Metrics::default()
            },
        });
    }
    Ok(out)
}

/// True when the first line of `text` is the frontier CSV header.
pub fn is_frontier_csv(text: &str) -> bool {
    text.lines()
        .next()
        .is_some_and(|l| l.trim_end() == FRONTIER_HEADER.join(","))
}

fn write_gains_csv(out: impl Write, gains: &[Gain]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "processor",
        "metric",
        "gain",
        "cells",
        "absolute_cells",
        "excluded",
    ])?;
    for g in gains {
        w.write_record([
            g.processor.to_string(),
            g.metric.to_string(),
            fmt_opt(g.gain),
            g.cells.to_string(),
            g.absolute_cells.to_string(),
            g.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_correlations_csv(out: impl Write, c: Option<&CorrelationMatrix>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let metrics: Vec<Metric> = c.map_or_else(|| Metric::ALL.to_vec(), |c| c.metrics.clone());
    let mut header = vec!["metric".to_string()];
    header.extend(metrics.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    if let Some(c) = c {
        for (m, row) in c.metrics.iter().zip(&c.values) {
            let mut line = vec![m.to_string()];
            line.extend(row.iter().map(|&v| fmt_opt(v)));
            w.write_record(&line)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Frontier of each dataset, concatenated in order of first appearance.
pub fn frontiers_by_dataset(records: &[ResultRecord]) -> Vec<ResultRecord> {
    let mut datasets: Vec<&str> = Vec::new();
    for r in records {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    datasets
        .into_iter()
        .flat_map(|d| {
            let rows: Vec<ResultRecord> =
                records.iter().filter(|r| r.dataset == d).cloned().collect();
            pareto_frontier(&rows)
        })
        .collect()
}

/// Writes records.csv, records.json, gains.csv, correlations.csv,
/// frontier.csv and summary.json into `dir`.
pub fn emit_report(dir: &Path, run: &RunOutput, seed: u64) -> Result<Report, BenchError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut notes = Vec::new();
    let gains = match aggregate_gains(&run.records) {
        Ok(g) => g,
        Err(e) => {
            notes.push(format!("gains not computed: {e}"));
            Vec::new()
        }
    };
    let correlations = match rank_correlation(&run.records, &Metric::ALL) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("correlations not computed: {e}"));
            None
        }
    };
    let frontier = frontiers_by_dataset(&run.records);
    let files = [
        "records.csv",
        "records.json",
        "gains.csv",
        "correlations.csv",
        "frontier.csv",
        "summary.json",
    ];
    let create = |name: &str| {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .map(std::io::BufWriter::new)
            .map_err(|source| BenchError::Io {
                path: p.display().to_string(),
                source,
            })
    };
    let p = dir.join(files[0]);
    write_records_csv(create(files[0])?, &run.records).map_err(csv_err(&p))?;
    let p = dir.join(files[1]);
    let doc = RecordsJson {
        schema_version: SCHEMA_VERSION,
        records: run.records.clone(),
    };
    let mut f = create(files[1])?;
    serde_json::to_writer_pretty(&mut f, &doc).map_err(|e| io_err(&p)(std::io::Error::other(e)))?;
    f.write_all(b"\n")
        .and_then(|_| f.flush())
        .map_err(io_err(&p))?;
    let p = dir.join(files[2]);
    write_gains_csv(create(files[2])?, &gains).map_err(csv_err(&p))?;
    let p = dir.join(files[3]);
    write_correlations_csv(create(files[3])?, correlations.as_ref()).map_err(csv_err(&p))?;
    let p = dir.join(files[4]);
    write_frontier_csv(create(files[4])?, &frontier).map_err(csv_err(&p))?;

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        seed,
        expected_cells: run.expected_cells,
        records: run.records.len(),
        errored_cells: run.errors.len(),
        balanced: run.records.len() + run.errors.len() == run.expected_cells,
        frontier_points: frontier.len(),
        files: files.iter().map(|s| s.to_string()).collect(),
        notes,
        errors: run.errors.clone(),
    };
    let p = dir.join(files[5]);
    let mut f = create(files[5])?;
    serde_json::to_writer_pretty(&mut f, &summary)
        .map_err(|e| io_err(&p)(std::io::Error::other(e)))?;
    f.write_all(b"\n")
        .and_then(|_| f.flush())
        .map_err(io_err(&p))?;
    Ok(Report {
        gains,
        correlations,
        frontier,
        summary,
    })
}

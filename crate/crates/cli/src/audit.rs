use std::fs::File;
use std::path::Path;

use fairscore::fairmetrics::{acceptance_rate, auc, independence, separation, sufficiency};
use fairscore::profit::{expected_profit, expected_profit_fixed};
use fairscore::{CostModel, ScoreSet};
use serde::{Deserialize, Serialize};

use crate::commands::{load_config, emit, emit_json, EXIT_FATAL, EXIT_OK};
use crate::Cli;

const HEADER: [&str; 3] = ["score", "label", "sensitive"];

/// Metrics of one score file; `None` where a metric is undefined on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: usize,
    pub cutoff: f64,
    pub auc: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub ind: Option<f64>,
    pub sp: Option<f64>,
    pub sf: Option<f64>,
    /// Expected profit per applicant at the cutoff.
    pub profit: Option<f64>,
    /// Expected maximum profit.
    pub emp: Option<f64>,
}

fn parse_flag(line: u64, field: &str, name: &str) -> Result<u8, String> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(format!("line {line}: {name} must be 0 or 1")),
    }
}

/// Reads a `score,label,sensitive` CSV. Errors name the file line, counting
/// the header as line 1.
pub fn read_scores(path: &Path) -> Result<ScoreSet, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header = rd.headers().map_err(|e| format!("line 1: {e}"))?;
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(format!("line 1: header must be `{}`", HEADER.join(",")));
    }
    let (mut scores, mut labels, mut sensitive) = (Vec::new(), Vec::new(), Vec::new());
    for row in rd.records() {
        let row = row.map_err(|e| e.to_string())?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(format!("line {line}: expected 3 fields, found {}", row.len()));
        }
        let score: f64 = row[0]
            .trim()
            .parse()
            .map_err(|_| format!("line {line}: score `{}` is not a number", &row[0]))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(format!("line {line}: score out of [0,1]"));
        }
        scores.push(score);
        labels.push(parse_flag(line, &row[1], "label")?);
        sensitive.push(parse_flag(line, &row[2], "sensitive")?);
    }
    if scores.is_empty() {
        return Err(format!("{}: no rows", path.display()));
    }
    ScoreSet::new(scores, labels, sensitive).map_err(|e| e.to_string())
}

pub fn audit_scores(s: &ScoreSet, cutoff: f64, cm: &CostModel) -> AuditReport {
    AuditReport {
        rows: s.len(),
        cutoff,
        auc: auc(s).ok(),
        acceptance_rate: acceptance_rate(s, cutoff).ok().map(|r| r.overall),
        ind: independence(s, cutoff).ok(),
        sp: separation(s, cutoff).ok(),
        sf: sufficiency(s, cutoff).ok(),
        profit: expected_profit_fixed(s, cutoff, cm).ok(),
        emp: expected_profit(s, cm).ok().map(|p| p.value),
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn audit(cli: &Cli, scores: &Path, cutoff: &str) -> u8 {
    let cm = match load_config(cli) {
        Ok(c) => c.cost,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    let cutoff = if cutoff == "auto" {
        cm.operating_cutoff()
    } else {
        match cutoff.parse::<f64>() {
            Ok(c) if (0.0..=1.0).contains(&c) => c,
            _ => {
                eprintln!("error: --cutoff must be `auto` or a number in [0,1]");
                return EXIT_FATAL;
            }
        }
    };
    let s = match read_scores(scores) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    let r = audit_scores(&s, cutoff, &cm);
    if cli.json {
        emit_json(&r);
    } else {
        emit(&format!(
            "rows             {}\ncutoff           {:.6}\nauc              {}\nacceptance_rate  {}\nind              {}\nsp               {}\nsf               {}\nprofit           {}\nemp              {}\n",
            r.rows,
            r.cutoff,
            fmt(r.auc),
            fmt(r.acceptance_rate),
            fmt(r.ind),
            fmt(r.sp),
            fmt(r.sf),
            fmt(r.profit),
            fmt(r.emp)
        ));
    }
    EXIT_OK
}

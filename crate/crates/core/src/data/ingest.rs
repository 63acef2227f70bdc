use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    derive_sensitive_with, ColumnEncoding, DataError, Dataset, EncodingReport, SensitiveRule,
    Transform, DEFAULT_AGE_THRESHOLD,
};

const MISSING_LEVEL: &str = "<missing>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub kind: ColumnKind,
}

/// Treatment of columns the config does not mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnlistedColumns {
    /// Numeric if every present value parses as a number, else categorical.
    #[default]
    Infer,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveSpec {
    pub column: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub rule: SensitiveRule,
    #[serde(default)]
    pub keep_as_feature: bool,
}

fn default_threshold() -> f64 {
    DEFAULT_AGE_THRESHOLD
}

/// Ingestion schema, usually read from a TOML file.
///
/// ```toml
/// target = "creditability"
/// target_map = { good = 1, bad = 0 }
///
/// [sensitive]
/// column = "age_in_years"
/// threshold = 25
///
/// [columns.purpose]
/// kind = "categorical"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub target: String,
    /// Raw target value to label. Empty means the column already holds 0/1.
    #[serde(default)]
    pub target_map: BTreeMap<String, u8>,
    pub sensitive: SensitiveSpec,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnSpec>,
    #[serde(default)]
    pub unlisted: UnlistedColumns,
}

impl IngestConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Parse {
            path: "<ingest config>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| DataError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn is_missing(raw: &str) -> bool {
    matches!(raw.trim(), "" | "NA" | "N/A" | "?" | "nan" | "NaN" | "null")
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Reads a headered, comma-separated UTF-8 file and encodes it per `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &IngestConfig) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(&shown, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(&shown, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&shown, e))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }

    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let target_col = position(&schema.target)?;
    let sensitive_col = position(&schema.sensitive.column)?;
    for name in schema.columns.keys() {
        position(name)?;
    }

    let mut report = EncodingReport::default();

    // Labels; rows without a target are dropped.
    let mut labels = Vec::with_capacity(rows.len());
    let mut kept = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let raw = row[target_col].trim();
        if is_missing(raw) {
            continue;
        }
        let label = if schema.target_map.is_empty() {
            parse_number(raw)
                .filter(|v| *v == 0.0 || *v == 1.0)
                .map(|v| v as u8)
        } else {
            schema.target_map.get(raw).copied().filter(|v| *v <= 1)
        };
        let label = label.ok_or_else(|| DataError::TargetOutOfRange {
            row: i + 1,
            value: raw.to_string(),
        })?;
        labels.push(label);
        kept.push(i);
    }
    if kept.is_empty() {
        return Err(DataError::EmptyFile);
    }
    report.columns.push(ColumnEncoding {
        source: schema.target.clone(),
        transform: Transform::Target {
            mapping: schema
                .target_map
                .iter()
                .map(|(k, &v)| (k.clone(), v))
                .collect(),
            dropped_rows: rows.len() - kept.len(),
        },
    });

    let raw_sensitive: Vec<f64> = kept
        .iter()
        .map(|&i| parse_number(&rows[i][sensitive_col]).unwrap_or(f64::NAN))
        .collect();
    let sensitive = match derive_sensitive_with(
        &raw_sensitive,
        schema.sensitive.threshold,
        schema.sensitive.rule,
    ) {
        Ok(s) => s,
        Err(DataError::InvalidAge { index, .. })
            if schema.sensitive.rule == SensitiveRule::Binary =>
        {
            return Err(DataError::SensitiveOutOfRange {
                row: kept[index] + 1,
                value: rows[kept[index]][sensitive_col].clone(),
            })
        }
        Err(e) => return Err(e),
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == target_col {
            continue;
        }
        if c == sensitive_col {
            report.columns.push(ColumnEncoding {
                source: name.clone(),
                transform: Transform::Sensitive {
                    rule: schema.sensitive.rule.as_str().into(),
                    threshold: schema.sensitive.threshold,
                    kept_as_feature: schema.sensitive.keep_as_feature,
                },
            });
            if !schema.sensitive.keep_as_feature {
                continue;
            }
        }
        let values: Vec<&str> = kept.iter().map(|&i| rows[i][c].as_str()).collect();
        let kind = match schema.columns.get(name) {
            Some(spec) => spec.kind,
            None if c == sensitive_col => ColumnKind::Numeric,
            None => match schema.unlisted {
                UnlistedColumns::Drop => ColumnKind::Drop,
                UnlistedColumns::Infer => infer_kind(&values),
            },
        };
        let transform = match kind {
            ColumnKind::Drop => Transform::Dropped,
            ColumnKind::Numeric => encode_numeric(name, &values, &mut columns, &mut names, &shown)?,
            ColumnKind::Categorical => encode_categorical(name, &values, &mut columns, &mut names),
        };
        report.columns.push(ColumnEncoding {
            source: name.clone(),
            transform,
        });
    }

    let n = kept.len();
    let k = columns.len();
    let features = Array2::from_shape_fn((n, k), |(i, j)| columns[j][i]);
    Dataset::from_parts(features, labels, sensitive, vec![1.0; n], names, report)
}

fn csv_error(path: &str, e: csv::Error) -> DataError {
    DataError::Parse {
        path: path.to_string(),
        message: e.to_string(),
    }
}

fn infer_kind(values: &[&str]) -> ColumnKind {
    let mut present = values.iter().filter(|v| !is_missing(v)).peekable();
    if present.peek().is_none() {
        return ColumnKind::Drop;
    }
    if present.all(|v| parse_number(v).is_some()) {
        ColumnKind::Numeric
    } else {
        ColumnKind::Categorical
    }
}

fn encode_numeric(
    name: &str,
    values: &[&str],
    columns: &mut Vec<Vec<f64>>,
    names: &mut Vec<String>,
    path: &str,
) -> Result<Transform, DataError> {
    let mut parsed = Vec::with_capacity(values.len());
    for (i, raw) in values.iter().enumerate() {
        if is_missing(raw) {
            parsed.push(None);
        } else {
            let v = parse_number(raw).ok_or_else(|| DataError::Parse {
                path: path.to_string(),
                message: format!(
                    "column `{name}`, data row {}: `{raw}` is not a number",
                    i + 1
                ),
            })?;
            parsed.push(Some(v));
        }
    }
    let mut present: Vec<f64> = parsed.iter().flatten().copied().collect();
    let missing = parsed.len() - present.len();
    if present.is_empty() {
        return Err(DataError::Parse {
            path: path.to_string(),
            message: format!("column `{name}` has no values"),
        });
    }
    let column = columns.len();
    if missing == 0 {
        columns.push(present);
        names.push(name.to_string());
        return Ok(Transform::Numeric { column });
    }
    let med = median(&mut present);
    columns.push(parsed.iter().map(|v| v.unwrap_or(med)).collect());
    names.push(name.to_string());
    columns.push(
        parsed
            .iter()
            .map(|v| if v.is_none() { 1.0 } else { 0.0 })
            .collect(),
    );
    names.push(format!("{name}_missing"));
    Ok(Transform::Imputed {
        column,
        indicator: column + 1,
        median: med,
        missing,
    })
}

fn encode_categorical(
    name: &str,
    values: &[&str],
    columns: &mut Vec<Vec<f64>>,
    names: &mut Vec<String>,
) -> Transform {
    let level_of = |raw: &str| {
        if is_missing(raw) {
            MISSING_LEVEL.to_string()
        } else {
            raw.trim().to_string()
        }
    };
    let levels: BTreeSet<String> = values.iter().map(|v| level_of(v)).collect();
    let mut levels = levels.into_iter();
    let dropped = levels.next().unwrap_or_default();
    let kept: Vec<String> = levels.collect();
    let mut out = Vec::with_capacity(kept.len());
    for level in &kept {
        out.push(columns.len());
        columns.push(
            values
                .iter()
                .map(|v| f64::from(u8::from(&level_of(v) == level)))
                .collect(),
        );
        names.push(format!("{name}={level}"));
    }
    Transform::OneHot {
        columns: out,
        levels: kept,
        dropped,
    }
}

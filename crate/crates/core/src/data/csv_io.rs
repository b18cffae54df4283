//! Raw measurement ingestion: pick the configured columns out of a wide CSV.

use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::data::frame::parse_timestamp;
use crate::error::{Error, Result};

/// Column-name mapping for one raw file: which header is the timestamp and
/// which headers are the model features, in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_col: String,
    pub feature_cols: Vec<String>,
}

/// Parsed raw records, sorted by timestamp. `values` is row-major
/// `[n_records × feature_cols.len()]`; unparseable numeric cells are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecords {
    pub timestamps: Vec<NaiveDateTime>,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
}

impl RawRecords {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[k * w..(k + 1) * w]
    }
}

fn parse_cell(cell: &str) -> f64 {
    let cell = cell.trim();
    if cell.is_empty() {
        return f64::NAN;
    }
    cell.parse::<f64>().unwrap_or(f64::NAN)
}

/// Reads the timestamp column plus the mapped feature columns from `path`,
/// ignoring everything else. Records are returned sorted by timestamp
/// (ties keep file order); rows whose timestamp does not parse are dropped.
pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<RawRecords> {
    if schema.feature_cols.is_empty() {
        return Err(Error::Schema("schema maps no feature columns".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| {
                Error::Schema(format!(
                    "{}: missing column '{}' (header has: {})",
                    path.display(),
                    name,
                    headers.iter().collect::<Vec<_>>().join(", ")
                ))
            })
    };
    let ts_idx = find(&schema.timestamp_col)?;
    let feat_idx: Vec<usize> = schema
        .feature_cols
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let width = feat_idx.len();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let Some(ts) = record.get(ts_idx).and_then(parse_timestamp) else {
            continue;
        };
        timestamps.push(ts);
        for &idx in &feat_idx {
            values.push(parse_cell(record.get(idx).unwrap_or("")));
        }
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: no rows with a parseable timestamp",
            path.display()
        )));
    }

    // Stable sort by timestamp so later minute binning sees time order.
    let mut order: Vec<usize> = (0..timestamps.len()).collect();
    order.sort_by_key(|&k| timestamps[k]);
    let sorted_ts: Vec<NaiveDateTime> = order.iter().map(|&k| timestamps[k]).collect();
    let mut sorted_vals = Vec::with_capacity(values.len());
    for &k in &order {
        sorted_vals.extend_from_slice(&values[k * width..(k + 1) * width]);
    }

    Ok(RawRecords {
        timestamps: sorted_ts,
        columns: schema.feature_cols.clone(),
        values: sorted_vals,
    })
}

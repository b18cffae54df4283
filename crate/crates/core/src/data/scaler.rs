//! Per-column min-max scaling with JSON persistence.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::frame::Frame;
use crate::error::{Error, Result};

/// Per-column min/max fitted on a row range. Columns with `max == min` are
/// constant: they scale to `0.0` and invert to `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<String>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalerParams {
    pub fn is_constant(&self, col: usize) -> bool {
        self.maxs[col] == self.mins[col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: ScalerParams = serde_json::from_str(&text)?;
        if s.mins.len() != s.columns.len() || s.maxs.len() != s.columns.len() {
            return Err(Error::Schema(format!(
                "{}: scaler arrays disagree with column list",
                path.display()
            )));
        }
        Ok(s)
    }
}

/// Computes per-column min/max over `fit_range` only, so rows outside the
/// range (the test period) cannot influence scaling.
pub fn fit_scaler(frame: &Frame, fit_range: Range<usize>) -> Result<ScalerParams> {
    if fit_range.is_empty() {
        return Err(Error::InvalidRange(format!(
            "empty fit range {}..{}",
            fit_range.start, fit_range.end
        )));
    }
    if fit_range.end > frame.n_rows() {
        return Err(Error::InvalidRange(format!(
            "fit range {}..{} exceeds {} rows",
            fit_range.start,
            fit_range.end,
            frame.n_rows()
        )));
    }
    let mut mins = vec![f64::INFINITY; frame.n_cols()];
    let mut maxs = vec![f64::NEG_INFINITY; frame.n_cols()];
    for r in fit_range {
        for c in 0..frame.n_cols() {
            let v = frame.value(r, c);
            if v.is_nan() {
                return Err(Error::NonFinite(format!(
                    "missing value at row {}, column '{}' while fitting scaler",
                    r,
                    frame.columns()[c]
                )));
            }
            mins[c] = mins[c].min(v);
            maxs[c] = maxs[c].max(v);
        }
    }
    Ok(ScalerParams {
        columns: frame.columns().to_vec(),
        mins,
        maxs,
    })
}

/// `x -> (x - min) / (max - min)` per column; constant columns map to 0.
/// Values outside the fit range map outside `[0, 1]`, which is allowed.
pub fn apply_scaler(frame: &Frame, scaler: &ScalerParams) -> Result<Frame> {
    if frame.columns() != scaler.columns.as_slice() {
        return Err(Error::Schema(format!(
            "scaler columns {:?} do not match frame columns {:?}",
            scaler.columns,
            frame.columns()
        )));
    }
    let mut out = frame.clone();
    for c in 0..frame.n_cols() {
        let (min, max) = (scaler.mins[c], scaler.maxs[c]);
        let span = max - min;
        for r in 0..frame.n_rows() {
            let v = frame.value(r, c);
            let scaled = if span == 0.0 { 0.0 } else { (v - min) / span };
            out.set_value(r, c, scaled);
        }
    }
    Ok(out)
}

/// `y -> y * (max - min) + min` for one named column. Constant columns give
/// back `min` regardless of input.
pub fn invert_scaler(values: &[f64], scaler: &ScalerParams, column: &str) -> Result<Vec<f64>> {
    let c = scaler
        .column_index(column)
        .ok_or_else(|| Error::Schema(format!("scaler has no column '{}'", column)))?;
    let (min, max) = (scaler.mins[c], scaler.maxs[c]);
    let span = max - min;
    Ok(values
        .iter()
        .map(|&y| if span == 0.0 { min } else { y * span + min })
        .collect())
}

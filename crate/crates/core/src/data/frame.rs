//! Uniform 1-minute time-series frame. Missing cells are `NaN`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};

/// Timestamp layouts accepted when ingesting text data, tried in order.
pub const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%Y/%m/%d %H:%M:%S%.f",
    "%Y/%m/%d %H:%M",
];

/// Parses a timestamp cell against [`TIMESTAMP_FORMATS`].
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

fn minute_to_datetime(minute: i64) -> NaiveDateTime {
    DateTime::from_timestamp(minute * 60, 0)
        .expect("minute index within datetime range")
        .naive_utc()
}

/// Equal-length named columns on an exact 1-minute grid: row `k` holds the
/// values at `start + k` minutes. `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub building_id: String,
    start_minute: i64,
    columns: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
}

impl Frame {
    pub fn new(
        building_id: impl Into<String>,
        start: NaiveDateTime,
        columns: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("frame needs at least one column".into()));
        }
        if values.len() % columns.len() != 0 {
            return Err(Error::Shape(format!(
                "value count {} is not a multiple of column count {}",
                values.len(),
                columns.len()
            )));
        }
        let n_rows = values.len() / columns.len();
        Ok(Frame {
            building_id: building_id.into(),
            start_minute: start.and_utc().timestamp().div_euclid(60),
            columns,
            values,
            n_rows,
        })
    }

    pub(crate) fn from_start_minute(
        building_id: impl Into<String>,
        start_minute: i64,
        columns: Vec<String>,
        values: Vec<f64>,
        n_rows: usize,
    ) -> Self {
        debug_assert_eq!(values.len(), n_rows * columns.len());
        Frame {
            building_id: building_id.into(),
            start_minute,
            columns,
            values,
            n_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn start(&self) -> NaiveDateTime {
        minute_to_datetime(self.start_minute)
    }

    /// Timestamp of row `k`.
    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        minute_to_datetime(self.start_minute + k as i64)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns.len() + col]
    }

    pub fn set_value(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.columns.len() + col] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[k * w..(k + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One full column, copied.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.value(r, col)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Writes `timestamp` plus all columns as CSV. Floats use the shortest
    /// representation that parses back to the identical bits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        write!(out, "timestamp")?;
        for c in &self.columns {
            write!(out, ",{}", c)?;
        }
        writeln!(out)?;
        for r in 0..self.n_rows {
            write!(out, "{}", self.timestamp(r).format("%Y-%m-%d %H:%M:%S"))?;
            for c in 0..self.columns.len() {
                write!(out, ",{}", self.value(r, c))?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a frame previously produced by [`Frame::write_csv`]. Rows must
    /// sit on consecutive minutes.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput(format!("{}: no header row", path.display())))??;
        let mut fields = header.split(',');
        if fields.next() != Some("timestamp") {
            return Err(Error::Schema(format!(
                "{}: first column must be 'timestamp'",
                path.display()
            )));
        }
        let columns: Vec<String> = fields.map(str::to_string).collect();
        if columns.is_empty() {
            return Err(Error::Schema(format!(
                "{}: no value columns",
                path.display()
            )));
        }

        let mut values = Vec::new();
        let mut start_minute = None;
        let mut n_rows = 0usize;
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let ts_cell = cells.next().unwrap_or("");
            let ts = parse_timestamp(ts_cell).ok_or_else(|| {
                Error::Schema(format!("{}: bad timestamp '{}'", path.display(), ts_cell))
            })?;
            let minute = ts.and_utc().timestamp().div_euclid(60);
            match start_minute {
                None => start_minute = Some(minute),
                Some(s) if minute != s + n_rows as i64 => {
                    return Err(Error::Schema(format!(
                        "{}: row {} is not on the minute grid",
                        path.display(),
                        n_rows
                    )));
                }
                Some(_) => {}
            }
            let mut got = 0usize;
            for cell in cells {
                let v = if cell.is_empty() || cell == "NaN" {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Schema(format!("{}: bad numeric cell '{}'", path.display(), cell))
                    })?
                };
                values.push(v);
                got += 1;
            }
            if got != columns.len() {
                return Err(Error::Schema(format!(
                    "{}: row {} has {} cells, expected {}",
                    path.display(),
                    n_rows,
                    got,
                    columns.len()
                )));
            }
            n_rows += 1;
        }
        let start_minute =
            start_minute.ok_or_else(|| Error::EmptyInput(format!("{}: no data rows", path.display())))?;
        Ok(Frame::from_start_minute(
            "", start_minute, columns, values, n_rows,
        ))
    }
}

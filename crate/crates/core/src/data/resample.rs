//! Minute binning and gap filling.

use std::cmp::Ordering;

use crate::data::csv_io::RawRecords;
use crate::data::frame::Frame;
use crate::error::{Error, Result};

/// Bins records onto an exact 1-minute grid from the first to the last
/// record's minute. Each populated cell is the arithmetic mean of every
/// record in that minute; minutes without records are `NaN`.
///
/// The result is bit-identical under any permutation of the input records:
/// accumulation runs in a canonical total order (timestamp, then value bits),
/// not arrival order.
pub fn resample_1min(records: &RawRecords) -> Result<Frame> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to resample".into()));
    }
    let width = records.columns.len();
    let minutes: Vec<i64> = records
        .timestamps
        .iter()
        .map(|ts| ts.and_utc().timestamp().div_euclid(60))
        .collect();

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        minutes[a].cmp(&minutes[b]).then_with(|| {
            for c in 0..width {
                match records.row(a)[c].total_cmp(&records.row(b)[c]) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            Ordering::Equal
        })
    });

    let start_minute = minutes[order[0]];
    let end_minute = minutes[*order.last().unwrap()];
    let n_rows = (end_minute - start_minute) as usize + 1;

    let mut sums = vec![0.0_f64; n_rows * width];
    let mut counts = vec![0_u32; n_rows * width];
    for &k in &order {
        let row = (minutes[k] - start_minute) as usize;
        for (c, &v) in records.row(k).iter().enumerate() {
            if v.is_nan() {
                continue;
            }
            sums[row * width + c] += v;
            counts[row * width + c] += 1;
        }
    }

    let values: Vec<f64> = sums
        .iter()
        .zip(counts.iter())
        .map(|(&s, &n)| if n == 0 { f64::NAN } else { s / n as f64 })
        .collect();

    Ok(Frame::from_start_minute(
        "",
        start_minute,
        records.columns.clone(),
        values,
        n_rows,
    ))
}

/// One run of consecutive missing rows in one column.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRun {
    pub column: String,
    pub start_row: usize,
    pub len: usize,
}

/// What [`fill_gaps`] repaired.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapReport {
    pub runs: Vec<GapRun>,
    pub filled_cells: usize,
}

/// Fills every missing cell: interior gaps by linear interpolation between
/// the surrounding valid values, leading and trailing gaps with the nearest
/// valid value. Errors if a column has no valid value at all.
pub fn fill_gaps(frame: &Frame) -> Result<(Frame, GapReport)> {
    let mut out = frame.clone();
    let mut report = GapReport::default();
    let n = frame.n_rows();

    for col in 0..frame.n_cols() {
        let name = &frame.columns()[col];
        let valid: Vec<usize> = (0..n).filter(|&r| !frame.value(r, col).is_nan()).collect();
        if valid.is_empty() {
            return Err(Error::UnfillableColumn(name.clone()));
        }

        let mut run_start: Option<usize> = None;
        for r in 0..=n {
            let missing = r < n && frame.value(r, col).is_nan();
            match (missing, run_start) {
                (true, None) => run_start = Some(r),
                (false, Some(s)) => {
                    report.runs.push(GapRun {
                        column: name.clone(),
                        start_row: s,
                        len: r - s,
                    });
                    report.filled_cells += r - s;
                    run_start = None;
                }
                _ => {}
            }
        }

        let (first, last) = (valid[0], *valid.last().unwrap());
        for r in 0..first {
            out.set_value(r, col, frame.value(first, col));
        }
        for r in last + 1..n {
            out.set_value(r, col, frame.value(last, col));
        }
        for pair in valid.windows(2) {
            let (i0, i1) = (pair[0], pair[1]);
            if i1 == i0 + 1 {
                continue;
            }
            let v0 = frame.value(i0, col);
            let v1 = frame.value(i1, col);
            for r in i0 + 1..i1 {
                let t = (r - i0) as f64 / (i1 - i0) as f64;
                out.set_value(r, col, v0 + (v1 - v0) * t);
            }
        }
    }
    Ok((out, report))
}

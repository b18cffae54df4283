//! Weighted-average ensemble over per-building models and the MSE/MAE/MAPE
//! evaluation reports.

use serde::{Deserialize, Serialize};

use crate::data::scaler::{invert_scaler, ScalerParams};
use crate::data::window::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;
use crate::training::predict_dataset;

/// Actuals smaller than this in magnitude are excluded from MAPE.
pub const MAPE_ACTUAL_FLOOR: f64 = 1e-12;

/// Named, weighted ensemble members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<(String, f64)>,
}

impl EnsembleSpec {
    /// The standard three-building weighting.
    pub fn default_weights() -> Self {
        EnsembleSpec {
            members: vec![
                ("A".to_string(), 0.3),
                ("B".to_string(), 0.4),
                ("C".to_string(), 0.3),
            ],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|(_, w)| *w).collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(&self.weights())
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::EnsembleSpec("ensemble needs at least one member".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::EnsembleSpec(format!(
            "weights must be finite and nonnegative, got {}",
            w
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::EnsembleSpec(format!(
            "weights must sum to 1 within 1e-9, got {}",
            sum
        )));
    }
    Ok(())
}

/// `out[t] = sum_k w_k * preds[k][t]`, accumulated in member order.
///
/// Zero-weight members are skipped entirely, so a one-hot weighting
/// reproduces that member's predictions bit-for-bit.
pub fn combine_weighted(preds: &[&Tensor], weights: &[f64]) -> Result<Tensor> {
    if preds.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} prediction sets vs {} weights",
            preds.len(),
            weights.len()
        )));
    }
    validate_weights(weights)?;
    let shape = preds[0].shape().to_vec();
    if let Some(p) = preds.iter().find(|p| p.shape() != shape) {
        return Err(Error::LengthMismatch(format!(
            "prediction shapes differ: {:?} vs {:?}",
            shape,
            p.shape()
        )));
    }

    let mut acc: Option<Tensor> = None;
    for (p, &w) in preds.iter().zip(weights.iter()) {
        if w == 0.0 {
            continue;
        }
        let term = p.map(|v| w * v);
        acc = Some(match acc {
            None => term,
            Some(a) => a.zip_map(&term, |x, y| x + y),
        });
    }
    // At least one weight is nonzero because they sum to 1.
    Ok(acc.expect("nonzero weight exists"))
}

/// One model plus the windows it scores. All members of a call must carry
/// datasets aligned to identical target rows.
pub struct EnsembleMember<'a> {
    pub id: String,
    pub params: &'a ModelParams,
    pub weight: f64,
    pub dataset: &'a WindowedDataset,
}

/// Per-member and combined predictions over one aligned target range.
#[derive(Debug, Clone)]
pub struct EnsemblePrediction {
    /// Source-frame row of each scored target.
    pub target_rows: Vec<usize>,
    /// `[n]`, shared by all members (verified bit-equal).
    pub actuals: Tensor,
    /// `[n]` per member, in input order.
    pub member_preds: Vec<Tensor>,
    /// `[n]` weighted combination.
    pub combined: Tensor,
}

/// Trims windowed datasets built from one frame with different window
/// lengths so they all target the same rows: every dataset loses its leading
/// windows up to the latest first-target among them.
pub fn align_to_common_targets(datasets: &[WindowedDataset]) -> Result<Vec<WindowedDataset>> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput("no datasets to align".into()));
    }
    let mut first_rows = Vec::with_capacity(datasets.len());
    for (k, d) in datasets.iter().enumerate() {
        match d.source_rows.first() {
            Some(&r) => first_rows.push(r),
            None => {
                return Err(Error::EmptyDataset(format!(
                    "dataset {} has no windows to align",
                    k
                )))
            }
        }
    }
    let start = *first_rows.iter().max().unwrap();
    let mut aligned = Vec::with_capacity(datasets.len());
    for (d, &f) in datasets.iter().zip(first_rows.iter()) {
        let drop = start - f;
        if drop > d.count() {
            return Err(Error::Alignment(format!(
                "dataset starting at row {} is too short to reach common start {}",
                f, start
            )));
        }
        aligned.push(d.slice(drop..d.count())?);
    }
    let n = aligned[0].count();
    for (k, d) in aligned.iter().enumerate() {
        if d.count() != n {
            return Err(Error::Alignment(format!(
                "dataset {} covers {} targets, dataset 0 covers {}",
                k,
                d.count(),
                n
            )));
        }
    }
    Ok(aligned)
}

fn check_alignment(members: &[EnsembleMember]) -> Result<usize> {
    let n = members[0].dataset.count();
    if n == 0 {
        return Err(Error::EmptyDataset("ensemble members have no windows".into()));
    }
    for m in &members[1..] {
        if m.dataset.count() != n {
            return Err(Error::Alignment(format!(
                "member '{}' scores {} targets, member '{}' scores {}",
                m.id,
                m.dataset.count(),
                members[0].id,
                n
            )));
        }
        if let Some(k) = (0..n).find(|&k| m.dataset.source_rows[k] != members[0].dataset.source_rows[k])
        {
            return Err(Error::Alignment(format!(
                "target rows diverge at window {}: member '{}' row {}, member '{}' row {}",
                k,
                members[0].id,
                members[0].dataset.source_rows[k],
                m.id,
                m.dataset.source_rows[k]
            )));
        }
        if let Some(k) = (0..n).find(|&k| {
            m.dataset.targets.data()[k].to_bits() != members[0].dataset.targets.data()[k].to_bits()
        }) {
            return Err(Error::Alignment(format!(
                "target values diverge at window {} between members '{}' and '{}'",
                k, members[0].id, m.id
            )));
        }
    }
    Ok(n)
}

/// Runs every member in eval mode over its own windows and combines the
/// predictions with the member weights.
pub fn predict_ensemble(members: &[EnsembleMember]) -> Result<EnsemblePrediction> {
    if members.is_empty() {
        return Err(Error::EnsembleSpec("ensemble needs at least one member".into()));
    }
    let weights: Vec<f64> = members.iter().map(|m| m.weight).collect();
    validate_weights(&weights)?;
    check_alignment(members)?;

    let mut member_preds = Vec::with_capacity(members.len());
    for m in members {
        member_preds.push(predict_dataset(m.params, m.dataset)?);
    }
    let combined = combine_weighted(&member_preds.iter().collect::<Vec<_>>(), &weights)?;

    Ok(EnsemblePrediction {
        target_rows: members[0].dataset.source_rows.clone(),
        actuals: members[0].dataset.targets.clone(),
        member_preds,
        combined,
    })
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<usize> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions vs {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("metrics over zero samples".into()));
    }
    Ok(pred.len())
}

/// `(1/N) sum (pred_i - actual_i)^2`.
pub fn metric_mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    let n = check_lengths(pred, actual)?;
    let mut sum = 0.0;
    for (p, a) in pred.iter().zip(actual.iter()) {
        let d = p - a;
        sum += d * d;
    }
    Ok(sum / n as f64)
}

/// `(1/N) sum |pred_i - actual_i|`.
pub fn metric_mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    let n = check_lengths(pred, actual)?;
    let mut sum = 0.0;
    for (p, a) in pred.iter().zip(actual.iter()) {
        sum += (p - a).abs();
    }
    Ok(sum / n as f64)
}

/// Mean absolute percentage error, as a fraction (no x100).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    pub value: f64,
    /// Samples dropped because `|actual| < MAPE_ACTUAL_FLOOR`.
    pub excluded: usize,
}

/// `(1/N') sum |(actual_i - pred_i) / actual_i|` over the samples whose
/// actual is at least [`MAPE_ACTUAL_FLOOR`] in magnitude.
pub fn metric_mape(pred: &[f64], actual: &[f64]) -> Result<Mape> {
    check_lengths(pred, actual)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, a) in pred.iter().zip(actual.iter()) {
        if a.abs() < MAPE_ACTUAL_FLOOR {
            continue;
        }
        sum += ((a - p) / a).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(
            "all actuals are below the MAPE magnitude floor".into(),
        ));
    }
    Ok(Mape {
        value: sum / used as f64,
        excluded: pred.len() - used,
    })
}

/// Which value space a report's metrics live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpace {
    Normalized,
    Hertz,
}

impl std::fmt::Display for MetricSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricSpace::Normalized => "normalized",
            MetricSpace::Hertz => "hertz",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub space: MetricSpace,
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
    pub mape_excluded: usize,
}

/// Normalized-space report, plus a hertz-space one when a scaler and target
/// column are supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub normalized: MetricsReport,
    pub hertz: Option<MetricsReport>,
}

fn report_for(pred: &[f64], actual: &[f64], space: MetricSpace) -> Result<MetricsReport> {
    let mse = metric_mse(pred, actual)?;
    let mae = metric_mae(pred, actual)?;
    let mape = metric_mape(pred, actual)?;
    // Jensen: mean(|d|)^2 <= mean(d^2); allow rounding slack.
    debug_assert!(mae * mae <= mse * (1.0 + 1e-9) + 1e-300);
    Ok(MetricsReport {
        space,
        n: pred.len(),
        mse,
        mae,
        mape: mape.value,
        mape_excluded: mape.excluded,
    })
}

pub fn evaluate_report(
    pred: &[f64],
    actual: &[f64],
    hertz: Option<(&ScalerParams, &str)>,
) -> Result<EvaluationReport> {
    let normalized = report_for(pred, actual, MetricSpace::Normalized)?;
    let hertz = match hertz {
        None => None,
        Some((scaler, column)) => {
            let pred_hz = invert_scaler(pred, scaler, column)?;
            let actual_hz = invert_scaler(actual, scaler, column)?;
            Some(report_for(&pred_hz, &actual_hz, MetricSpace::Hertz)?)
        }
    };
    Ok(EvaluationReport { normalized, hertz })
}

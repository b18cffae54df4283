//! Implementations behind the CLI subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gridfreq_core::data::{
    apply_scaler, chronological_split, fill_gaps, fit_scaler, invert_scaler, make_windows,
    parse_csv, resample_1min, CsvSchema, Frame, GapReport, ScalerParams, WindowedDataset,
};
use gridfreq_core::ensemble::{
    align_to_common_targets, evaluate_report, predict_ensemble, EnsembleMember, EvaluationReport,
};
use gridfreq_core::model::{build_model, load_params, save_params, Building, ModelParams};
use gridfreq_core::training::{predict_dataset, train};

use crate::artifacts::{atomic_write_with, file_fingerprint, fnv1a64, write_text_atomic, Paths};
use crate::config::{ResolvedBuilding, RunConfig};

/// Which rows a scoring command works on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitSel {
    Train,
    Test,
    File(PathBuf),
}

impl SplitSel {
    pub fn scope_tag(&self) -> &'static str {
        match self {
            SplitSel::Train => "train",
            SplitSel::Test => "test",
            SplitSel::File(_) => "file",
        }
    }
}

impl FromStr for SplitSel {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSel::Train),
            "test" => Ok(SplitSel::Test),
            _ => match s.strip_prefix("file=") {
                Some(path) if !path.is_empty() => Ok(SplitSel::File(PathBuf::from(path))),
                _ => bail!("split must be train, test, or file=PATH, got '{}'", s),
            },
        }
    }
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn overrides_block(rb: &ResolvedBuilding) -> String {
    if rb.overrides.is_empty() {
        "overrides: (none)\n".to_string()
    } else {
        let mut s = String::new();
        for o in &rb.overrides {
            let _ = writeln!(s, "override: {}", o);
        }
        s
    }
}

fn gap_block(gaps: &GapReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "gap_runs: {}", gaps.runs.len());
    let _ = writeln!(s, "gap_cells_filled: {}", gaps.filled_cells);
    for run in gaps.runs.iter().take(20) {
        let _ = writeln!(
            s,
            "gap: column {} rows {}..{}",
            run.column,
            run.start_row,
            run.start_row + run.len
        );
    }
    if gaps.runs.len() > 20 {
        let _ = writeln!(s, "gap: ({} more runs)", gaps.runs.len() - 20);
    }
    s
}

fn metrics_block(report: &EvaluationReport) -> String {
    let mut s = String::new();
    for m in std::iter::once(&report.normalized).chain(report.hertz.iter()) {
        let _ = writeln!(s, "[{}]", m.space);
        let _ = writeln!(s, "mse: {}", m.mse);
        let _ = writeln!(s, "mae: {}", m.mae);
        let _ = writeln!(s, "mape: {}", m.mape);
        let _ = writeln!(s, "mape_excluded: {}", m.mape_excluded);
        let _ = writeln!(s, "n: {}", m.n);
    }
    s
}

/// Raw CSV through resample, gap fill, and (train-rows-only) scaler fit to
/// a windowed dataset on disk.
pub fn ingest_building(paths: &Paths, rb: &ResolvedBuilding, train_fraction: f64) -> Result<String> {
    let id = rb.id;
    let schema = CsvSchema {
        timestamp_col: rb.timestamp_col.clone(),
        feature_cols: rb.feature_cols.clone(),
    };
    let records = parse_csv(&rb.csv_path, &schema)
        .with_context(|| format!("building {}: reading {}", id.id(), rb.csv_path.display()))?;
    let mut frame = resample_1min(&records)
        .with_context(|| format!("building {}: resampling", id.id()))?;
    frame.building_id = id.id().to_string();
    let (filled, gaps) =
        fill_gaps(&frame).with_context(|| format!("building {}: filling gaps", id.id()))?;

    let n_rows = filled.n_rows();
    let window = rb.model_config.window_length;
    if n_rows <= window {
        bail!(
            "building {}: {} resampled rows cannot fill one window of length {}",
            id.id(),
            n_rows,
            window
        );
    }
    let n_windows = n_rows - window;
    let n_train = (n_windows as f64 * train_fraction).floor() as usize;
    if n_train == 0 {
        bail!(
            "building {}: train fraction {} leaves no training windows out of {}",
            id.id(),
            train_fraction,
            n_windows
        );
    }
    // Rows seen by training windows and their targets; the scaler must not
    // see test rows.
    let fit_rows = window + n_train;
    let scaler = fit_scaler(&filled, 0..fit_rows)
        .with_context(|| format!("building {}: fitting scaler", id.id()))?;
    let scaled = apply_scaler(&filled, &scaler)?;
    let dataset = make_windows(&scaled, window, &rb.target_col)
        .with_context(|| format!("building {}: windowing", id.id()))?;

    atomic_write_with(&paths.frame(id), |p| Ok(filled.write_csv(p)?))?;
    atomic_write_with(&paths.dataset(id), |p| Ok(dataset.save(p)?))?;
    atomic_write_with(&paths.scaler(id), |p| Ok(scaler.save_json(p)?))?;

    let mut report = String::new();
    let _ = writeln!(report, "scope: ingest {}", id.id());
    let _ = writeln!(report, "generated_unix: {}", now_unix());
    let _ = writeln!(report, "source: {}", rb.csv_path.display());
    let _ = writeln!(report, "raw_records: {}", records.len());
    let _ = writeln!(report, "resampled_rows: {}", n_rows);
    let _ = writeln!(
        report,
        "span: {} .. {}",
        filled.timestamp(0).format("%Y-%m-%d %H:%M:%S"),
        filled.timestamp(n_rows - 1).format("%Y-%m-%d %H:%M:%S")
    );
    report.push_str(&gap_block(&gaps));
    let _ = writeln!(report, "scaler_fit_rows: 0..{}", fit_rows);
    for (k, c) in scaler.columns.iter().enumerate() {
        let _ = writeln!(report, "scaler: {} min {} max {}", c, scaler.mins[k], scaler.maxs[k]);
    }
    let _ = writeln!(report, "window_length: {}", window);
    let _ = writeln!(report, "target_col: {}", rb.target_col);
    let _ = writeln!(report, "windows: {}", dataset.count());
    let _ = writeln!(report, "train_windows: {}", n_train);
    let _ = writeln!(report, "test_windows: {}", n_windows - n_train);
    report.push_str(&overrides_block(rb));
    write_text_atomic(&paths.report(&format!("ingest_{}", id.id())), &report)?;

    Ok(format!(
        "{}: {} rows, {} windows ({} train / {} test)",
        id.id(),
        n_rows,
        dataset.count(),
        n_train,
        n_windows - n_train
    ))
}

/// Trains one building's model from its ingested dataset.
pub fn train_building(paths: &Paths, rb: &ResolvedBuilding, train_fraction: f64) -> Result<String> {
    let id = rb.id;
    let dataset_path = paths.dataset(id);
    let dataset = WindowedDataset::load(&dataset_path).with_context(|| {
        format!(
            "building {}: loading {} (run `gridfreq ingest` first)",
            id.id(),
            dataset_path.display()
        )
    })?;
    let (train_set, test_set) = chronological_split(&dataset, train_fraction)?;

    let model0 = build_model(&rb.model_config, rb.seed)
        .with_context(|| format!("building {}: initializing model", id.id()))?;
    let started = Instant::now();
    let (model, curve) = train(model0, &train_set, &test_set, &rb.train_config)
        .with_context(|| format!("building {}: training", id.id()))?;
    let elapsed = started.elapsed();

    atomic_write_with(&paths.model(id), |p| Ok(save_params(&model, p)?))?;
    atomic_write_with(&paths.curve(id), |p| Ok(curve.write_csv(p)?))?;

    let config_text = format!("{:?}\n{:?}", rb.model_config, rb.train_config);
    let mut report = String::new();
    let _ = writeln!(report, "scope: train {}", id.id());
    let _ = writeln!(report, "generated_unix: {}", now_unix());
    let _ = writeln!(report, "duration_secs: {:.3}", elapsed.as_secs_f64());
    let _ = writeln!(report, "seed: {}", rb.seed);
    let _ = writeln!(report, "config_hash: {:016x}", fnv1a64(config_text.as_bytes()));
    let _ = writeln!(
        report,
        "data_fingerprint: {:016x}",
        file_fingerprint(&dataset_path)?
    );
    let _ = writeln!(report, "train_windows: {}", train_set.count());
    let _ = writeln!(report, "test_windows: {}", test_set.count());
    let _ = writeln!(report, "model_config: {:?}", rb.model_config);
    let _ = writeln!(report, "train_config: {:?}", rb.train_config);
    report.push_str(&overrides_block(rb));
    if let Some(last) = curve.final_record() {
        let _ = writeln!(report, "final_epoch: {}", last.epoch);
        let _ = writeln!(report, "final_train_mse: {}", last.train_mse);
        let _ = writeln!(report, "final_test_mse: {}", last.test_mse);
        let _ = writeln!(report, "final_train_mae: {}", last.train_mae);
        let _ = writeln!(report, "final_test_mae: {}", last.test_mae);
    }
    write_text_atomic(&paths.report(&format!("train_{}", id.id())), &report)?;

    let final_test = curve.final_record().map(|r| r.test_mse).unwrap_or(f64::NAN);
    Ok(format!(
        "{}: {} epochs in {:.1}s, final test mse {:.6e}",
        id.id(),
        curve.records.len(),
        elapsed.as_secs_f64(),
        final_test
    ))
}

/// Runs the source CSV named by `--split file=PATH` through the stored
/// preprocessing of `rb` (its schema and scaler).
fn ingest_external(rb: &ResolvedBuilding, path: &Path, scaler: &ScalerParams) -> Result<Frame> {
    let schema = CsvSchema {
        timestamp_col: rb.timestamp_col.clone(),
        feature_cols: rb.feature_cols.clone(),
    };
    let records = parse_csv(path, &schema)
        .with_context(|| format!("reading evaluation data {}", path.display()))?;
    let mut frame = resample_1min(&records)?;
    frame.building_id = rb.id.id().to_string();
    let (filled, _) = fill_gaps(&frame)?;
    let scaled = apply_scaler(&filled, scaler)?;
    Ok(scaled)
}

struct ScoredRows {
    /// Original-units frame the windows came from, for timestamps.
    frame: Frame,
    dataset: WindowedDataset,
}

fn rows_for_split(
    paths: &Paths,
    rb: &ResolvedBuilding,
    split: &SplitSel,
    train_fraction: f64,
    scaler: &ScalerParams,
) -> Result<ScoredRows> {
    match split {
        SplitSel::Train | SplitSel::Test => {
            let dataset = WindowedDataset::load(&paths.dataset(rb.id)).with_context(|| {
                format!("building {}: loading dataset (run ingest first)", rb.id.id())
            })?;
            let (train_set, test_set) = chronological_split(&dataset, train_fraction)?;
            let picked = if *split == SplitSel::Train { train_set } else { test_set };
            let frame = Frame::read_csv(&paths.frame(rb.id)).with_context(|| {
                format!("building {}: loading frame (run ingest first)", rb.id.id())
            })?;
            Ok(ScoredRows { frame, dataset: picked })
        }
        SplitSel::File(path) => {
            let scaled = ingest_external(rb, path, scaler)?;
            let dataset = make_windows(&scaled, rb.model_config.window_length, &rb.target_col)?;
            if dataset.is_empty() {
                bail!(
                    "{} has too few rows for window length {}",
                    path.display(),
                    rb.model_config.window_length
                );
            }
            Ok(ScoredRows { frame: scaled, dataset })
        }
    }
}

/// Scores one trained model on the chosen rows and writes the metric report
/// and an actual-vs-predicted CSV.
pub fn evaluate_building(
    paths: &Paths,
    rb: &ResolvedBuilding,
    split: &SplitSel,
    train_fraction: f64,
) -> Result<String> {
    let id = rb.id;
    let model = load_params(&paths.model(id)).with_context(|| {
        format!("building {}: loading model (run `gridfreq train` first)", id.id())
    })?;
    let scaler = ScalerParams::load_json(&paths.scaler(id))
        .with_context(|| format!("building {}: loading scaler", id.id()))?;
    let scored = rows_for_split(paths, rb, split, train_fraction, &scaler)?;
    if scored.dataset.is_empty() {
        bail!("building {}: the {} split has no windows", id.id(), split.scope_tag());
    }

    let preds = predict_dataset(&model, &scored.dataset)?;
    let actuals = &scored.dataset.targets;
    let report = evaluate_report(preds.data(), actuals.data(), Some((&scaler, &rb.target_col)))?;

    let pred_hz = invert_scaler(preds.data(), &scaler, &rb.target_col)?;
    let actual_hz = invert_scaler(actuals.data(), &scaler, &rb.target_col)?;

    let scope = format!("eval_{}_{}", id.id(), split.scope_tag());
    let mut csv = String::from("timestamp,actual,predicted,actual_hz,predicted_hz\n");
    for k in 0..scored.dataset.count() {
        let ts = scored.frame.timestamp(scored.dataset.source_rows[k]);
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            ts.format("%Y-%m-%d %H:%M:%S"),
            actuals.data()[k],
            preds.data()[k],
            actual_hz[k],
            pred_hz[k]
        );
    }
    write_text_atomic(&paths.pred(&scope), &csv)?;

    let mut text = String::new();
    let _ = writeln!(text, "scope: evaluate {} {}", id.id(), split.scope_tag());
    if let SplitSel::File(p) = split {
        let _ = writeln!(text, "data: {}", p.display());
    }
    let _ = writeln!(text, "generated_unix: {}", now_unix());
    let _ = writeln!(text, "model: {}", paths.model(id).display());
    let _ = writeln!(text, "target_col: {}", rb.target_col);
    text.push_str(&metrics_block(&report));
    write_text_atomic(&paths.report(&scope), &text)?;

    Ok(format!(
        "{} {}: n {}, mse {:.6e}, mae {:.6e}, mape {:.4}%",
        id.id(),
        split.scope_tag(),
        report.normalized.n,
        report.normalized.mse,
        report.normalized.mae,
        report.normalized.mape * 100.0
    ))
}

/// Weighted-ensemble evaluation: every member windows the same source frame
/// with its own length, predictions are aligned and combined.
pub fn ensemble_run(
    paths: &Paths,
    cfg: &RunConfig,
    members_cfg: &[ResolvedBuilding],
    source: Building,
    split: &SplitSel,
    train_fraction: f64,
) -> Result<String> {
    let (spec, weights_overridden) = cfg.ensemble_spec();
    spec.validate()?;

    let source_rb = members_cfg
        .iter()
        .find(|rb| rb.id == source)
        .with_context(|| format!("building {} is not configured", source.id()))?;
    let scaler = ScalerParams::load_json(&paths.scaler(source))
        .with_context(|| format!("building {}: loading scaler (run ingest first)", source.id()))?;

    // One normalized source series; members re-window it below.
    let scaled = match split {
        SplitSel::File(path) => ingest_external(source_rb, path, &scaler)?,
        _ => {
            let frame = Frame::read_csv(&paths.frame(source)).with_context(|| {
                format!("building {}: loading frame (run ingest first)", source.id())
            })?;
            apply_scaler(&frame, &scaler)?
        }
    };

    let mut models: Vec<(Building, ModelParams, f64)> = Vec::new();
    for (member_id, weight) in &spec.members {
        let b = Building::from_str(member_id)
            .map_err(|e| anyhow::anyhow!("ensemble member '{}': {}", member_id, e))?;
        let rb = members_cfg
            .iter()
            .find(|rb| rb.id == b)
            .with_context(|| format!("ensemble member {} is not configured", b.id()))?;
        let model = load_params(&paths.model(b)).with_context(|| {
            format!("member {}: loading model (run `gridfreq train --all` first)", b.id())
        })?;
        if model.config.window_length != rb.model_config.window_length {
            bail!(
                "member {}: stored model window {} differs from configured {}",
                b.id(),
                model.config.window_length,
                rb.model_config.window_length
            );
        }
        models.push((b, model, *weight));
    }

    let datasets: Vec<WindowedDataset> = models
        .iter()
        .map(|(b, model, _)| {
            make_windows(&scaled, model.config.window_length, &source_rb.target_col)
                .with_context(|| format!("member {}: windowing source frame", b.id()))
        })
        .collect::<Result<_>>()?;
    let aligned = align_to_common_targets(&datasets)?;
    let picked: Vec<WindowedDataset> = match split {
        SplitSel::File(_) => aligned,
        SplitSel::Train | SplitSel::Test => aligned
            .iter()
            .map(|d| {
                let (tr, te) = chronological_split(d, train_fraction)?;
                Ok(if *split == SplitSel::Train { tr } else { te })
            })
            .collect::<Result<_>>()?,
    };
    if picked[0].is_empty() {
        bail!("the {} split has no aligned windows", split.scope_tag());
    }

    let members: Vec<EnsembleMember> = models
        .iter()
        .zip(picked.iter())
        .map(|((b, model, weight), dataset)| EnsembleMember {
            id: b.id().to_string(),
            params: model,
            weight: *weight,
            dataset,
        })
        .collect();
    let prediction = predict_ensemble(&members)?;

    let actuals = prediction.actuals.data();
    let hz = Some((&scaler, source_rb.target_col.as_str()));
    let member_reports: Vec<EvaluationReport> = prediction
        .member_preds
        .iter()
        .map(|p| evaluate_report(p.data(), actuals, hz))
        .collect::<gridfreq_core::Result<_>>()?;
    let ensemble_report = evaluate_report(prediction.combined.data(), actuals, hz)?;

    let scope = format!("ensemble_{}_{}", source.id(), split.scope_tag());
    let mut csv = String::from("timestamp,actual");
    for (b, _, _) in &models {
        let _ = write!(csv, ",{}", b.id());
    }
    csv.push_str(",ensemble,actual_hz");
    for (b, _, _) in &models {
        let _ = write!(csv, ",{}_hz", b.id());
    }
    csv.push_str(",ensemble_hz\n");
    let actual_hz = invert_scaler(actuals, &scaler, &source_rb.target_col)?;
    let member_hz: Vec<Vec<f64>> = prediction
        .member_preds
        .iter()
        .map(|p| invert_scaler(p.data(), &scaler, &source_rb.target_col))
        .collect::<gridfreq_core::Result<_>>()?;
    let combined_hz = invert_scaler(prediction.combined.data(), &scaler, &source_rb.target_col)?;
    for k in 0..actuals.len() {
        let ts = scaled.timestamp(prediction.target_rows[k]);
        let _ = write!(csv, "{},{}", ts.format("%Y-%m-%d %H:%M:%S"), actuals[k]);
        for p in &prediction.member_preds {
            let _ = write!(csv, ",{}", p.data()[k]);
        }
        let _ = write!(csv, ",{},{}", prediction.combined.data()[k], actual_hz[k]);
        for hz_col in &member_hz {
            let _ = write!(csv, ",{}", hz_col[k]);
        }
        let _ = writeln!(csv, ",{}", combined_hz[k]);
    }
    write_text_atomic(&paths.pred(&scope), &csv)?;

    let mut text = String::new();
    let _ = writeln!(text, "scope: ensemble (source {}, split {})", source.id(), split.scope_tag());
    if let SplitSel::File(p) = split {
        let _ = writeln!(text, "data: {}", p.display());
    }
    let _ = writeln!(text, "generated_unix: {}", now_unix());
    for (b, _, w) in &models {
        let _ = writeln!(
            text,
            "weight {}: {}{}",
            b.id(),
            w,
            if weights_overridden { " (override)" } else { "" }
        );
    }
    let _ = writeln!(text, "target_col: {}", source_rb.target_col);
    for ((b, _, _), rep) in models.iter().zip(member_reports.iter()) {
        let _ = writeln!(text, "member: {}", b.id());
        text.push_str(&metrics_block(rep));
    }
    let _ = writeln!(text, "member: ensemble");
    text.push_str(&metrics_block(&ensemble_report));
    let min_member_mse = member_reports
        .iter()
        .map(|r| r.normalized.mse)
        .fold(f64::INFINITY, f64::min);
    let _ = writeln!(
        text,
        "ensemble_mse_le_min_member: {}",
        ensemble_report.normalized.mse <= min_member_mse
    );
    write_text_atomic(&paths.report(&scope), &text)?;

    Ok(format!(
        "ensemble over {}: n {}, mse {:.6e} (best member {:.6e})",
        source.id(),
        ensemble_report.normalized.n,
        ensemble_report.normalized.mse,
        min_member_mse
    ))
}

/// Merges per-building loss curves into one long-format CSV.
pub fn export_curves(paths: &Paths, buildings: &[Building]) -> Result<String> {
    let mut out = String::from("building,epoch,train_mse,test_mse,train_mae,test_mae\n");
    let mut merged = 0usize;
    for b in buildings {
        let path = paths.curve(*b);
        let text = std::fs::read_to_string(&path).with_context(|| {
            format!("building {}: loading {} (run train first)", b.id(), path.display())
        })?;
        for line in text.lines().skip(1) {
            if !line.is_empty() {
                let _ = writeln!(out, "{},{}", b.id(), line);
                merged += 1;
            }
        }
    }
    write_text_atomic(&paths.combined_curves(), &out)?;
    Ok(format!(
        "merged {} epochs from {} curve files into {}",
        merged,
        buildings.len(),
        paths.combined_curves().display()
    ))
}

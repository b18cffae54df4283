//! Python bindings for the forecasting engine: frames, scalers, windowed
//! datasets, models, training, and the ensemble helpers.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gridfreq_core::data::{
    apply_scaler, chronological_split, fill_gaps, fit_scaler, invert_scaler, make_windows,
    parse_csv, resample_1min, CsvSchema, ScalerParams, WindowedDataset,
};
use gridfreq_core::ensemble::{combine_weighted, metric_mae, metric_mape, metric_mse, EnsembleSpec};
use gridfreq_core::model::{build_model, load_params, save_params, Building, ModelParams};
use gridfreq_core::nn::LossKind;
use gridfreq_core::training::{predict_dataset, train as train_model, TrainConfig};
use gridfreq_core::Tensor;

fn pyerr(e: gridfreq_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A named-column series on an exact 1-minute grid.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Frame {
    inner: gridfreq_core::data::Frame,
}

#[pymethods]
impl Frame {
    /// Parses a raw CSV, resamples it to 1-minute means, and fills gaps.
    /// Returns the frame together with the number of filled cells.
    #[staticmethod]
    fn ingest(
        path: PathBuf,
        timestamp_col: String,
        feature_cols: Vec<String>,
    ) -> PyResult<(Frame, usize)> {
        let schema = CsvSchema { timestamp_col, feature_cols };
        let records = parse_csv(&path, &schema).map_err(pyerr)?;
        let frame = resample_1min(&records).map_err(pyerr)?;
        let (filled, report) = fill_gaps(&frame).map_err(pyerr)?;
        Ok((Frame { inner: filled }, report.filled_cells))
    }

    /// Reads a frame CSV previously written by `write_csv`.
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Frame> {
        Ok(Frame { inner: gridfreq_core::data::Frame::read_csv(&path).map_err(pyerr)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(pyerr)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns().to_vec()
    }

    #[getter]
    fn start(&self) -> String {
        self.inner.start().format("%Y-%m-%d %H:%M:%S").to_string()
    }

    fn timestamp(&self, row: usize) -> PyResult<String> {
        if row >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {} out of range", row)));
        }
        Ok(self.inner.timestamp(row).format("%Y-%m-%d %H:%M:%S").to_string())
    }

    /// One column's values by name.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let c = self
            .inner
            .column_index(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column '{}'", name)))?;
        Ok((0..self.inner.n_rows()).map(|r| self.inner.value(r, c)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Frame({} rows x {} cols from {})",
            self.inner.n_rows(),
            self.inner.n_cols(),
            self.inner.start().format("%Y-%m-%d %H:%M:%S")
        )
    }
}

/// Per-column min-max scaling fitted on a row range.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scaler {
    inner: ScalerParams,
}

#[pymethods]
impl Scaler {
    /// Fits on `frame` rows `0..fit_rows` (pass `n_rows` to fit on all).
    #[staticmethod]
    fn fit(frame: &Frame, fit_rows: usize) -> PyResult<Scaler> {
        Ok(Scaler { inner: fit_scaler(&frame.inner, 0..fit_rows).map_err(pyerr)? })
    }

    fn apply(&self, frame: &Frame) -> PyResult<Frame> {
        Ok(Frame { inner: apply_scaler(&frame.inner, &self.inner).map_err(pyerr)? })
    }

    /// Maps normalized values of `column` back to original units.
    fn invert(&self, values: Vec<f64>, column: &str) -> PyResult<Vec<f64>> {
        invert_scaler(&values, &self.inner, column).map_err(pyerr)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_json(&path).map_err(pyerr)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Scaler> {
        Ok(Scaler { inner: ScalerParams::load_json(&path).map_err(pyerr)? })
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns.clone()
    }

    #[getter]
    fn mins(&self) -> Vec<f64> {
        self.inner.mins.clone()
    }

    #[getter]
    fn maxs(&self) -> Vec<f64> {
        self.inner.maxs.clone()
    }
}

/// Sliding windows over a frame plus the next-minute targets.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: WindowedDataset,
}

#[pymethods]
impl Dataset {
    /// Windows `frame` with length `window_len`, predicting `target_col`.
    #[staticmethod]
    fn windows(frame: &Frame, window_len: usize, target_col: &str) -> PyResult<Dataset> {
        Ok(Dataset { inner: make_windows(&frame.inner, window_len, target_col).map_err(pyerr)? })
    }

    /// Chronological train/test split by fraction.
    fn split(&self, train_fraction: f64) -> PyResult<(Dataset, Dataset)> {
        let (a, b) = chronological_split(&self.inner, train_fraction).map_err(pyerr)?;
        Ok((Dataset { inner: a }, Dataset { inner: b }))
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    #[getter]
    fn window_len(&self) -> usize {
        self.inner.window_len
    }

    #[getter]
    fn feature_count(&self) -> usize {
        self.inner.feature_count
    }

    #[getter]
    fn targets(&self) -> Vec<f64> {
        self.inner.targets.data().to_vec()
    }

    #[getter]
    fn source_rows(&self) -> Vec<usize> {
        self.inner.source_rows.clone()
    }

    /// Window `j` as a list of rows.
    fn input(&self, j: usize) -> PyResult<Vec<Vec<f64>>> {
        if j >= self.inner.count() {
            return Err(PyValueError::new_err(format!("window {} out of range", j)));
        }
        let (l, f) = (self.inner.window_len, self.inner.feature_count);
        Ok((0..l)
            .map(|t| (0..f).map(|c| self.inner.inputs.at3(j, t, c)).collect())
            .collect())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(pyerr)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Dataset> {
        Ok(Dataset { inner: WindowedDataset::load(&path).map_err(pyerr)? })
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} windows of {} x {})",
            self.inner.count(),
            self.inner.window_len,
            self.inner.feature_count
        )
    }
}

/// The ConvLSTM forecaster.
#[pyclass]
struct Model {
    inner: ModelParams,
}

#[pymethods]
impl Model {
    /// Builds a fresh model from a building preset ("A", "B", or "C") and a
    /// seed. Weights are Glorot-uniform, biases zero.
    #[new]
    fn new(preset: &str, seed: u64) -> PyResult<Model> {
        let building = Building::from_str(preset).map_err(pyerr)?;
        let config = gridfreq_core::model::ConvLSTMConfig::for_building(building);
        Ok(Model { inner: build_model(&config, seed).map_err(pyerr)? })
    }

    /// Deterministic eval-mode predictions for every window.
    fn predict(&self, dataset: &Dataset) -> PyResult<Vec<f64>> {
        Ok(predict_dataset(&self.inner, &dataset.inner).map_err(pyerr)?.into_vec())
    }

    /// Predicts one window given as a list of rows.
    fn predict_window(&self, window: Vec<Vec<f64>>) -> PyResult<f64> {
        let l = window.len();
        let f = window.first().map(|r| r.len()).unwrap_or(0);
        if window.iter().any(|r| r.len() != f) {
            return Err(PyValueError::new_err("window rows have uneven lengths"));
        }
        let flat: Vec<f64> = window.into_iter().flatten().collect();
        let x = Tensor::from_vec(flat, &[1, l, f]).map_err(pyerr)?;
        let pred = gridfreq_core::model::predict(&self.inner, &x).map_err(pyerr)?;
        Ok(pred.data()[0])
    }

    #[getter]
    fn window_length(&self) -> usize {
        self.inner.config.window_length
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Architecture as a dict of dimension names to sizes.
    fn config(&self, py: Python<'_>) -> PyResult<Py<pyo3::types::PyDict>> {
        use pyo3::types::PyDict;
        let c = &self.inner.config;
        let d = PyDict::new(py);
        d.set_item("window_length", c.window_length)?;
        d.set_item("conv_out_channels", c.conv_out_channels)?;
        d.set_item("kernel_size", c.kernel_size)?;
        d.set_item("padding", c.padding)?;
        d.set_item("stride", c.stride)?;
        d.set_item("lstm_input", c.lstm_input)?;
        d.set_item("lstm_hidden", c.lstm_hidden)?;
        d.set_item("dropout_rate", c.dropout_rate)?;
        d.set_item("fc1_out", c.fc1_out)?;
        d.set_item("fc2_out", c.fc2_out)?;
        Ok(d.into())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_params(&self.inner, &path).map_err(pyerr)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        Ok(Model { inner: load_params(&path).map_err(pyerr)? })
    }
}

/// Trains `model` with mini-batch Adam, returning the trained model and the
/// loss curve as `(epoch, train_mse, test_mse, train_mae, test_mae)` rows.
#[pyfunction]
#[pyo3(signature = (model, train_set, test_set, *, epochs = 100, learning_rate = 1e-4,
                    batch_size = 32, loss = "mse", seed = 0, shuffle = true))]
#[allow(clippy::too_many_arguments)]
fn train(
    model: &Model,
    train_set: &Dataset,
    test_set: &Dataset,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    loss: &str,
    seed: u64,
    shuffle: bool,
) -> PyResult<(Model, Vec<(usize, f64, f64, f64, f64)>)> {
    let cfg = TrainConfig {
        learning_rate,
        epochs,
        batch_size,
        loss: LossKind::from_str(loss).map_err(pyerr)?,
        beta1: 0.9,
        beta2: 0.999,
        eps_adam: 1e-8,
        seed,
        shuffle_each_epoch: shuffle,
    };
    let (trained, curve) =
        train_model(model.inner.clone(), &train_set.inner, &test_set.inner, &cfg).map_err(pyerr)?;
    let rows = curve
        .records
        .iter()
        .map(|r| (r.epoch, r.train_mse, r.test_mse, r.train_mae, r.test_mae))
        .collect();
    Ok((Model { inner: trained }, rows))
}

/// MSE, MAE, and MAPE of predictions against actuals.
#[pyfunction]
fn metrics(py: Python<'_>, pred: Vec<f64>, actual: Vec<f64>) -> PyResult<Py<pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let mse = metric_mse(&pred, &actual).map_err(pyerr)?;
    let mae = metric_mae(&pred, &actual).map_err(pyerr)?;
    let mape = metric_mape(&pred, &actual).map_err(pyerr)?;
    let d = PyDict::new(py);
    d.set_item("mse", mse)?;
    d.set_item("mae", mae)?;
    d.set_item("mape", mape.value)?;
    d.set_item("mape_excluded", mape.excluded)?;
    d.set_item("n", pred.len())?;
    Ok(d.into())
}

/// Weighted average of per-member prediction lists.
#[pyfunction]
fn combine(preds: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<Vec<f64>> {
    let tensors: Vec<Tensor> = preds
        .into_iter()
        .map(|p| {
            let n = p.len();
            Tensor::from_vec(p, &[n])
        })
        .collect::<gridfreq_core::Result<_>>()
        .map_err(pyerr)?;
    let refs: Vec<&Tensor> = tensors.iter().collect();
    Ok(combine_weighted(&refs, &weights).map_err(pyerr)?.into_vec())
}

/// The standard per-building ensemble weights.
#[pyfunction]
fn default_ensemble_weights() -> Vec<(String, f64)> {
    EnsembleSpec::default_weights().members
}

#[pymodule]
fn gridfreq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Frame>()?;
    m.add_class::<Scaler>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(default_ensemble_weights, m)?)?;
    Ok(())
}

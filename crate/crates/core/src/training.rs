//! Mini-batch Adam training loop with per-epoch train/test loss curves.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::window::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{forward_backward, predict, Building, ModelGrads, ModelParams};
use crate::nn::loss::LossKind;
use crate::tensor::Tensor;

/// Rows evaluated per forward pass when scoring a full split.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl TrainConfig {
    /// Per-building epoch counts; everything else shared.
    pub fn for_building(building: Building) -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: match building {
                Building::A | Building::B => 1500,
                Building::C => 2000,
            },
            batch_size: 32,
            loss: LossKind::Mse,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "{} must be in [0, 1), got {}",
                    name, v
                )));
            }
        }
        if !(self.eps_adam.is_finite() && self.eps_adam > 0.0) {
            return Err(Error::Config(format!(
                "adam epsilon must be positive, got {}",
                self.eps_adam
            )));
        }
        Ok(())
    }
}

/// First/second-moment accumulators, one pair per learnable tensor, plus the
/// step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let m = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { m, v, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update across every tensor:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected
/// `m_hat = m / (1 - b1^t)`, `v_hat = v / (1 - b2^t)`, then
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelGrads,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);

    let names = ModelParams::tensor_names();
    let grad_tensors = grads.tensors();
    for (k, p) in params.tensors_mut().into_iter().enumerate() {
        let g = grad_tensors[k];
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient {} has shape {:?}, parameter has {:?}",
                names[k],
                g.shape(),
                p.shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient {} at step {}",
                names[k], state.t
            )));
        }
        let md = state.m[k].data_mut();
        let vd = state.v[k].data_mut();
        let pd = p.data_mut();
        let gd = g.data();
        for i in 0..pd.len() {
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
            let m_hat = md[i] / b1t;
            let v_hat = vd[i] / b2t;
            pd[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
    }
    Ok(())
}

/// One epoch's evaluation record. Field order matches the CSV layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_mae: f64,
    pub test_mae: f64,
}

/// Per-epoch losses on the full train and test splits, evaluated with
/// dropout off, in original (unshuffled) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub records: Vec<EpochRecord>,
}

impl LossCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,train_mse,test_mse,train_mae,test_mae")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_mse, r.test_mse, r.train_mae, r.test_mae
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Eval-mode predictions for every window, as a flat `[count]` tensor.
/// Chunked so activation buffers stay bounded regardless of dataset size.
pub fn predict_dataset(params: &ModelParams, dataset: &WindowedDataset) -> Result<Tensor> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("cannot predict over zero windows".into()));
    }
    let n = dataset.count();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (x, _) = dataset.gather(&indices);
        let pred = predict(params, &x)?;
        out.extend_from_slice(pred.data());
        start = end;
    }
    Tensor::from_vec(out, &[n])
}

/// MSE and MAE over a whole dataset in eval mode, computed in chunks with a
/// single left-to-right accumulation per metric (so the result matches a
/// one-pass computation over the concatenated predictions bit-for-bit).
pub fn evaluate_split(params: &ModelParams, dataset: &WindowedDataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("cannot evaluate zero windows".into()));
    }
    let n = dataset.count();
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (x, y) = dataset.gather(&indices);
        let pred = predict(params, &x)?;
        for (p, t) in pred.data().iter().zip(y.data().iter()) {
            let d = p - t;
            sq_sum += d * d;
            abs_sum += d.abs();
        }
        start = end;
    }
    Ok((sq_sum / n as f64, abs_sum / n as f64))
}

/// Runs the full training loop and returns the trained parameters and the
/// loss curve. Deterministic: (seed, data, config) fix the result bit-exactly.
pub fn train(
    model: ModelParams,
    train_set: &WindowedDataset,
    test_set: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<(ModelParams, LossCurve)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training split has no windows".into()));
    }
    if test_set.is_empty() {
        return Err(Error::EmptyDataset(
            "test split has no windows; loss curves need both splits".into(),
        ));
    }

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model);
    let mut indices: Vec<usize> = (0..train_set.count()).collect();
    let mut curve = LossCurve::default();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            indices.shuffle(&mut rng);
        }
        for (batch_idx, batch) in indices.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train_set.gather(batch);
            let (_, grads) = forward_backward(&model, &x, &y, cfg.loss, &mut rng).map_err(
                |e| match e {
                    Error::NonFiniteLoss { value, .. } => Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                        value,
                    },
                    other => other,
                },
            )?;
            adam_step(&mut model, &grads, &mut adam, cfg)?;
        }

        let (train_mse, train_mae) = evaluate_split(&model, train_set)?;
        let (test_mse, test_mae) = evaluate_split(&model, test_set)?;
        for v in [train_mse, train_mae, test_mse, test_mae] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                    value: v,
                });
            }
        }
        curve.records.push(EpochRecord {
            epoch,
            train_mse,
            test_mse,
            train_mae,
            test_mae,
        });
    }

    Ok((model, curve))
}

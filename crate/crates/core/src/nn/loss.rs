//! Mean squared and mean absolute error with gradients on the predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Objective selector for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss '{}', expected mse or mae",
                other
            ))),
        }
    }
}

impl LossKind {
    pub fn compute(self, pred: &Tensor, actual: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            LossKind::Mse => mse_loss(pred, actual),
            LossKind::Mae => mae_loss(pred, actual),
        }
    }
}

fn check(pred: &Tensor, actual: &Tensor) -> Result<usize> {
    if pred.shape() != actual.shape() {
        return Err(Error::LengthMismatch(format!(
            "prediction shape {:?} vs actual shape {:?}",
            pred.shape(),
            actual.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("loss over zero elements".into()));
    }
    Ok(pred.len())
}

/// `L = (1/N) sum (p - a)^2`, gradient `dL/dp = 2 (p - a) / N`.
pub fn mse_loss(pred: &Tensor, actual: &Tensor) -> Result<(f64, Tensor)> {
    let n = check(pred, actual)? as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0;
    {
        let gd = grad.data_mut();
        for (k, (&p, &a)) in pred.data().iter().zip(actual.data().iter()).enumerate() {
            let d = p - a;
            sum += d * d;
            gd[k] = 2.0 * d / n;
        }
    }
    Ok((sum / n, grad))
}

/// `L = (1/N) sum |p - a|`, gradient `dL/dp = sign(p - a) / N` with
/// `sign(0) = 0`.
pub fn mae_loss(pred: &Tensor, actual: &Tensor) -> Result<(f64, Tensor)> {
    let n = check(pred, actual)? as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0;
    {
        let gd = grad.data_mut();
        for (k, (&p, &a)) in pred.data().iter().zip(actual.data().iter()).enumerate() {
            let d = p - a;
            sum += d.abs();
            gd[k] = if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            };
        }
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_known_case() {
        // pred [1,2], actual [2,2]: errors [-1,0], MSE = 1/2, grad = [-1, 0].
        let pred = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let actual = Tensor::from_vec(vec![2.0, 2.0], &[2]).unwrap();
        let (l, g) = mse_loss(&pred, &actual).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
        assert_eq!(g.data(), &[-1.0, 0.0]);
    }

    #[test]
    fn mae_known_case() {
        let pred = Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap();
        let actual = Tensor::from_vec(vec![2.0, 2.0], &[2]).unwrap();
        let (l, g) = mae_loss(&pred, &actual).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
        assert_eq!(g.data(), &[-0.5, 0.0]);
    }

    #[test]
    fn losses_match_direct_loop_oracle() {
        let n = 17;
        let pred: Vec<f64> = (0..n).map(|k| ((k as f64) * 0.61).sin() * 2.0).collect();
        let actual: Vec<f64> = (0..n).map(|k| ((k as f64) * 0.29).cos()).collect();
        let pt = Tensor::from_vec(pred.clone(), &[n]).unwrap();
        let at = Tensor::from_vec(actual.clone(), &[n]).unwrap();

        let mut mse = 0.0;
        let mut mae = 0.0;
        for k in 0..n {
            let d = pred[k] - actual[k];
            mse += d * d;
            mae += d.abs();
        }
        mse /= n as f64;
        mae /= n as f64;

        let (got_mse, _) = mse_loss(&pt, &at).unwrap();
        let (got_mae, _) = mae_loss(&pt, &at).unwrap();
        assert!((got_mse - mse).abs() < 1e-12);
        assert!((got_mae - mae).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let n = 5;
        let base: Vec<f64> = (0..n).map(|k| ((k as f64) * 0.8).sin()).collect();
        let actual: Vec<f64> = (0..n).map(|k| ((k as f64) * 0.3).cos()).collect();
        let at = Tensor::from_vec(actual, &[n]).unwrap();
        let eps = 1e-6;
        for kind in [LossKind::Mse, LossKind::Mae] {
            let pt = Tensor::from_vec(base.clone(), &[n]).unwrap();
            let (_, grad) = kind.compute(&pt, &at).unwrap();
            for k in 0..n {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[k] += eps;
                minus[k] -= eps;
                let (lp, _) = kind
                    .compute(&Tensor::from_vec(plus, &[n]).unwrap(), &at)
                    .unwrap();
                let (lm, _) = kind
                    .compute(&Tensor::from_vec(minus, &[n]).unwrap(), &at)
                    .unwrap();
                let fd = (lp - lm) / (2.0 * eps);
                assert!(
                    (grad.data()[k] - fd).abs() < 1e-8,
                    "{:?} grad[{}] = {} vs fd {}",
                    kind,
                    k,
                    grad.data()[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn perfect_prediction_gives_zero_loss_and_grad() {
        let x = Tensor::from_vec(vec![0.3, -0.7, 1.1], &[3]).unwrap();
        for kind in [LossKind::Mse, LossKind::Mae] {
            let (l, g) = kind.compute(&x, &x).unwrap();
            assert_eq!(l, 0.0);
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn empty_and_mismatched_inputs_are_rejected() {
        let a = Tensor::zeros(&[0]);
        assert!(matches!(mse_loss(&a, &a), Err(Error::EmptyInput(_))));
        let b = Tensor::zeros(&[2]);
        let c = Tensor::zeros(&[3]);
        assert!(matches!(mae_loss(&b, &c), Err(Error::LengthMismatch(_))));
    }
}

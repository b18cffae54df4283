//! Neural network building blocks: differentiable layers with explicit
//! forward caches and handwritten backward passes.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod lstm;

pub use activation::{relu, relu_mask, sigmoid, sigmoid_scalar, tanh_op};
pub use conv::{conv1d_backward, conv1d_forward, Conv1DParams, Conv1dCache, Conv1dGrads};
pub use dense::{dense_backward, dense_forward, DenseCache, DenseGrads, DenseParams};
pub use dropout::{dropout, Mode};
pub use loss::{mae_loss, mse_loss, LossKind};
pub use lstm::{
    lstm_backward, lstm_cell_forward, lstm_sequence_forward, LSTMParams, LSTMState, LstmCellCache,
    LstmGrads, LstmSeqCache,
};

/// Dot product with four independent accumulator chains. The summation
/// order is fixed (deterministic across runs) but differs from naive
/// left-to-right; callers must not rely on either order's rounding.
pub(crate) fn dot4(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let k = 4 * c;
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    ((s0 + s2) + (s1 + s3)) + tail
}

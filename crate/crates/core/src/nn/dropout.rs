//! Inverted dropout: surviving activations are scaled by `1 / (1 - rate)` at
//! training time so that evaluation is the identity.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Applies dropout to `x` and returns `(output, mask)` where `mask` holds the
/// multiplier applied to each element (`0` or `1/(1-rate)`), so the backward
/// pass is `upstream * mask`.
///
/// No RNG draws happen in `Eval` mode or when `rate == 0`, which keeps
/// downstream sampling reproducible across train/eval code paths.
pub fn dropout<R: Rng>(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {}",
            rate
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), Tensor::filled(x.shape(), 1.0)));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(x.shape());
    {
        let md = mask.data_mut();
        for m in md.iter_mut() {
            let u: f64 = rng.random();
            *m = if u < rate { 0.0 } else { keep_scale };
        }
    }
    let out = x.zip_map(&mask, |v, m| v * m);
    Ok((out, mask))
}

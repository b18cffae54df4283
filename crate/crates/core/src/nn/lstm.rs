//! LSTM cell and sequence ops with exact backpropagation through time.
//!
//! The cell follows the standard gate equations on the concatenation
//! `z = [h_prev, x_t]`:
//!
//! ```text
//! f = sigmoid(W_f z + b_f)        i = sigmoid(W_i z + b_i)
//! c_bar = tanh(W_c z + b_c)       c = f * c_prev + i * c_bar
//! o = sigmoid(W_o z + b_o)        h = o * tanh(c)
//! ```
//!
//! One weight matrix per gate, shape `[hidden, hidden + input]`.

use crate::error::{Error, Result};
use crate::nn::activation::sigmoid_scalar;
use crate::tensor::Tensor;

/// Gate weights and biases for one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LSTMParams {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

impl LSTMParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, hidden + input]);
        let b = || Tensor::zeros(&[hidden]);
        LSTMParams {
            w_f: w(),
            w_i: w(),
            w_c: w(),
            w_o: w(),
            b_f: b(),
            b_i: b(),
            b_c: b(),
            b_o: b(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_f.dim(0)
    }

    pub fn input_size(&self) -> usize {
        self.w_f.dim(1) - self.w_f.dim(0)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [&self.w_f, &self.w_i, &self.w_c, &self.w_o];
        let bs = [&self.b_f, &self.b_i, &self.b_c, &self.b_o];
        if ws.iter().any(|w| w.shape() != self.w_f.shape()) {
            return Err(Error::Shape("gate weight matrices differ in shape".into()));
        }
        if bs.iter().any(|b| b.shape() != self.b_f.shape()) {
            return Err(Error::Shape("gate bias vectors differ in shape".into()));
        }
        if self.w_f.rank() != 2 || self.b_f.rank() != 1 {
            return Err(Error::Shape("gate weights must be [hidden, hidden+input]".into()));
        }
        let hidden = self.hidden_size();
        if self.w_f.dim(1) <= hidden || self.b_f.dim(0) != hidden {
            return Err(Error::Shape(format!(
                "inconsistent gate shapes: weights {:?}, bias {:?}",
                self.w_f.shape(),
                self.b_f.shape()
            )));
        }
        Ok(())
    }
}

/// Hidden and cell state. Either rank-1 `[hidden]` (single sample) or rank-2
/// `[batch, hidden]`; both carry the same shape for `h` and `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LSTMState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LSTMState {
    pub fn zeros(hidden: usize) -> Self {
        LSTMState {
            h: Tensor::zeros(&[hidden]),
            c: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros_batch(batch: usize, hidden: usize) -> Self {
        LSTMState {
            h: Tensor::zeros(&[batch, hidden]),
            c: Tensor::zeros(&[batch, hidden]),
        }
    }
}

/// Forward values for one timestep, kept for the backward pass.
/// All tensors are batch-major rank 2.
#[derive(Debug, Clone)]
pub struct LstmCellCache {
    pub(crate) z: Tensor,      // [batch, hidden + input]
    pub(crate) f: Tensor,      // [batch, hidden]
    pub(crate) i: Tensor,      // [batch, hidden]
    pub(crate) c_bar: Tensor,  // [batch, hidden]
    pub(crate) o: Tensor,      // [batch, hidden]
    pub(crate) c_prev: Tensor, // [batch, hidden]
    pub(crate) tanh_c: Tensor, // [batch, hidden], tanh of the new cell state
}

/// Per-step caches for a full sequence pass.
#[derive(Debug, Clone)]
pub struct LstmSeqCache {
    pub(crate) steps: Vec<LstmCellCache>,
    pub(crate) batch: usize,
    pub(crate) input: usize,
}

/// Gradients with the same layout as [`LSTMParams`].
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

impl LstmGrads {
    pub fn zeros_like(p: &LSTMParams) -> Self {
        LstmGrads {
            w_f: Tensor::zeros(p.w_f.shape()),
            w_i: Tensor::zeros(p.w_i.shape()),
            w_c: Tensor::zeros(p.w_c.shape()),
            w_o: Tensor::zeros(p.w_o.shape()),
            b_f: Tensor::zeros(p.b_f.shape()),
            b_i: Tensor::zeros(p.b_i.shape()),
            b_c: Tensor::zeros(p.b_c.shape()),
            b_o: Tensor::zeros(p.b_o.shape()),
        }
    }
}

/// `out[b,h] = sum_k w[h,k] * z[b,k] + bias[h]`, then `act` elementwise.
fn gate(z: &Tensor, w: &Tensor, bias: &Tensor, act: impl Fn(f64) -> f64) -> Tensor {
    let (batch, width) = (z.dim(0), z.dim(1));
    let hidden = w.dim(0);
    let mut out = Tensor::zeros(&[batch, hidden]);
    let zd = z.data();
    let wd = w.data();
    let bd = bias.data();
    let od = out.data_mut();
    for b in 0..batch {
        let zrow = &zd[b * width..(b + 1) * width];
        for h in 0..hidden {
            let wrow = &wd[h * width..(h + 1) * width];
            od[b * hidden + h] = act(crate::nn::dot4(wrow, zrow) + bd[h]);
        }
    }
    out
}

fn cell_forward_batch(
    x_t: &Tensor,
    state: &LSTMState,
    p: &LSTMParams,
) -> Result<(LSTMState, LstmCellCache)> {
    let (batch, input) = (x_t.dim(0), x_t.dim(1));
    let hidden = p.hidden_size();
    if input != p.input_size() {
        return Err(Error::Shape(format!(
            "cell expects input size {}, got {}",
            p.input_size(),
            input
        )));
    }
    if state.h.shape() != [batch, hidden] || state.c.shape() != [batch, hidden] {
        return Err(Error::Shape(format!(
            "state shape {:?}/{:?} does not match [batch={}, hidden={}]",
            state.h.shape(),
            state.c.shape(),
            batch,
            hidden
        )));
    }

    // z = [h_prev, x_t] per sample.
    let width = hidden + input;
    let mut z = Tensor::zeros(&[batch, width]);
    {
        let zd = z.data_mut();
        let hd = state.h.data();
        let xd = x_t.data();
        for b in 0..batch {
            zd[b * width..b * width + hidden].copy_from_slice(&hd[b * hidden..(b + 1) * hidden]);
            zd[b * width + hidden..(b + 1) * width]
                .copy_from_slice(&xd[b * input..(b + 1) * input]);
        }
    }

    let f = gate(&z, &p.w_f, &p.b_f, sigmoid_scalar);
    let i = gate(&z, &p.w_i, &p.b_i, sigmoid_scalar);
    let c_bar = gate(&z, &p.w_c, &p.b_c, f64::tanh);
    let o = gate(&z, &p.w_o, &p.b_o, sigmoid_scalar);

    let mut c_new = Tensor::zeros(&[batch, hidden]);
    let mut tanh_c = Tensor::zeros(&[batch, hidden]);
    let mut h_new = Tensor::zeros(&[batch, hidden]);
    {
        let cn = c_new.data_mut();
        for idx in 0..batch * hidden {
            cn[idx] = f.data()[idx] * state.c.data()[idx] + i.data()[idx] * c_bar.data()[idx];
        }
        let tc = tanh_c.data_mut();
        for idx in 0..batch * hidden {
            tc[idx] = cn[idx].tanh();
        }
        let hn = h_new.data_mut();
        for idx in 0..batch * hidden {
            hn[idx] = o.data()[idx] * tc[idx];
        }
    }

    let cache = LstmCellCache {
        z,
        f,
        i,
        c_bar,
        o,
        c_prev: state.c.clone(),
        tanh_c,
    };
    Ok((LSTMState { h: h_new, c: c_new }, cache))
}

/// One LSTM timestep. Accepts a single sample (`x_t` of shape `[input]`,
/// state of shape `[hidden]`) or a batch (`[batch, input]` / `[batch, hidden]`);
/// the returned state matches the input's rank.
pub fn lstm_cell_forward(
    x_t: &Tensor,
    state: &LSTMState,
    p: &LSTMParams,
) -> Result<(LSTMState, LstmCellCache)> {
    p.validate()?;
    match x_t.rank() {
        1 => {
            let xb = x_t.reshaped(&[1, x_t.dim(0)])?;
            let sb = LSTMState {
                h: state.h.reshaped(&[1, state.h.dim(0)])?,
                c: state.c.reshaped(&[1, state.c.dim(0)])?,
            };
            let (new_state, cache) = cell_forward_batch(&xb, &sb, p)?;
            let hidden = p.hidden_size();
            Ok((
                LSTMState {
                    h: new_state.h.reshaped(&[hidden])?,
                    c: new_state.c.reshaped(&[hidden])?,
                },
                cache,
            ))
        }
        2 => cell_forward_batch(x_t, state, p),
        r => Err(Error::Shape(format!(
            "cell input must be rank 1 or 2, got rank {}",
            r
        ))),
    }
}

/// Folds the cell over `t = 1..T` from a zero initial state and returns the
/// final hidden state `[batch, hidden]` plus the caches for backward.
pub fn lstm_sequence_forward(x_seq: &Tensor, p: &LSTMParams) -> Result<(Tensor, LstmSeqCache)> {
    p.validate()?;
    if x_seq.rank() != 3 {
        return Err(Error::Shape(format!(
            "sequence input must be [batch, T, input], got {:?}",
            x_seq.shape()
        )));
    }
    let (batch, t_len, input) = (x_seq.dim(0), x_seq.dim(1), x_seq.dim(2));
    if t_len == 0 {
        return Err(Error::EmptyInput("sequence length is zero".into()));
    }
    if input != p.input_size() {
        return Err(Error::Shape(format!(
            "sequence expects input size {}, got {}",
            p.input_size(),
            input
        )));
    }

    let hidden = p.hidden_size();
    let mut state = LSTMState::zeros_batch(batch, hidden);
    let mut steps = Vec::with_capacity(t_len);
    let mut x_t = Tensor::zeros(&[batch, input]);
    for t in 0..t_len {
        {
            let xd = x_t.data_mut();
            let sd = x_seq.data();
            for b in 0..batch {
                let src = (b * t_len + t) * input;
                xd[b * input..(b + 1) * input].copy_from_slice(&sd[src..src + input]);
            }
        }
        let (new_state, cache) = cell_forward_batch(&x_t, &state, p)?;
        steps.push(cache);
        state = new_state;
    }
    Ok((
        state.h,
        LstmSeqCache {
            steps,
            batch,
            input,
        },
    ))
}

/// Reverse accumulation through every timestep and gate.
///
/// `upstream` is the gradient on the final hidden state `[batch, hidden]`.
/// Returns the gradient on the input sequence `[batch, T, input]` and the
/// parameter gradients accumulated over all steps.
pub fn lstm_backward(
    upstream: &Tensor,
    cache: &LstmSeqCache,
    p: &LSTMParams,
) -> Result<(Tensor, LstmGrads)> {
    let hidden = p.hidden_size();
    let (batch, input) = (cache.batch, cache.input);
    let t_len = cache.steps.len();
    let width = hidden + input;
    if upstream.shape() != [batch, hidden] {
        return Err(Error::Shape(format!(
            "upstream shape {:?} does not match [batch={}, hidden={}]",
            upstream.shape(),
            batch,
            hidden
        )));
    }

    let mut grads = LstmGrads::zeros_like(p);
    let mut grad_x_seq = Tensor::zeros(&[batch, t_len, input]);
    let mut dh = upstream.clone();
    let mut dc = Tensor::zeros(&[batch, hidden]);

    // Pre-activation gradient buffers reused across steps.
    let mut da_f = vec![0.0; batch * hidden];
    let mut da_i = vec![0.0; batch * hidden];
    let mut da_c = vec![0.0; batch * hidden];
    let mut da_o = vec![0.0; batch * hidden];
    let mut dz = vec![0.0; batch * width];

    for t in (0..t_len).rev() {
        let step = &cache.steps[t];
        {
            let dhd = dh.data();
            let dcd = dc.data_mut();
            for idx in 0..batch * hidden {
                let f = step.f.data()[idx];
                let i = step.i.data()[idx];
                let c_bar = step.c_bar.data()[idx];
                let o = step.o.data()[idx];
                let tc = step.tanh_c.data()[idx];

                let d_o = dhd[idx] * tc;
                let d_c = dcd[idx] + dhd[idx] * o * (1.0 - tc * tc);
                let d_f = d_c * step.c_prev.data()[idx];
                let d_i = d_c * c_bar;
                let d_cbar = d_c * i;

                da_f[idx] = d_f * f * (1.0 - f);
                da_i[idx] = d_i * i * (1.0 - i);
                da_c[idx] = d_cbar * (1.0 - c_bar * c_bar);
                da_o[idx] = d_o * o * (1.0 - o);

                // Gradient flowing into the previous cell state.
                dcd[idx] = d_c * f;
            }
        }

        // Parameter gradients: gW[h,k] += da[b,h] * z[b,k]; gb[h] += da[b,h].
        let zd = step.z.data();
        for (da, gw, gb) in [
            (&da_f, &mut grads.w_f, &mut grads.b_f),
            (&da_i, &mut grads.w_i, &mut grads.b_i),
            (&da_c, &mut grads.w_c, &mut grads.b_c),
            (&da_o, &mut grads.w_o, &mut grads.b_o),
        ] {
            let gwd = gw.data_mut();
            let gbd = gb.data_mut();
            for b in 0..batch {
                let zrow = &zd[b * width..(b + 1) * width];
                for h in 0..hidden {
                    let a = da[b * hidden + h];
                    if a == 0.0 {
                        continue;
                    }
                    gbd[h] += a;
                    let grow = &mut gwd[h * width..(h + 1) * width];
                    for (g, z) in grow.iter_mut().zip(zrow.iter()) {
                        *g += a * z;
                    }
                }
            }
        }

        // dz[b,k] = sum over gates and h of w[h,k] * da[b,h].
        dz.iter_mut().for_each(|v| *v = 0.0);
        for (da, w) in [
            (&da_f, &p.w_f),
            (&da_i, &p.w_i),
            (&da_c, &p.w_c),
            (&da_o, &p.w_o),
        ] {
            let wd = w.data();
            for b in 0..batch {
                let dzrow = &mut dz[b * width..(b + 1) * width];
                for h in 0..hidden {
                    let a = da[b * hidden + h];
                    if a == 0.0 {
                        continue;
                    }
                    let wrow = &wd[h * width..(h + 1) * width];
                    for (d, w) in dzrow.iter_mut().zip(wrow.iter()) {
                        *d += a * w;
                    }
                }
            }
        }

        // Split dz into dh_prev (first `hidden` entries) and dx_t (rest).
        {
            let dhd = dh.data_mut();
            let gxd = grad_x_seq.data_mut();
            for b in 0..batch {
                dhd[b * hidden..(b + 1) * hidden]
                    .copy_from_slice(&dz[b * width..b * width + hidden]);
                let dst = (b * t_len + t) * input;
                gxd[dst..dst + input].copy_from_slice(&dz[b * width + hidden..(b + 1) * width]);
            }
        }
    }

    Ok((grad_x_seq, grads))
}

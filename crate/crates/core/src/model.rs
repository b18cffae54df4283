//! The per-building forecaster: Conv1D over the feature axis, an LSTM over
//! the conv channels, and two dense layers, with exact analytic gradients.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{conv1d_backward, conv1d_forward, Conv1DParams, Conv1dCache, Conv1dGrads};
use crate::nn::dense::{dense_backward, dense_forward, DenseCache, DenseGrads, DenseParams};
use crate::nn::dropout::{dropout, Mode};
use crate::nn::loss::LossKind;
use crate::nn::lstm::{
    lstm_backward, lstm_sequence_forward, LSTMParams, LstmGrads, LstmSeqCache,
};
use crate::nn::relu_mask;
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"CLSTM1";
const VERSION: u32 = 1;

/// The three monitored buildings, each with its own architecture preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Building {
    A,
    B,
    C,
}

impl Building {
    pub const ALL: [Building; 3] = [Building::A, Building::B, Building::C];

    pub fn id(self) -> &'static str {
        match self {
            Building::A => "A",
            Building::B => "B",
            Building::C => "C",
        }
    }
}

impl std::str::FromStr for Building {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Building::A),
            "B" => Ok(Building::B),
            "C" => Ok(Building::C),
            other => Err(Error::InvalidArgument(format!(
                "unknown building '{}', expected A, B, or C",
                other
            ))),
        }
    }
}

impl std::fmt::Display for Building {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Architecture hyperparameters.
///
/// Inputs are windows `[batch, window_length, lstm_input]`. The convolution
/// runs along the feature axis with the `window_length` timesteps as input
/// channels, and its `conv_out_channels` output channels become the LSTM's
/// sequence axis, so the LSTM consumes `conv_out_channels` steps of
/// `lstm_input` values each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvLSTMConfig {
    pub window_length: usize,
    pub conv_out_channels: usize,
    pub kernel_size: usize,
    pub padding: usize,
    pub stride: usize,
    pub lstm_input: usize,
    pub lstm_hidden: usize,
    pub dropout_rate: f64,
    pub fc1_out: usize,
    pub fc2_out: usize,
}

impl ConvLSTMConfig {
    pub fn for_building(building: Building) -> Self {
        let (window_length, conv_out_channels) = match building {
            Building::A => (7, 64),
            Building::B => (5, 64),
            Building::C => (3, 32),
        };
        ConvLSTMConfig {
            window_length,
            conv_out_channels,
            kernel_size: 3,
            padding: 1,
            stride: 1,
            lstm_input: 8,
            lstm_hidden: 32,
            dropout_rate: 0.1,
            fc1_out: 10,
            fc2_out: 1,
        }
    }

    /// Spatial length of the conv output, which is also the LSTM input size.
    fn conv_output_len(&self) -> usize {
        (self.lstm_input + 2 * self.padding - self.kernel_size) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("window_length", self.window_length),
            ("conv_out_channels", self.conv_out_channels),
            ("kernel_size", self.kernel_size),
            ("stride", self.stride),
            ("lstm_input", self.lstm_input),
            ("lstm_hidden", self.lstm_hidden),
            ("fc1_out", self.fc1_out),
            ("fc2_out", self.fc2_out),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{} must be positive", name)));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.lstm_input + 2 * self.padding < self.kernel_size {
            return Err(Error::Config(format!(
                "kernel {} exceeds padded feature length {}",
                self.kernel_size,
                self.lstm_input + 2 * self.padding
            )));
        }
        // The conv output feeds the LSTM as `lstm_input`-wide steps, so the
        // convolution must preserve the feature-axis length.
        if self.conv_output_len() != self.lstm_input {
            return Err(Error::Config(format!(
                "conv output length {} must equal lstm_input {} \
                 (choose kernel/padding/stride that preserve length)",
                self.conv_output_len(),
                self.lstm_input
            )));
        }
        Ok(())
    }
}

/// All learnable tensors plus the config and the seed they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv: Conv1DParams,
    pub lstm: LSTMParams,
    pub fc1: DenseParams,
    pub fc2: DenseParams,
    pub config: ConvLSTMConfig,
    pub seed: u64,
}

/// Number of learnable tensors in a model.
pub const PARAM_TENSORS: usize = 14;

impl ModelParams {
    /// Learnable tensors in declaration order. This order fixes the
    /// parameter-file layout and pairs with [`ModelGrads::tensors`].
    pub fn tensors(&self) -> [&Tensor; PARAM_TENSORS] {
        [
            &self.conv.kernels,
            &self.conv.bias,
            &self.lstm.w_f,
            &self.lstm.w_i,
            &self.lstm.w_c,
            &self.lstm.w_o,
            &self.lstm.b_f,
            &self.lstm.b_i,
            &self.lstm.b_c,
            &self.lstm.b_o,
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; PARAM_TENSORS] {
        [
            &mut self.conv.kernels,
            &mut self.conv.bias,
            &mut self.lstm.w_f,
            &mut self.lstm.w_i,
            &mut self.lstm.w_c,
            &mut self.lstm.w_o,
            &mut self.lstm.b_f,
            &mut self.lstm.b_i,
            &mut self.lstm.b_c,
            &mut self.lstm.b_o,
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }

    pub fn tensor_names() -> [&'static str; PARAM_TENSORS] {
        [
            "conv.kernels",
            "conv.bias",
            "lstm.w_f",
            "lstm.w_i",
            "lstm.w_c",
            "lstm.w_o",
            "lstm.b_f",
            "lstm.b_i",
            "lstm.b_c",
            "lstm.b_o",
            "fc1.weight",
            "fc1.bias",
            "fc2.weight",
            "fc2.bias",
        ]
    }

    /// Errors unless the stored config equals `expected`.
    pub fn ensure_config(&self, expected: &ConvLSTMConfig) -> Result<()> {
        if self.config != *expected {
            return Err(Error::ConfigMismatch(format!(
                "loaded model config {:?} does not match expected {:?}",
                self.config, expected
            )));
        }
        Ok(())
    }
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub conv: Conv1dGrads,
    pub lstm: LstmGrads,
    pub fc1: DenseGrads,
    pub fc2: DenseGrads,
}

impl ModelGrads {
    pub fn tensors(&self) -> [&Tensor; PARAM_TENSORS] {
        [
            &self.conv.kernels,
            &self.conv.bias,
            &self.lstm.w_f,
            &self.lstm.w_i,
            &self.lstm.w_c,
            &self.lstm.w_o,
            &self.lstm.b_f,
            &self.lstm.b_i,
            &self.lstm.b_c,
            &self.lstm.b_o,
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
        ]
    }
}

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
fn glorot_fill<R: Rng>(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut R) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut().iter_mut() {
        *v = rng.random::<f64>() * 2.0 * bound - bound;
    }
}

/// Initializes a model deterministically from `seed`: weights Glorot-uniform
/// (drawn in declaration order), biases zero.
pub fn build_model(config: &ConvLSTMConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (l, oc, k) = (config.window_length, config.conv_out_channels, config.kernel_size);
    let (hidden, input) = (config.lstm_hidden, config.lstm_input);

    let mut conv = Conv1DParams {
        kernels: Tensor::zeros(&[oc, l, k]),
        bias: Tensor::zeros(&[oc]),
        stride: config.stride,
        padding: config.padding,
    };
    glorot_fill(&mut conv.kernels, l * k, oc * k, &mut rng);

    let mut lstm = LSTMParams::zeros(hidden, input);
    for w in [&mut lstm.w_f, &mut lstm.w_i, &mut lstm.w_c, &mut lstm.w_o] {
        glorot_fill(w, hidden + input, hidden, &mut rng);
    }

    let mut fc1 = DenseParams::zeros(hidden, config.fc1_out);
    glorot_fill(&mut fc1.weight, hidden, config.fc1_out, &mut rng);
    let mut fc2 = DenseParams::zeros(config.fc1_out, config.fc2_out);
    glorot_fill(&mut fc2.weight, config.fc1_out, config.fc2_out, &mut rng);

    Ok(ModelParams {
        conv,
        lstm,
        fc1,
        fc2,
        config: *config,
        seed,
    })
}

/// Relabels windows `[batch, L, features]` as conv input
/// `[batch, in_channels = L, length = features]`. Row-major layouts
/// coincide, so this is a pure reinterpretation; it is the single point
/// encoding the timesteps-as-channels reading of the architecture.
fn windows_as_conv_input(x: &Tensor) -> Tensor {
    x.clone()
}

/// Relabels conv activations `[batch, out_channels, length]` as an LSTM
/// input sequence `[batch, T = out_channels, input = length]`; the inverse
/// relabeling applies to gradients.
fn conv_activations_as_sequence(a: &Tensor) -> Tensor {
    a.clone()
}

/// Saved intermediates for one forward pass.
pub struct ModelCache {
    conv: Conv1dCache,
    conv_relu_mask: Tensor,
    lstm: LstmSeqCache,
    dropout_mask: Tensor,
    hidden_relu_mask: Tensor,
    fc1: DenseCache,
    fc1_relu_mask: Tensor,
    fc2: DenseCache,
}

fn check_input(config: &ConvLSTMConfig, x: &Tensor) -> Result<()> {
    if x.rank() != 3 || x.dim(1) != config.window_length || x.dim(2) != config.lstm_input {
        return Err(Error::Shape(format!(
            "input shape {:?} does not match [batch, {}, {}]",
            x.shape(),
            config.window_length,
            config.lstm_input
        )));
    }
    Ok(())
}

/// Full pipeline: conv1d, ReLU, LSTM over conv channels, dropout, ReLU,
/// fc1, ReLU, fc2 (linear). Returns predictions `[batch, 1]` and the cache
/// for [`model_backward`].
pub fn forward<R: Rng>(
    params: &ModelParams,
    x: &Tensor,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, ModelCache)> {
    check_input(&params.config, x)?;

    let conv_in = windows_as_conv_input(x);
    let (conv_out, conv_cache) = conv1d_forward(&conv_in, &params.conv)?;
    let conv_relu_mask = relu_mask(&conv_out);
    let conv_act = conv_out.hadamard(&conv_relu_mask);

    let seq = conv_activations_as_sequence(&conv_act);
    let (h_last, lstm_cache) = lstm_sequence_forward(&seq, &params.lstm)?;

    let (dropped, dropout_mask) = dropout(&h_last, params.config.dropout_rate, mode, rng)?;
    let hidden_relu_mask = relu_mask(&dropped);
    let hidden_act = dropped.hadamard(&hidden_relu_mask);

    let (fc1_out, fc1_cache) = dense_forward(&hidden_act, &params.fc1)?;
    let fc1_relu_mask = relu_mask(&fc1_out);
    let fc1_act = fc1_out.hadamard(&fc1_relu_mask);

    let (pred, fc2_cache) = dense_forward(&fc1_act, &params.fc2)?;

    Ok((
        pred,
        ModelCache {
            conv: conv_cache,
            conv_relu_mask,
            lstm: lstm_cache,
            dropout_mask,
            hidden_relu_mask,
            fc1: fc1_cache,
            fc1_relu_mask,
            fc2: fc2_cache,
        },
    ))
}

/// Deterministic eval-mode predictions (dropout inactive, no RNG draws).
pub fn predict(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(forward(params, x, Mode::Eval, &mut rng)?.0)
}

/// Walks the analytic adjoints in reverse layer order from an upstream
/// gradient on the predictions. Exposed separately from the loss so callers
/// can compose either objective.
pub fn model_backward(
    params: &ModelParams,
    cache: &ModelCache,
    upstream: &Tensor,
) -> Result<ModelGrads> {
    let (grad_fc1_act, fc2_grads) = dense_backward(upstream, &cache.fc2, &params.fc2)?;
    let grad_fc1_out = grad_fc1_act.hadamard(&cache.fc1_relu_mask);
    let (grad_hidden_act, fc1_grads) = dense_backward(&grad_fc1_out, &cache.fc1, &params.fc1)?;

    let grad_dropped = grad_hidden_act.hadamard(&cache.hidden_relu_mask);
    let grad_h = grad_dropped.hadamard(&cache.dropout_mask);

    let (grad_seq, lstm_grads) = lstm_backward(&grad_h, &cache.lstm, &params.lstm)?;
    let grad_conv_act = conv_activations_as_sequence(&grad_seq);
    let grad_conv_out = grad_conv_act.hadamard(&cache.conv_relu_mask);
    let (_, conv_grads) = conv1d_backward(&grad_conv_out, &cache.conv, &params.conv)?;

    Ok(ModelGrads {
        conv: conv_grads,
        lstm: lstm_grads,
        fc1: fc1_grads,
        fc2: fc2_grads,
    })
}

/// Train-mode forward plus loss plus full backward pass.
///
/// `y` must be `[batch, 1]`. A non-finite loss raises the non-finite-loss
/// error with epoch and batch zero; the training loop rewrites those fields
/// with its actual position.
pub fn forward_backward<R: Rng>(
    params: &ModelParams,
    x: &Tensor,
    y: &Tensor,
    loss: LossKind,
    rng: &mut R,
) -> Result<(f64, ModelGrads)> {
    let (pred, cache) = forward(params, x, Mode::Train, rng)?;
    let (loss_value, grad_pred) = loss.compute(&pred, y)?;
    if !loss_value.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            value: loss_value,
        });
    }
    let grads = model_backward(params, &cache, &grad_pred)?;
    Ok((loss_value, grads))
}

fn write_tensor(out: &mut impl Write, t: &Tensor) -> Result<()> {
    out.write_u32::<LittleEndian>(t.rank() as u32)?;
    for &d in t.shape() {
        out.write_u32::<LittleEndian>(d as u32)?;
    }
    for &v in t.data() {
        out.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_tensor(inp: &mut impl Read, name: &str, expected: &[usize]) -> Result<Tensor> {
    let fail = |what: &str| Error::ModelFormat(format!("{}: {}", name, what));
    let rank = inp
        .read_u32::<LittleEndian>()
        .map_err(|_| fail("truncated rank"))? as usize;
    if rank != expected.len() {
        return Err(fail(&format!(
            "rank {} does not match expected {:?}",
            rank, expected
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(
            inp.read_u32::<LittleEndian>()
                .map_err(|_| fail("truncated dims"))? as usize,
        );
    }
    if dims != expected {
        return Err(fail(&format!(
            "shape {:?} does not match expected {:?}",
            dims, expected
        )));
    }
    let mut data = vec![0.0; dims.iter().product()];
    inp.read_f64_into::<LittleEndian>(&mut data)
        .map_err(|_| fail("truncated data"))?;
    Tensor::from_vec(data, &dims)
}

fn expected_shapes(config: &ConvLSTMConfig) -> [Vec<usize>; PARAM_TENSORS] {
    let (l, oc, k) = (config.window_length, config.conv_out_channels, config.kernel_size);
    let (h, i) = (config.lstm_hidden, config.lstm_input);
    let gate = vec![h, h + i];
    [
        vec![oc, l, k],
        vec![oc],
        gate.clone(),
        gate.clone(),
        gate.clone(),
        gate,
        vec![h],
        vec![h],
        vec![h],
        vec![h],
        vec![config.fc1_out, h],
        vec![config.fc1_out],
        vec![config.fc2_out, config.fc1_out],
        vec![config.fc2_out],
    ]
}

/// Writes the parameter file: magic, version, config, seed, then every
/// learnable tensor in declaration order (rank, dims, little-endian f64s).
pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    let c = &params.config;
    for v in [
        c.window_length,
        c.conv_out_channels,
        c.kernel_size,
        c.padding,
        c.stride,
        c.lstm_input,
        c.lstm_hidden,
        c.fc1_out,
        c.fc2_out,
    ] {
        out.write_u32::<LittleEndian>(v as u32)?;
    }
    out.write_f64::<LittleEndian>(c.dropout_rate)?;
    out.write_u64::<LittleEndian>(params.seed)?;
    for t in params.tensors() {
        write_tensor(&mut out, t)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let mut inp = BufReader::new(std::fs::File::open(path)?);
    let fail = |what: &str| Error::ModelFormat(format!("{}: {}", path.display(), what));

    let mut magic = [0u8; 6];
    inp.read_exact(&mut magic).map_err(|_| fail("truncated magic"))?;
    if &magic != MAGIC {
        return Err(fail(&format!("bad magic {:?}", magic)));
    }
    let version = inp.read_u32::<LittleEndian>().map_err(|_| fail("truncated version"))?;
    if version != VERSION {
        return Err(fail(&format!("unsupported version {}", version)));
    }

    let mut dims = [0usize; 9];
    for d in dims.iter_mut() {
        *d = inp.read_u32::<LittleEndian>().map_err(|_| fail("truncated config"))? as usize;
    }
    let dropout_rate = inp.read_f64::<LittleEndian>().map_err(|_| fail("truncated config"))?;
    let seed = inp.read_u64::<LittleEndian>().map_err(|_| fail("truncated seed"))?;
    let config = ConvLSTMConfig {
        window_length: dims[0],
        conv_out_channels: dims[1],
        kernel_size: dims[2],
        padding: dims[3],
        stride: dims[4],
        lstm_input: dims[5],
        lstm_hidden: dims[6],
        fc1_out: dims[7],
        fc2_out: dims[8],
        dropout_rate,
    };
    config.validate()?;

    let shapes = expected_shapes(&config);
    let names = ModelParams::tensor_names();
    let mut tensors = Vec::with_capacity(PARAM_TENSORS);
    for (name, shape) in names.iter().zip(shapes.iter()) {
        tensors.push(read_tensor(&mut inp, name, shape)?);
    }
    let mut trailing = [0u8; 1];
    if inp.read(&mut trailing)? != 0 {
        return Err(fail("trailing bytes after tensors"));
    }

    let mut it = tensors.into_iter();
    let mut next = || it.next().expect("tensor count fixed above");
    let conv = Conv1DParams {
        kernels: next(),
        bias: next(),
        stride: config.stride,
        padding: config.padding,
    };
    let lstm = LSTMParams {
        w_f: next(),
        w_i: next(),
        w_c: next(),
        w_o: next(),
        b_f: next(),
        b_i: next(),
        b_c: next(),
        b_o: next(),
    };
    let fc1 = DenseParams {
        weight: next(),
        bias: next(),
    };
    let fc2 = DenseParams {
        weight: next(),
        bias: next(),
    };
    Ok(ModelParams {
        conv,
        lstm,
        fc1,
        fc2,
        config,
        seed,
    })
}

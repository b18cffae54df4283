//! 1-D convolution (deep-learning convention: cross-correlation) with an
//! exact analytic backward pass.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable parameters of a Conv1D layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DParams {
    /// Filter bank, shape `[out_channels, in_channels, kernel_size]`.
    pub kernels: Tensor,
    /// Per-output-channel bias, shape `[out_channels]`.
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1DParams {
    pub fn out_channels(&self) -> usize {
        self.kernels.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.dim(1)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.dim(2)
    }

    /// `L_out = floor((L_in + 2*padding - kernel_size) / stride) + 1`.
    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        let padded = input_len + 2 * self.padding;
        if padded < self.kernel_size() {
            return Err(Error::Shape(format!(
                "input length {} with padding {} is shorter than kernel {}",
                input_len,
                self.padding,
                self.kernel_size()
            )));
        }
        Ok((padded - self.kernel_size()) / self.stride + 1)
    }
}

/// Forward inputs retained for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv1dCache {
    pub(crate) x: Tensor,
}

/// Parameter gradients for a Conv1D layer.
#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Zero-padded cross-correlation plus per-channel bias.
///
/// `x` has shape `[batch, in_channels, L_in]`; output has shape
/// `[batch, out_channels, L_out]`.
pub fn conv1d_forward(x: &Tensor, p: &Conv1DParams) -> Result<(Tensor, Conv1dCache)> {
    if x.rank() != 3 {
        return Err(Error::Shape(format!(
            "conv input must be rank 3, got {:?}",
            x.shape()
        )));
    }
    if p.stride == 0 {
        return Err(Error::Shape("conv stride must be >= 1".into()));
    }
    let (batch, in_ch, l_in) = (x.dim(0), x.dim(1), x.dim(2));
    if in_ch != p.in_channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            p.in_channels(),
            in_ch
        )));
    }
    let l_out = p.output_len(l_in)?;
    let (out_ch, ksize) = (p.out_channels(), p.kernel_size());

    let mut out = Tensor::zeros(&[batch, out_ch, l_out]);
    let kdata = p.kernels.data();
    let xdata = x.data();
    let odata = out.data_mut();
    for b in 0..batch {
        for oc in 0..out_ch {
            let bias = p.bias.data()[oc];
            for j in 0..l_out {
                let mut acc = bias;
                // Window start in padded coordinates; padding contributes zeros.
                let base = (j * p.stride) as isize - p.padding as isize;
                for ic in 0..in_ch {
                    let krow = (oc * in_ch + ic) * ksize;
                    let xrow = (b * in_ch + ic) * l_in;
                    for k in 0..ksize {
                        let pos = base + k as isize;
                        if pos >= 0 && (pos as usize) < l_in {
                            acc += kdata[krow + k] * xdata[xrow + pos as usize];
                        }
                    }
                }
                odata[(b * out_ch + oc) * l_out + j] = acc;
            }
        }
    }
    Ok((out, Conv1dCache { x: x.clone() }))
}

/// Adjoints of `conv1d_forward`: gradients for the input, the kernels, and
/// the bias given the upstream gradient on the output.
pub fn conv1d_backward(
    upstream: &Tensor,
    cache: &Conv1dCache,
    p: &Conv1DParams,
) -> Result<(Tensor, Conv1dGrads)> {
    let x = &cache.x;
    let (batch, in_ch, l_in) = (x.dim(0), x.dim(1), x.dim(2));
    let l_out = p.output_len(l_in)?;
    let (out_ch, ksize) = (p.out_channels(), p.kernel_size());
    if upstream.shape() != [batch, out_ch, l_out] {
        return Err(Error::Shape(format!(
            "upstream shape {:?} does not match forward output [{}, {}, {}]",
            upstream.shape(),
            batch,
            out_ch,
            l_out
        )));
    }

    let mut grad_x = Tensor::zeros(&[batch, in_ch, l_in]);
    let mut grad_k = Tensor::zeros(&[out_ch, in_ch, ksize]);
    let mut grad_b = Tensor::zeros(&[out_ch]);

    let udata = upstream.data();
    let xdata = x.data();
    let kdata = p.kernels.data();
    for b in 0..batch {
        for oc in 0..out_ch {
            for j in 0..l_out {
                let g = udata[(b * out_ch + oc) * l_out + j];
                if g == 0.0 {
                    continue;
                }
                grad_b.data_mut()[oc] += g;
                let base = (j * p.stride) as isize - p.padding as isize;
                for ic in 0..in_ch {
                    let krow = (oc * in_ch + ic) * ksize;
                    let xrow = (b * in_ch + ic) * l_in;
                    for k in 0..ksize {
                        let pos = base + k as isize;
                        if pos >= 0 && (pos as usize) < l_in {
                            let pos = pos as usize;
                            grad_k.data_mut()[krow + k] += g * xdata[xrow + pos];
                            grad_x.data_mut()[xrow + pos] += g * kdata[krow + k];
                        }
                    }
                }
            }
        }
    }
    Ok((
        grad_x,
        Conv1dGrads {
            kernels: grad_k,
            bias: grad_b,
        },
    ))
}

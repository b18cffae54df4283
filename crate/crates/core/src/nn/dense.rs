//! Fully connected layer: `y[b,o] = sum_i w[o,i] * x[b,i] + bias[o]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[out, in]`.
    pub weight: Tensor,
    /// `[out]`.
    pub bias: Tensor,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn output_size(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.rank() != 2 || self.bias.rank() != 1 {
            return Err(Error::Shape("dense weight must be [out, in], bias [out]".into()));
        }
        if self.bias.dim(0) != self.weight.dim(0) {
            return Err(Error::Shape(format!(
                "dense bias length {} does not match out dim {}",
                self.bias.dim(0),
                self.weight.dim(0)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub(crate) x: Tensor, // [batch, in]
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<(Tensor, DenseCache)> {
    p.validate()?;
    if x.rank() != 2 {
        return Err(Error::Shape(format!(
            "dense input must be [batch, in], got {:?}",
            x.shape()
        )));
    }
    let (batch, input) = (x.dim(0), x.dim(1));
    if input != p.input_size() {
        return Err(Error::Shape(format!(
            "dense expects input size {}, got {}",
            p.input_size(),
            input
        )));
    }
    let output = p.output_size();
    let mut y = Tensor::zeros(&[batch, output]);
    {
        let xd = x.data();
        let wd = p.weight.data();
        let bd = p.bias.data();
        let yd = y.data_mut();
        for b in 0..batch {
            let xrow = &xd[b * input..(b + 1) * input];
            for o in 0..output {
                let wrow = &wd[o * input..(o + 1) * input];
                yd[b * output + o] = crate::nn::dot4(wrow, xrow) + bd[o];
            }
        }
    }
    Ok((y, DenseCache { x: x.clone() }))
}

/// Returns `(grad_x, grads)` for upstream `[batch, out]`:
/// `grad_w[o,i] = sum_b up[b,o] x[b,i]`, `grad_b[o] = sum_b up[b,o]`,
/// `grad_x[b,i] = sum_o up[b,o] w[o,i]`.
pub fn dense_backward(
    upstream: &Tensor,
    cache: &DenseCache,
    p: &DenseParams,
) -> Result<(Tensor, DenseGrads)> {
    let (batch, input) = (cache.x.dim(0), cache.x.dim(1));
    let output = p.output_size();
    if upstream.shape() != [batch, output] {
        return Err(Error::Shape(format!(
            "dense upstream shape {:?} does not match [batch={}, out={}]",
            upstream.shape(),
            batch,
            output
        )));
    }

    let mut grad_w = Tensor::zeros(&[output, input]);
    let mut grad_b = Tensor::zeros(&[output]);
    let mut grad_x = Tensor::zeros(&[batch, input]);
    let ud = upstream.data();
    let xd = cache.x.data();
    let wd = p.weight.data();
    {
        let gwd = grad_w.data_mut();
        let gbd = grad_b.data_mut();
        let gxd = grad_x.data_mut();
        for b in 0..batch {
            let xrow = &xd[b * input..(b + 1) * input];
            let gxrow = &mut gxd[b * input..(b + 1) * input];
            for o in 0..output {
                let u = ud[b * output + o];
                if u == 0.0 {
                    continue;
                }
                gbd[o] += u;
                let wrow = &wd[o * input..(o + 1) * input];
                let gwrow = &mut gwd[o * input..(o + 1) * input];
                for i in 0..input {
                    gwrow[i] += u * xrow[i];
                    gxrow[i] += u * wrow[i];
                }
            }
        }
    }
    Ok((
        grad_x,
        DenseGrads {
            weight: grad_w,
            bias: grad_b,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input_through() {
        let mut p = DenseParams::zeros(3, 3);
        for k in 0..3 {
            p.weight.data_mut()[k * 3 + k] = 1.0;
        }
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.5], &[2, 3]).unwrap();
        let (y, _) = dense_forward(&x, &p).unwrap();
        assert!(y.bits_eq(&x));
    }

    #[test]
    fn known_small_case() {
        // y = [[1,2],[3,4]] x + [10, 20] for x = [1, 1]: y = [13, 27].
        let p = DenseParams {
            weight: Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap(),
            bias: Tensor::from_vec(vec![10.0, 20.0], &[2]).unwrap(),
        };
        let x = Tensor::from_vec(vec![1.0, 1.0], &[1, 2]).unwrap();
        let (y, _) = dense_forward(&x, &p).unwrap();
        assert_eq!(y.data(), &[13.0, 27.0]);
    }

    #[test]
    fn backward_matches_direct_loop_oracle() {
        let (batch, input, output) = (3, 4, 2);
        let gen = |n: usize, s: f64| -> Vec<f64> {
            (0..n).map(|k| ((k as f64 + s) * 0.43).sin()).collect()
        };
        let p = DenseParams {
            weight: Tensor::from_vec(gen(output * input, 1.0), &[output, input]).unwrap(),
            bias: Tensor::from_vec(gen(output, 2.0), &[output]).unwrap(),
        };
        let x = Tensor::from_vec(gen(batch * input, 3.0), &[batch, input]).unwrap();
        let up = Tensor::from_vec(gen(batch * output, 4.0), &[batch, output]).unwrap();

        let (_, cache) = dense_forward(&x, &p).unwrap();
        let (gx, grads) = dense_backward(&up, &cache, &p).unwrap();

        for o in 0..output {
            let mut gb = 0.0;
            for b in 0..batch {
                gb += up.data()[b * output + o];
            }
            assert!((grads.bias.data()[o] - gb).abs() < 1e-12);
            for i in 0..input {
                let mut gw = 0.0;
                for b in 0..batch {
                    gw += up.data()[b * output + o] * x.data()[b * input + i];
                }
                assert!((grads.weight.data()[o * input + i] - gw).abs() < 1e-12);
            }
        }
        for b in 0..batch {
            for i in 0..input {
                let mut g = 0.0;
                for o in 0..output {
                    g += up.data()[b * output + o] * p.weight.data()[o * input + i];
                }
                assert!((gx.data()[b * input + i] - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_size_mismatch_is_rejected() {
        let p = DenseParams::zeros(4, 2);
        let x = Tensor::zeros(&[1, 3]);
        assert!(matches!(dense_forward(&x, &p), Err(Error::Shape(_))));
    }
}

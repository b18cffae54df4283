//! Elementwise activations with analytic backward closures.
//!
//! Each op returns the activated tensor together with a closure that maps an
//! upstream gradient to the gradient with respect to the input. The closures
//! capture whatever forward values the derivative needs.

use crate::tensor::Tensor;

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic sigmoid. Backward uses sigma' = sigma * (1 - sigma).
pub fn sigmoid(x: &Tensor) -> (Tensor, impl Fn(&Tensor) -> Tensor) {
    let out = x.map(sigmoid_scalar);
    let saved = out.clone();
    let backward = move |upstream: &Tensor| {
        debug_assert_eq!(upstream.shape(), saved.shape());
        upstream.zip_map(&saved, |g, y| g * y * (1.0 - y))
    };
    (out, backward)
}

/// Hyperbolic tangent. Backward uses tanh' = 1 - tanh^2.
pub fn tanh_op(x: &Tensor) -> (Tensor, impl Fn(&Tensor) -> Tensor) {
    let out = x.map(f64::tanh);
    let saved = out.clone();
    let backward = move |upstream: &Tensor| {
        debug_assert_eq!(upstream.shape(), saved.shape());
        upstream.zip_map(&saved, |g, y| g * (1.0 - y * y))
    };
    (out, backward)
}

/// Rectified linear unit. The derivative at exactly 0 is defined as 0.
pub fn relu(x: &Tensor) -> (Tensor, impl Fn(&Tensor) -> Tensor) {
    let mask = relu_mask(x);
    let out = x.hadamard(&mask);
    let backward = move |upstream: &Tensor| {
        debug_assert_eq!(upstream.shape(), mask.shape());
        upstream.hadamard(&mask)
    };
    (out, backward)
}

/// Pass-through indicator for ReLU: 1.0 where x > 0, else 0.0.
pub fn relu_mask(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

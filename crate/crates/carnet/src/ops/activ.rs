//! ReLU and numerically stable sigmoid.

use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    assert_eq!(x.shape(), grad_out.shape());
    let mut g = Tensor::zeros(x.shape());
    for ((o, &xv), &gy) in g.data_mut().iter_mut().zip(x.data()).zip(grad_out.data()) {
        *o = if xv > 0.0 { gy } else { 0.0 };
    }
    g
}

#[inline]
pub(crate) fn sigmoid_scalar(v: f32) -> f32 {
    // branch form: never exponentiates a large positive argument
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Takes the forward *output* `y = sigmoid(x)`: grad is `y * (1 - y) * dy`.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    assert_eq!(y.shape(), grad_out.shape());
    let mut g = Tensor::zeros(y.shape());
    for ((o, &yv), &gy) in g.data_mut().iter_mut().zip(y.data()).zip(grad_out.data()) {
        *o = yv * (1.0 - yv) * gy;
    }
    g
}

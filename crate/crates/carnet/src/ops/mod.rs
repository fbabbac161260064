//! Forward and backward kernels for every primitive in the CarNet graph.
//!
//! All ops are pure functions of their inputs (batch norm's train mode
//! mutates only its own running statistics). Convolution uses
//! cross-correlation semantics (no kernel flip). Results are bitwise
//! deterministic regardless of thread count: parallel splits never share an
//! accumulator and reductions run in a fixed order.

mod activ;
mod conv;
mod gemm;
mod merge;
mod norm;
mod pool;
mod resize;

pub use activ::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use conv::{
    conv2d, conv2d_backward, deconv2d, deconv2d_backward, deconv2d_output_shape,
    deconv_coverage_map, dilate_coverage, ConvParams,
};
pub use merge::{add, concat_backward, concat_channels};
pub use norm::{batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNormParams, BnCache};
pub use pool::{maxpool2, maxpool2_backward};
pub use resize::{bilinear_backward, bilinear_upsample};

/// `floor((in + 2*pad - k) / stride) + 1`, the closed-form conv output size.
pub fn conv_output_dim(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

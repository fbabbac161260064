//! Channel concatenation and elementwise addition.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stacks `a`'s channels before `b`'s; batch and spatial dims must agree.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::ShapeMismatch {
            what: "concat_channels",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Tensor::zeros([na, ca + cb, ha, wa]);
    let plane = ha * wa;
    for item in 0..na {
        let dst = &mut out.data_mut()[item * (ca + cb) * plane..(item + 1) * (ca + cb) * plane];
        dst[..ca * plane].copy_from_slice(&a.data()[item * ca * plane..(item + 1) * ca * plane]);
        dst[ca * plane..].copy_from_slice(&b.data()[item * cb * plane..(item + 1) * cb * plane]);
    }
    Ok(out)
}

/// Splits `grad_out` back into the two channel groups.
pub fn concat_backward(grad_out: &Tensor, ca: usize, cb: usize) -> (Tensor, Tensor) {
    let [n, c, h, w] = grad_out.shape();
    assert_eq!(c, ca + cb, "concat_backward channel split");
    let plane = h * w;
    let mut ga = Tensor::zeros([n, ca, h, w]);
    let mut gb = Tensor::zeros([n, cb, h, w]);
    for item in 0..n {
        let src = &grad_out.data()[item * c * plane..(item + 1) * c * plane];
        ga.data_mut()[item * ca * plane..(item + 1) * ca * plane]
            .copy_from_slice(&src[..ca * plane]);
        gb.data_mut()[item * cb * plane..(item + 1) * cb * plane]
            .copy_from_slice(&src[ca * plane..]);
    }
    (ga, gb)
}

/// Elementwise sum; shapes must be identical. Backward passes the gradient
/// through to both inputs unchanged.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            what: "elementwise add",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = a.clone();
    out.add_inplace(b)?;
    out.clear_grad();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn db1_channel_arithmetic() {
        let a = Tensor::zeros([1, 13, 6, 8]);
        let b = Tensor::zeros([1, 3, 6, 8]);
        assert_eq!(concat_channels(&a, &b).unwrap().shape(), [1, 16, 6, 8]);
    }

    #[test]
    fn concat_order_and_backward_split() {
        let mut rng = Rng::new(4);
        let a = Tensor::randn([2, 2, 3, 3], &mut rng, 0.0, 1.0);
        let b = Tensor::randn([2, 1, 3, 3], &mut rng, 0.0, 1.0);
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.at(1, 0, 2, 2), a.at(1, 0, 2, 2));
        assert_eq!(y.at(1, 2, 0, 1), b.at(1, 0, 0, 1));

        let ones = Tensor::from_vec(y.shape(), vec![1.0; y.numel()]);
        let (ga, gb) = concat_backward(&ones, 2, 1);
        assert!(ga.data().iter().all(|&v| v == 1.0));
        assert!(gb.data().iter().all(|&v| v == 1.0));
        assert_eq!(ga.shape(), a.shape());
        assert_eq!(gb.shape(), b.shape());
    }

    #[test]
    fn add_identity_and_mismatch() {
        let mut rng = Rng::new(6);
        let x = Tensor::randn([1, 2, 2, 2], &mut rng, 0.0, 1.0);
        let y = add(&x, &Tensor::zeros(x.shape())).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(add(&x, &Tensor::zeros([1, 2, 2, 3])).is_err());
    }
}

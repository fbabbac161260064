//! Convolution and transposed convolution, forward and backward.
//!
//! Both directions are im2col/col2im + GEMM. A transposed convolution is the
//! adjoint of the convolution with the same geometry, so the two share the
//! unfold/fold helpers with swapped roles. Work is split across batch items
//! (disjoint outputs, fixed reduction order), keeping results independent of
//! thread count.

use rayon::prelude::*;

use super::gemm::{col2im_add, im2col, sgemm, sgemm_strided};
use super::conv_output_dim;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights and geometry of one (de)convolution.
///
/// `weights` is `(c_out, c_in, kh, kw)` for both directions; `bias` is
/// `(1, c_out, 1, 1)` when present.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

impl ConvParams {
    pub fn new(
        c_in: usize,
        c_out: usize,
        (kh, kw): (usize, usize),
        (stride_h, stride_w): (usize, usize),
        (pad_h, pad_w): (usize, usize),
        with_bias: bool,
    ) -> ConvParams {
        assert!(stride_h >= 1 && stride_w >= 1, "stride must be positive");
        ConvParams {
            c_in,
            c_out,
            kh,
            kw,
            stride_h,
            stride_w,
            pad_h,
            pad_w,
            weights: Tensor::zeros([c_out, c_in, kh, kw]),
            bias: with_bias.then(|| Tensor::zeros([1, c_out, 1, 1])),
        }
    }

    pub fn has_bias(&self) -> bool {
        self.bias.is_some()
    }

    fn check_input(&self, x: &Tensor, what: &'static str) -> Result<()> {
        if x.shape()[1] != self.c_in {
            return Err(Error::ShapeMismatch {
                what,
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        Ok(())
    }
}

fn conv_out_dims(x: &Tensor, p: &ConvParams) -> Result<(usize, usize)> {
    let [_, _, h, w] = x.shape();
    let oh = conv_output_dim(h, p.kh, p.stride_h, p.pad_h);
    let ow = conv_output_dim(w, p.kw, p.stride_w, p.pad_w);
    match (oh, ow) {
        (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => Ok((oh, ow)),
        _ => Err(Error::ShapeMismatch {
            what: "conv2d output would be empty",
            left: x.shape(),
            right: p.weights.shape(),
        }),
    }
}

/// Cross-correlation (no kernel flip): `y[n,co,oh,ow] = b[co] +
/// sum_{ci,ki,kj} w[co,ci,ki,kj] * x[n,ci,oh*sh-ph+ki,ow*sw-pw+kj]`.
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    p.check_input(x, "conv2d input channels")?;
    let (oh, ow) = conv_out_dims(x, p)?;
    let [n, _, h, w] = x.shape();
    let k_dim = p.c_in * p.kh * p.kw;
    let n_cols = oh * ow;
    let mut out = Tensor::zeros([n, p.c_out, oh, ow]);

    let run_item = |x_item: &[f32], out_item: &mut [f32]| {
        let mut cols = vec![0.0f32; k_dim * n_cols];
        im2col(
            x_item, p.c_in, h, w, p.kh, p.kw, p.stride_h, p.stride_w, p.pad_h, p.pad_w, oh, ow,
            &mut cols,
        );
        sgemm(p.c_out, k_dim, n_cols, p.weights.data(), &cols, 0.0, out_item);
        if let Some(b) = &p.bias {
            for (co, &bv) in b.data().iter().enumerate() {
                out_item[co * n_cols..(co + 1) * n_cols]
                    .iter_mut()
                    .for_each(|v| *v += bv);
            }
        }
    };

    let in_stride = p.c_in * h * w;
    let out_stride = p.c_out * n_cols;
    if n > 1 {
        out.data_mut()
            .par_chunks_mut(out_stride)
            .zip(x.data().par_chunks(in_stride))
            .for_each(|(out_item, x_item)| run_item(x_item, out_item));
    } else if n == 1 {
        run_item(x.data(), out.data_mut());
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weights, and bias.
pub fn conv2d_backward(
    x: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    p.check_input(x, "conv2d input channels")?;
    let (oh, ow) = conv_out_dims(x, p)?;
    let [n, _, h, w] = x.shape();
    if grad_out.shape() != [n, p.c_out, oh, ow] {
        return Err(Error::ShapeMismatch {
            what: "conv2d grad_out",
            left: grad_out.shape(),
            right: [n, p.c_out, oh, ow],
        });
    }
    let k_dim = p.c_in * p.kh * p.kw;
    let n_cols = oh * ow;
    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_w = Tensor::zeros(p.weights.shape());

    let in_stride = p.c_in * h * w;
    let out_stride = p.c_out * n_cols;

    // Per-item work: grad_x lands in the item's own slice, grad_w in an
    // item-local scratch that is summed afterwards in batch order.
    let run_item = |x_item: &[f32], gy_item: &[f32], gx_item: &mut [f32]| -> Vec<f32> {
        let mut cols = vec![0.0f32; k_dim * n_cols];
        im2col(
            x_item, p.c_in, h, w, p.kh, p.kw, p.stride_h, p.stride_w, p.pad_h, p.pad_w, oh, ow,
            &mut cols,
        );
        let mut gw_item = vec![0.0f32; p.c_out * k_dim];
        // grad_w += grad_y @ cols^T
        sgemm_strided(
            p.c_out, n_cols, k_dim, 1.0, gy_item, n_cols as isize, 1, &cols, 1, n_cols as isize,
            0.0, &mut gw_item,
        );
        // grad_cols = W^T @ grad_y, then fold back onto the input grid.
        let mut grad_cols = vec![0.0f32; k_dim * n_cols];
        sgemm_strided(
            k_dim, p.c_out, n_cols, 1.0, p.weights.data(), 1, k_dim as isize, gy_item,
            n_cols as isize, 1, 0.0, &mut grad_cols,
        );
        col2im_add(
            &grad_cols, p.c_in, p.kh, p.kw, oh, ow, p.stride_h, p.stride_w, p.pad_h, p.pad_w, h,
            w, gx_item,
        );
        gw_item
    };

    let gw_items: Vec<Vec<f32>> = if n > 1 {
        grad_x
            .data_mut()
            .par_chunks_mut(in_stride)
            .zip(x.data().par_chunks(in_stride))
            .zip(grad_out.data().par_chunks(out_stride))
            .map(|((gx_item, x_item), gy_item)| run_item(x_item, gy_item, gx_item))
            .collect()
    } else if n == 1 {
        vec![run_item(x.data(), grad_out.data(), grad_x.data_mut())]
    } else {
        Vec::new()
    };
    for gw_item in &gw_items {
        for (acc, v) in grad_w.data_mut().iter_mut().zip(gw_item) {
            *acc += v;
        }
    }

    let grad_b = p.bias.as_ref().map(|_| {
        let mut gb = Tensor::zeros([1, p.c_out, 1, 1]);
        for item in 0..n {
            let gy_item = &grad_out.data()[item * out_stride..(item + 1) * out_stride];
            for co in 0..p.c_out {
                let s: f32 = gy_item[co * n_cols..(co + 1) * n_cols].iter().sum();
                gb.data_mut()[co] += s;
            }
        }
        gb
    });

    Ok((grad_x, grad_w, grad_b))
}

/// Output spatial size of a transposed convolution:
/// `(in - 1) * stride - 2 * pad + k + output_padding`.
pub fn deconv2d_output_shape(
    input: usize,
    k: usize,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Result<usize> {
    let grown = (input - 1) * stride + k + output_padding;
    if grown <= 2 * pad {
        return Err(Error::InvalidParam(format!(
            "deconv output collapses: in={input} k={k} stride={stride} pad={pad} out_pad={output_padding}"
        )));
    }
    Ok(grown - 2 * pad)
}

fn deconv_check(p: &ConvParams, (oph, opw): (usize, usize)) -> Result<()> {
    if oph >= p.stride_h || opw >= p.stride_w {
        return Err(Error::InvalidParam(format!(
            "output_padding ({oph}, {opw}) must be smaller than stride ({}, {})",
            p.stride_h, p.stride_w
        )));
    }
    Ok(())
}

/// Reorders `(c_out, c_in, kh, kw)` weights into a `(c_out*kh*kw, c_in)`
/// matrix so deconv GEMMs can run on contiguous rows.
fn pack_deconv_weights(p: &ConvParams) -> Vec<f32> {
    let k_sp = p.kh * p.kw;
    let mut packed = vec![0.0f32; p.c_out * k_sp * p.c_in];
    let w = p.weights.data();
    for co in 0..p.c_out {
        for ci in 0..p.c_in {
            for kk in 0..k_sp {
                packed[(co * k_sp + kk) * p.c_in + ci] = w[(co * p.c_in + ci) * k_sp + kk];
            }
        }
    }
    packed
}

/// Transposed convolution: `y[n,co,ih*sh-ph+ki, iw*sw-pw+kj] +=
/// w[co,ci,ki,kj] * x[n,ci,ih,iw]`, i.e. the adjoint of [`conv2d`] over the
/// output grid. Forward of deconv equals backward-data of the matching conv.
pub fn deconv2d(x: &Tensor, p: &ConvParams, output_padding: (usize, usize)) -> Result<Tensor> {
    p.check_input(x, "deconv2d input channels")?;
    deconv_check(p, output_padding)?;
    let [n, _, h, w] = x.shape();
    let oh = deconv2d_output_shape(h, p.kh, p.stride_h, p.pad_h, output_padding.0)?;
    let ow = deconv2d_output_shape(w, p.kw, p.stride_w, p.pad_w, output_padding.1)?;
    let packed = pack_deconv_weights(p);
    let m = p.c_out * p.kh * p.kw;
    let n_cols = h * w;
    let mut out = Tensor::zeros([n, p.c_out, oh, ow]);

    let run_item = |x_item: &[f32], out_item: &mut [f32]| {
        let mut cols = vec![0.0f32; m * n_cols];
        sgemm(m, p.c_in, n_cols, &packed, x_item, 0.0, &mut cols);
        col2im_add(
            &cols, p.c_out, p.kh, p.kw, h, w, p.stride_h, p.stride_w, p.pad_h, p.pad_w, oh, ow,
            out_item,
        );
        if let Some(b) = &p.bias {
            let plane = oh * ow;
            for (co, &bv) in b.data().iter().enumerate() {
                out_item[co * plane..(co + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v += bv);
            }
        }
    };

    let in_stride = p.c_in * n_cols;
    let out_stride = p.c_out * oh * ow;
    if n > 1 {
        out.data_mut()
            .par_chunks_mut(out_stride)
            .zip(x.data().par_chunks(in_stride))
            .for_each(|(out_item, x_item)| run_item(x_item, out_item));
    } else if n == 1 {
        run_item(x.data(), out.data_mut());
    }
    Ok(out)
}

/// Gradients of [`deconv2d`] with respect to input, weights, and bias.
pub fn deconv2d_backward(
    x: &Tensor,
    p: &ConvParams,
    output_padding: (usize, usize),
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Option<Tensor>)> {
    p.check_input(x, "deconv2d input channels")?;
    deconv_check(p, output_padding)?;
    let [n, _, h, w] = x.shape();
    let oh = deconv2d_output_shape(h, p.kh, p.stride_h, p.pad_h, output_padding.0)?;
    let ow = deconv2d_output_shape(w, p.kw, p.stride_w, p.pad_w, output_padding.1)?;
    if grad_out.shape() != [n, p.c_out, oh, ow] {
        return Err(Error::ShapeMismatch {
            what: "deconv2d grad_out",
            left: grad_out.shape(),
            right: [n, p.c_out, oh, ow],
        });
    }
    let packed = pack_deconv_weights(p);
    let m = p.c_out * p.kh * p.kw;
    let n_cols = h * w;
    let in_stride = p.c_in * n_cols;
    let out_stride = p.c_out * oh * ow;
    let mut grad_x = Tensor::zeros(x.shape());

    // grad_x = packed^T @ unfold(grad_out); grad_packed += unfold(grad_out) @ x^T.
    let run_item = |x_item: &[f32], gy_item: &[f32], gx_item: &mut [f32]| -> Vec<f32> {
        let mut gy_cols = vec![0.0f32; m * n_cols];
        im2col(
            gy_item, p.c_out, oh, ow, p.kh, p.kw, p.stride_h, p.stride_w, p.pad_h, p.pad_w, h, w,
            &mut gy_cols,
        );
        sgemm_strided(
            p.c_in, m, n_cols, 1.0, &packed, 1, p.c_in as isize, &gy_cols, n_cols as isize, 1,
            0.0, gx_item,
        );
        let mut gp_item = vec![0.0f32; m * p.c_in];
        sgemm_strided(
            m, n_cols, p.c_in, 1.0, &gy_cols, n_cols as isize, 1, x_item, 1, n_cols as isize,
            0.0, &mut gp_item,
        );
        gp_item
    };

    let gp_items: Vec<Vec<f32>> = if n > 1 {
        grad_x
            .data_mut()
            .par_chunks_mut(in_stride)
            .zip(x.data().par_chunks(in_stride))
            .zip(grad_out.data().par_chunks(out_stride))
            .map(|((gx_item, x_item), gy_item)| run_item(x_item, gy_item, gx_item))
            .collect()
    } else if n == 1 {
        vec![run_item(x.data(), grad_out.data(), grad_x.data_mut())]
    } else {
        Vec::new()
    };

    let mut grad_packed = vec![0.0f32; m * p.c_in];
    for gp_item in &gp_items {
        for (acc, v) in grad_packed.iter_mut().zip(gp_item) {
            *acc += v;
        }
    }
    let mut grad_w = Tensor::zeros(p.weights.shape());
    let k_sp = p.kh * p.kw;
    for co in 0..p.c_out {
        for ci in 0..p.c_in {
            for kk in 0..k_sp {
                grad_w.data_mut()[(co * p.c_in + ci) * k_sp + kk] =
                    grad_packed[(co * k_sp + kk) * p.c_in + ci];
            }
        }
    }

    let grad_b = p.bias.as_ref().map(|_| {
        let mut gb = Tensor::zeros([1, p.c_out, 1, 1]);
        let plane = oh * ow;
        for item in 0..n {
            let gy_item = &grad_out.data()[item * out_stride..(item + 1) * out_stride];
            for co in 0..p.c_out {
                let s: f32 = gy_item[co * plane..(co + 1) * plane].iter().sum();
                gb.data_mut()[co] += s;
            }
        }
        gb
    });

    Ok((grad_x, grad_w, grad_b))
}

/// Counts, for each output pixel of a transposed convolution, how many
/// kernel taps land on it. Zero entries are exactly the positions a
/// kernel-smaller-than-stride deconv can never write: the gridding gaps.
pub fn deconv_coverage_map(
    in_h: usize,
    in_w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    output_padding: usize,
) -> Result<(Vec<u32>, usize, usize)> {
    let oh = deconv2d_output_shape(in_h, k, stride, pad, output_padding)?;
    let ow = deconv2d_output_shape(in_w, k, stride, pad, output_padding)?;
    let mut cover_h = vec![0u32; oh];
    let mut cover_w = vec![0u32; ow];
    for i in 0..in_h {
        for ki in 0..k {
            let o = (i * stride + ki) as isize - pad as isize;
            if o >= 0 && (o as usize) < oh {
                cover_h[o as usize] += 1;
            }
        }
    }
    for j in 0..in_w {
        for kj in 0..k {
            let o = (j * stride + kj) as isize - pad as isize;
            if o >= 0 && (o as usize) < ow {
                cover_w[o as usize] += 1;
            }
        }
    }
    let mut map = vec![0u32; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            map[y * ow + x] = cover_h[y] * cover_w[x];
        }
    }
    Ok((map, oh, ow))
}

/// Max-dilates a coverage map by `radius` in each direction: the reach a
/// following block with receptive radius `radius` (e.g. 2 for the 5x5 DCB)
/// has into its neighborhood.
pub fn dilate_coverage(map: &[u32], h: usize, w: usize, radius: usize) -> Vec<u32> {
    let r = radius as isize;
    let mut out = vec![0u32; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut best = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && yy < h as isize && xx >= 0 && xx < w as isize {
                        best = best.max(map[(yy * w as isize + xx) as usize]);
                    }
                }
            }
            out[(y * w as isize + x) as usize] = best;
        }
    }
    out
}

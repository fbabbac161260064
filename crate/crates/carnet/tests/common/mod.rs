//! Shared test oracles: naive re-implementations of the conv/deconv/pool
//! forwards and a finite-difference gradient checker. Everything here is
//! deliberately independent of the library's GEMM-based kernels.

#![allow(dead_code)]

use carnet::ops::ConvParams;
use carnet::{Rng, Tensor};

/// Seven nested loops, accumulating in f64.
pub fn conv2d_naive(x: &Tensor, p: &ConvParams) -> Tensor {
    let [n, _, h, w] = x.shape();
    let oh = (h + 2 * p.pad_h - p.kh) / p.stride_h + 1;
    let ow = (w + 2 * p.pad_w - p.kw) / p.stride_w + 1;
    let mut out = Tensor::zeros([n, p.c_out, oh, ow]);
    for item in 0..n {
        for co in 0..p.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias.as_ref().map_or(0.0, |b| b.data()[co]) as f64;
                    for ci in 0..p.c_in {
                        for ki in 0..p.kh {
                            for kj in 0..p.kw {
                                let iy = (oy * p.stride_h + ki) as isize - p.pad_h as isize;
                                let ix = (ox * p.stride_w + kj) as isize - p.pad_w as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += (p.weights.at(co, ci, ki, kj)
                                        * x.at(item, ci, iy as usize, ix as usize))
                                        as f64;
                                }
                            }
                        }
                    }
                    *out.at_mut(item, co, oy, ox) = acc as f32;
                }
            }
        }
    }
    out
}

/// Direct scatter loops for the transposed convolution.
pub fn deconv2d_naive(x: &Tensor, p: &ConvParams, output_padding: (usize, usize)) -> Tensor {
    let [n, _, h, w] = x.shape();
    let oh = (h - 1) * p.stride_h + p.kh + output_padding.0 - 2 * p.pad_h;
    let ow = (w - 1) * p.stride_w + p.kw + output_padding.1 - 2 * p.pad_w;
    let mut out = vec![0.0f64; n * p.c_out * oh * ow];
    for item in 0..n {
        for ci in 0..p.c_in {
            for iy in 0..h {
                for ix in 0..w {
                    let v = x.at(item, ci, iy, ix) as f64;
                    for co in 0..p.c_out {
                        for ki in 0..p.kh {
                            for kj in 0..p.kw {
                                let oy = (iy * p.stride_h + ki) as isize - p.pad_h as isize;
                                let ox = (ix * p.stride_w + kj) as isize - p.pad_w as isize;
                                if oy >= 0 && oy < oh as isize && ox >= 0 && ox < ow as isize {
                                    out[((item * p.c_out + co) * oh + oy as usize) * ow
                                        + ox as usize] +=
                                        v * p.weights.at(co, ci, ki, kj) as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut t = Tensor::zeros([n, p.c_out, oh, ow]);
    for (dst, src) in t.data_mut().iter_mut().zip(&out) {
        *dst = *src as f32;
    }
    if let Some(b) = &p.bias {
        let plane = oh * ow;
        for item in 0..n {
            for co in 0..p.c_out {
                let bv = b.data()[co];
                let base = (item * p.c_out + co) * plane;
                t.data_mut()[base..base + plane]
                    .iter_mut()
                    .for_each(|v| *v += bv);
            }
        }
    }
    t
}

/// Brute-force 2x2 stride-2 window scan.
pub fn maxpool2_naive(x: &Tensor) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for item in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x.at(item, ch, 2 * oy + dy, 2 * ox + dx));
                        }
                    }
                    *out.at_mut(item, ch, oy, ox) = m;
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    assert_eq!(a.shape(), b.shape(), "oracle shape disagreement");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64) * (*y as f64))
        .sum()
}

/// Sum of all elements in f64 — the scalar loss used by every gradient check.
pub fn sum_loss(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| v as f64).sum()
}

/// Central finite differences against an analytic gradient, elementwise.
/// Returns the worst relative error.
pub fn fd_check(
    values: &mut [f32],
    analytic: &[f32],
    mut loss: impl FnMut(&[f32]) -> f64,
    h: f32,
) -> f64 {
    assert_eq!(values.len(), analytic.len());
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + h;
        let up = loss(values);
        values[i] = orig - h;
        let down = loss(values);
        values[i] = orig;
        let fd = (up - down) / (2.0 * h as f64);
        let an = analytic[i] as f64;
        let denom = an.abs().max(fd.abs()).max(1e-4);
        worst = worst.max((an - fd).abs() / denom);
    }
    worst
}

pub fn rand_tensor(rng: &mut Rng, shape: [usize; 4], std: f32) -> Tensor {
    Tensor::randn(shape, rng, 0.0, std)
}

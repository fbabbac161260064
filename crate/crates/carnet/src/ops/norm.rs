//! Batch normalization over `(n, h, w)` per channel.
//!
//! Train mode normalizes with biased batch statistics and folds an unbiased
//! variance estimate into the running statistics (the usual framework
//! semantics); eval mode applies the running statistics only and never
//! mutates state.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: Tensor,        // (1, C, 1, 1)
    pub beta: Tensor,         // (1, C, 1, 1)
    pub running_mean: Tensor, // (1, C, 1, 1)
    pub running_var: Tensor,  // (1, C, 1, 1)
    /// False until a train-mode pass, an initializer, or a checkpoint has
    /// populated the running statistics; eval mode refuses to run before.
    pub stats_initialized: bool,
    pub momentum: f32,
    pub epsilon: f32,
}

impl BatchNormParams {
    /// Standard defaults: gamma 1, beta 0, running stats (0, 1) but flagged
    /// uninitialized, momentum 0.1, epsilon 1e-5.
    pub fn new(channels: usize) -> BatchNormParams {
        let mut gamma = Tensor::zeros([1, channels, 1, 1]);
        gamma.data_mut().iter_mut().for_each(|v| *v = 1.0);
        let mut running_var = Tensor::zeros([1, channels, 1, 1]);
        running_var.data_mut().iter_mut().for_each(|v| *v = 1.0);
        BatchNormParams {
            gamma,
            beta: Tensor::zeros([1, channels, 1, 1]),
            running_mean: Tensor::zeros([1, channels, 1, 1]),
            running_var,
            stats_initialized: false,
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape()[1]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape()[1] != self.channels() {
            return Err(Error::ShapeMismatch {
                what: "batchnorm channels",
                left: x.shape(),
                right: self.gamma.shape(),
            });
        }
        Ok(())
    }
}

/// Per-channel statistics captured by the train-mode forward; the backward
/// pass needs exactly these.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

fn apply_affine(x: &Tensor, mean: &[f32], inv_std: &[f32], p: &BatchNormParams) -> Tensor {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let mut out = Tensor::zeros(x.shape());
    out.data_mut()
        .par_chunks_mut(plane)
        .zip(x.data().par_chunks(plane))
        .enumerate()
        .for_each(|(chunk, (o_p, x_p))| {
            let ch = chunk % c;
            let scale = p.gamma.data()[ch] * inv_std[ch];
            let shift = p.beta.data()[ch] - mean[ch] * scale;
            for (o, &v) in o_p.iter_mut().zip(x_p) {
                *o = v * scale + shift;
            }
        });
    let _ = n;
    out
}

/// Train-mode forward: normalizes with batch statistics and updates the
/// running statistics in `p`.
pub fn batchnorm_train(x: &Tensor, p: &mut BatchNormParams) -> Result<(Tensor, BnCache)> {
    p.check_input(x)?;
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let count = n * plane;
    if count == 0 {
        return Err(Error::InvalidParam("batchnorm on empty batch".into()));
    }

    let stats: Vec<(f32, f32)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sum = 0.0f64;
            let mut sumsq = 0.0f64;
            for item in 0..n {
                let base = (item * c + ch) * plane;
                for &v in &x.data()[base..base + plane] {
                    sum += v as f64;
                    sumsq += (v as f64) * (v as f64);
                }
            }
            let mean = sum / count as f64;
            let var = (sumsq / count as f64 - mean * mean).max(0.0);
            (mean as f32, var as f32)
        })
        .collect();

    let mean: Vec<f32> = stats.iter().map(|s| s.0).collect();
    let inv_std: Vec<f32> = stats
        .iter()
        .map(|s| 1.0 / (s.1 + p.epsilon).sqrt())
        .collect();

    let m = p.momentum;
    for ch in 0..c {
        let unbiased = if count > 1 {
            stats[ch].1 * count as f32 / (count as f32 - 1.0)
        } else {
            stats[ch].1
        };
        let rm = &mut p.running_mean.data_mut()[ch];
        *rm = (1.0 - m) * *rm + m * stats[ch].0;
        let rv = &mut p.running_var.data_mut()[ch];
        *rv = (1.0 - m) * *rv + m * unbiased;
    }
    p.stats_initialized = true;

    let out = apply_affine(x, &mean, &inv_std, p);
    Ok((out, BnCache { mean, inv_std }))
}

/// Eval-mode forward: uses running statistics, mutates nothing.
pub fn batchnorm_eval(x: &Tensor, p: &BatchNormParams) -> Result<Tensor> {
    p.check_input(x)?;
    if !p.stats_initialized {
        return Err(Error::BnStatsUninitialized);
    }
    let c = p.channels();
    let inv_std: Vec<f32> = (0..c)
        .map(|ch| 1.0 / (p.running_var.data()[ch] + p.epsilon).sqrt())
        .collect();
    Ok(apply_affine(x, p.running_mean.data(), &inv_std, p))
}

/// Standard train-mode batch norm gradient.
pub fn batchnorm_backward(
    x: &Tensor,
    p: &BatchNormParams,
    cache: &BnCache,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    p.check_input(x)?;
    if grad_out.shape() != x.shape() {
        return Err(Error::ShapeMismatch {
            what: "batchnorm grad_out",
            left: grad_out.shape(),
            right: x.shape(),
        });
    }
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let count = (n * plane) as f64;

    // Per channel: sum(dy) and sum(dy * xhat).
    let sums: Vec<(f64, f64)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mean = cache.mean[ch];
            let istd = cache.inv_std[ch];
            let mut s_dy = 0.0f64;
            let mut s_dy_xhat = 0.0f64;
            for item in 0..n {
                let base = (item * c + ch) * plane;
                let xs = &x.data()[base..base + plane];
                let gys = &grad_out.data()[base..base + plane];
                for (&xv, &gy) in xs.iter().zip(gys) {
                    let xhat = (xv - mean) * istd;
                    s_dy += gy as f64;
                    s_dy_xhat += (gy * xhat) as f64;
                }
            }
            (s_dy, s_dy_xhat)
        })
        .collect();

    let mut grad_gamma = Tensor::zeros([1, c, 1, 1]);
    let mut grad_beta = Tensor::zeros([1, c, 1, 1]);
    for ch in 0..c {
        grad_gamma.data_mut()[ch] = sums[ch].1 as f32;
        grad_beta.data_mut()[ch] = sums[ch].0 as f32;
    }

    let mut grad_x = Tensor::zeros(x.shape());
    grad_x
        .data_mut()
        .par_chunks_mut(plane)
        .zip(x.data().par_chunks(plane))
        .zip(grad_out.data().par_chunks(plane))
        .enumerate()
        .for_each(|(chunk, ((gx_p, x_p), gy_p))| {
            let ch = chunk % c;
            let mean = cache.mean[ch];
            let istd = cache.inv_std[ch] as f64;
            let gamma = p.gamma.data()[ch] as f64;
            let (s_dy, s_dy_xhat) = sums[ch];
            let k = gamma * istd / count;
            for ((gx, &xv), &gy) in gx_p.iter_mut().zip(x_p).zip(gy_p) {
                let xhat = ((xv - mean) as f64) * istd;
                *gx = (k * (count * gy as f64 - s_dy - xhat * s_dy_xhat)) as f32;
            }
        });

    Ok((grad_x, grad_gamma, grad_beta))
}

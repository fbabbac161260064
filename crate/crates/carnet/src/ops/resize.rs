//! Bilinear up-sampling, align-corners-false convention: a destination pixel
//! samples the source at `(dst + 0.5) * (in/out) - 0.5`, clamped to the
//! image. Backward is the exact transpose of the interpolation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[inline]
fn taps(dst: usize, scale: f64, limit: usize) -> (usize, usize, f32) {
    let src = (dst as f64 + 0.5) * scale - 0.5;
    let src = src.max(0.0);
    let i0 = (src.floor() as usize).min(limit - 1);
    let frac = (src - i0 as f64) as f32;
    let i1 = (i0 + 1).min(limit - 1);
    (i0, i1, frac)
}

/// Integer-factor up-sampling (`factor >= 1`).
pub fn bilinear_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidParam("bilinear factor must be >= 1".into()));
    }
    let [_, _, h, w] = x.shape();
    bilinear_resize(x, (h * factor, w * factor))
}

/// Resize to an explicit target no smaller than the input.
pub fn bilinear_resize(x: &Tensor, (th, tw): (usize, usize)) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if th < h || tw < w {
        return Err(Error::InvalidParam(format!(
            "bilinear target {th}x{tw} smaller than input {h}x{w}"
        )));
    }
    let scale_h = h as f64 / th as f64;
    let scale_w = w as f64 / tw as f64;
    let mut out = Tensor::zeros([n, c, th, tw]);
    let in_plane = h * w;
    let out_plane = th * tw;
    out.data_mut()
        .par_chunks_mut(out_plane)
        .zip(x.data().par_chunks(in_plane))
        .for_each(|(o_p, x_p)| {
            for oy in 0..th {
                let (y0, y1, dy) = taps(oy, scale_h, h);
                for ox in 0..tw {
                    let (x0, x1, dx) = taps(ox, scale_w, w);
                    let v00 = x_p[y0 * w + x0];
                    let v01 = x_p[y0 * w + x1];
                    let v10 = x_p[y1 * w + x0];
                    let v11 = x_p[y1 * w + x1];
                    let top = v00 + (v01 - v00) * dx;
                    let bot = v10 + (v11 - v10) * dx;
                    o_p[oy * tw + ox] = top + (bot - top) * dy;
                }
            }
        });
    Ok(out)
}

/// Transpose of [`bilinear_upsample`]: scatters each output gradient onto its
/// four source taps with the interpolation weights.
pub fn bilinear_backward(grad_out: &Tensor, in_hw: (usize, usize), factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidParam("bilinear factor must be >= 1".into()));
    }
    let [n, c, th, tw] = grad_out.shape();
    let (h, w) = in_hw;
    if th != h * factor || tw != w * factor {
        return Err(Error::ShapeMismatch {
            what: "bilinear backward",
            left: grad_out.shape(),
            right: [n, c, h * factor, w * factor],
        });
    }
    let scale_h = h as f64 / th as f64;
    let scale_w = w as f64 / tw as f64;
    let mut grad_x = Tensor::zeros([n, c, h, w]);
    let in_plane = h * w;
    let out_plane = th * tw;
    grad_x
        .data_mut()
        .par_chunks_mut(in_plane)
        .zip(grad_out.data().par_chunks(out_plane))
        .for_each(|(gx_p, gy_p)| {
            for oy in 0..th {
                let (y0, y1, dy) = taps(oy, scale_h, h);
                for ox in 0..tw {
                    let (x0, x1, dx) = taps(ox, scale_w, w);
                    let g = gy_p[oy * tw + ox];
                    gx_p[y0 * w + x0] += g * (1.0 - dy) * (1.0 - dx);
                    gx_p[y0 * w + x1] += g * (1.0 - dy) * dx;
                    gx_p[y1 * w + x0] += g * dy * (1.0 - dx);
                    gx_p[y1 * w + x1] += g * dy * dx;
                }
            }
        });
    Ok(grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn constants_are_preserved() {
        let x = Tensor::from_vec([1, 2, 3, 3], vec![0.7; 18]);
        let y = bilinear_upsample(&x, 2).unwrap();
        assert_eq!(y.shape(), [1, 2, 6, 6]);
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }

    #[test]
    fn factor_two_matches_direct_formula() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = bilinear_upsample(&x, 2).unwrap();
        // oracle: evaluate the align-corners-false formula independently
        let src = |i: usize| -> (usize, usize, f64) {
            let s = ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(1);
            (i0, (i0 + 1).min(1), s - i0 as f64)
        };
        for oy in 0..4 {
            for ox in 0..4 {
                let (y0, y1, dy) = src(oy);
                let (x0, x1, dx) = src(ox);
                let at = |r: usize, c: usize| x.data()[r * 2 + c] as f64;
                let want = at(y0, x0) * (1.0 - dy) * (1.0 - dx)
                    + at(y0, x1) * (1.0 - dy) * dx
                    + at(y1, x0) * dy * (1.0 - dx)
                    + at(y1, x1) * dy * dx;
                let got = y.at(0, 0, oy, ox) as f64;
                assert!((got - want).abs() < 1e-6, "({oy},{ox}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn backward_conserves_mass() {
        let ones = Tensor::from_vec([1, 1, 8, 8], vec![1.0; 64]);
        let g = bilinear_backward(&ones, (4, 4), 2).unwrap();
        let total: f32 = g.data().iter().sum();
        assert!((total - 64.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn shrinking_is_a_parameter_error() {
        let mut rng = Rng::new(2);
        let x = Tensor::randn([1, 1, 4, 4], &mut rng, 0.0, 1.0);
        assert!(bilinear_resize(&x, (2, 8)).is_err());
        assert!(bilinear_upsample(&x, 0).is_err());
    }
}

//! 2x2 stride-2 max pooling. Odd trailing rows/columns are discarded
//! (floor semantics); ties break toward the first element in row-major
//! window order so the backward routing is deterministic.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Returns the pooled tensor and, per output element, the flat `h*W + w`
/// index of the winning input pixel within its `(n, c)` plane.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::ShapeMismatch {
            what: "maxpool2 output would be empty",
            left: x.shape(),
            right: [n, c, 1, 1],
        });
    }
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut idx = vec![0u32; n * c * oh * ow];

    let in_plane = h * w;
    let out_plane = oh * ow;
    out.data_mut()
        .par_chunks_mut(out_plane)
        .zip(idx.par_chunks_mut(out_plane))
        .zip(x.data().par_chunks(in_plane))
        .for_each(|((out_p, idx_p), x_p)| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y0, x0) = (2 * oy, 2 * ox);
                    let mut best = x_p[y0 * w + x0];
                    let mut best_at = (y0 * w + x0) as u32;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let pos = (y0 + dy) * w + x0 + dx;
                        if x_p[pos] > best {
                            best = x_p[pos];
                            best_at = pos as u32;
                        }
                    }
                    out_p[oy * ow + ox] = best;
                    idx_p[oy * ow + ox] = best_at;
                }
            }
        });
    Ok((out, idx))
}

/// Routes `grad_out` back to each window's argmax position.
pub fn maxpool2_backward(
    input_shape: [usize; 4],
    indices: &[u32],
    grad_out: &Tensor,
) -> Result<Tensor> {
    let [n, c, h, w] = input_shape;
    let [gn, gc, oh, ow] = grad_out.shape();
    if (gn, gc) != (n, c) || oh != h / 2 || ow != w / 2 || indices.len() != grad_out.numel() {
        return Err(Error::ShapeMismatch {
            what: "maxpool2 backward",
            left: grad_out.shape(),
            right: input_shape,
        });
    }
    let mut grad_x = Tensor::zeros(input_shape);
    let in_plane = h * w;
    let out_plane = oh * ow;
    grad_x
        .data_mut()
        .par_chunks_mut(in_plane)
        .zip(grad_out.data().par_chunks(out_plane))
        .zip(indices.par_chunks(out_plane))
        .for_each(|((gx_p, gy_p), idx_p)| {
            for (&g, &i) in gy_p.iter().zip(idx_p) {
                gx_p[i as usize] += g;
            }
        });
    Ok(grad_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn picks_window_max_and_its_index() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, idx) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }

    #[test]
    fn ties_route_gradient_to_first_in_row_major_order() {
        let x = Tensor::from_vec([1, 1, 2, 4], vec![5.0; 8]);
        let (y, idx) = maxpool2(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
        assert_eq!(idx, vec![0, 2]);
        let g = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 1.0]);
        let gx = maxpool2_backward(x.shape(), &idx, &g).unwrap();
        assert_eq!(gx.data(), &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_sizes_discard_remainder() {
        let mut rng = Rng::new(5);
        let x = Tensor::randn([1, 2, 5, 7], &mut rng, 0.0, 1.0);
        let (y, _) = maxpool2(&x).unwrap();
        assert_eq!(y.shape(), [1, 2, 2, 3]);
    }

    #[test]
    fn empty_output_is_error() {
        let x = Tensor::zeros([1, 1, 1, 4]);
        assert!(maxpool2(&x).is_err());
    }

    #[test]
    fn matches_naive_window_scan_exactly() {
        let mut rng = Rng::new(77);
        let x = Tensor::randn([1, 3, 6, 6], &mut rng, 0.0, 1.0);
        let (y, _) = maxpool2(&x).unwrap();
        for n in 0..1 {
            for c in 0..3 {
                for oy in 0..3 {
                    for ox in 0..3 {
                        let mut m = f32::NEG_INFINITY;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                m = m.max(x.at(n, c, 2 * oy + dy, 2 * ox + dx));
                            }
                        }
                        assert_eq!(y.at(n, c, oy, ox), m);
                    }
                }
            }
        }
    }
}

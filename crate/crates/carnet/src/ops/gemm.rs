//! im2col / col2im and a thin strided-GEMM wrapper shared by conv and deconv.

/// `c[m x n] = alpha * a[m x k] @ b[k x n] + beta * c`, row-major unless
/// custom strides are given. Safe wrapper over `matrixmultiply::sgemm`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm_strided(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major `c = a @ b` with optional accumulation.
pub(crate) fn sgemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], beta: f32, c: &mut [f32]) {
    sgemm_strided(m, k, n, 1.0, a, k as isize, 1, b, n as isize, 1, beta, c);
}

/// Unfolds one image `(c, src_h, src_w)` into a `(c*kh*kw, dst_h*dst_w)`
/// column matrix: `cols[(ci,ki,kj)][(oh,ow)] = img[ci][oh*sh-ph+ki][ow*sw-pw+kj]`
/// with zeros where the window leaves the image.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col(
    img: &[f32],
    c: usize,
    src_h: usize,
    src_w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    dst_h: usize,
    dst_w: usize,
    cols: &mut [f32],
) {
    let n_cols = dst_h * dst_w;
    debug_assert_eq!(cols.len(), c * kh * kw * n_cols);
    for ci in 0..c {
        let plane = &img[ci * src_h * src_w..(ci + 1) * src_h * src_w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut cols[((ci * kh + ki) * kw + kj) * n_cols..][..n_cols];
                for oh in 0..dst_h {
                    let out_row = &mut row[oh * dst_w..(oh + 1) * dst_w];
                    let ih = (oh * sh + ki) as isize - ph as isize;
                    if ih < 0 || ih >= src_h as isize {
                        out_row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src_row = &plane[ih as usize * src_w..(ih as usize + 1) * src_w];
                    if sw == 1 {
                        // contiguous: iw = ow - pw + kj
                        let shift = kj as isize - pw as isize;
                        let (ow0, iw0) = if shift < 0 {
                            ((-shift) as usize, 0usize)
                        } else {
                            (0usize, shift as usize)
                        };
                        if ow0 > 0 {
                            out_row[..ow0.min(dst_w)].iter_mut().for_each(|v| *v = 0.0);
                        }
                        if ow0 < dst_w && iw0 < src_w {
                            let len = (dst_w - ow0).min(src_w - iw0);
                            out_row[ow0..ow0 + len].copy_from_slice(&src_row[iw0..iw0 + len]);
                            out_row[ow0 + len..].iter_mut().for_each(|v| *v = 0.0);
                        } else {
                            out_row[ow0.min(dst_w)..].iter_mut().for_each(|v| *v = 0.0);
                        }
                    } else {
                        for (ow, v) in out_row.iter_mut().enumerate() {
                            let iw = (ow * sw + kj) as isize - pw as isize;
                            *v = if iw >= 0 && iw < src_w as isize {
                                src_row[iw as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Folds a `(c*kh*kw, src_h*src_w)` column matrix back into an image
/// `(c, dst_h, dst_w)`, accumulating overlaps:
/// `img[ci][oh*sh-ph+ki][ow*sw-pw+kj] += cols[(ci,ki,kj)][(oh,ow)]`.
///
/// This is the adjoint of [`im2col`]; conv backward-data and deconv forward
/// are both this fold over their respective geometries.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im_add(
    cols: &[f32],
    c: usize,
    kh: usize,
    kw: usize,
    src_h: usize,
    src_w: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    dst_h: usize,
    dst_w: usize,
    img: &mut [f32],
) {
    let n_cols = src_h * src_w;
    debug_assert_eq!(cols.len(), c * kh * kw * n_cols);
    debug_assert_eq!(img.len(), c * dst_h * dst_w);
    for ci in 0..c {
        let plane = &mut img[ci * dst_h * dst_w..(ci + 1) * dst_h * dst_w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &cols[((ci * kh + ki) * kw + kj) * n_cols..][..n_cols];
                for oh in 0..src_h {
                    let ih = (oh * sh + ki) as isize - ph as isize;
                    if ih < 0 || ih >= dst_h as isize {
                        continue;
                    }
                    let src_row = &row[oh * src_w..(oh + 1) * src_w];
                    let dst_row = &mut plane[ih as usize * dst_w..(ih as usize + 1) * dst_w];
                    if sw == 1 {
                        let shift = kj as isize - pw as isize;
                        let (ow0, iw0) = if shift < 0 {
                            ((-shift) as usize, 0usize)
                        } else {
                            (0usize, shift as usize)
                        };
                        if ow0 < src_w && iw0 < dst_w {
                            let len = (src_w - ow0).min(dst_w - iw0);
                            for (d, s) in dst_row[iw0..iw0 + len]
                                .iter_mut()
                                .zip(&src_row[ow0..ow0 + len])
                            {
                                *d += s;
                            }
                        }
                    } else {
                        for (ow, &v) in src_row.iter().enumerate() {
                            let iw = (ow * sw + kj) as isize - pw as isize;
                            if iw >= 0 && iw < dst_w as isize {
                                dst_row[iw as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

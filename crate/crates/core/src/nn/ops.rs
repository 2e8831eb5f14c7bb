//! Convolution primitives: im2col + GEMM forward passes and the matching
//! backward passes for strided convolution and transposed convolution.
//!
//! Transposed convolution uses weight layout (in_ch, out_ch, k, k) and is the
//! exact adjoint of `conv2d` with the same kernel/stride/padding, i.e. for
//! matching geometries `<conv2d(x), y> == <x, conv2d_transpose(y)>`.

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Output spatial size of a convolution.
#[inline]
pub fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Output spatial size of a transposed convolution.
#[inline]
pub fn conv_transpose_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    stride * (input - 1) + k - 2 * pad
}

/// Gather kernel windows of one image (c, h, w) into a (c*k*k, gh*gw) matrix.
/// Grid position (gy, gx) reads img[c, stride*gy - pad + ky, stride*gx - pad + kx],
/// with out-of-bounds reads as zero.
#[allow(clippy::too_many_arguments)]
fn im2col<S: Scalar>(
    img: &[S],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gh: usize,
    gw: usize,
    cols: &mut [S],
) {
    let grid = gh * gw;
    debug_assert_eq!(cols.len(), c * k * k * grid);
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * grid;
                for gy in 0..gh {
                    let iy = (stride * gy + ky) as isize - pad as isize;
                    let dst = &mut cols[row + gy * gw..row + (gy + 1) * gw];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let src_row = (ci * h + iy as usize) * w;
                    for (gx, d) in dst.iter_mut().enumerate() {
                        let ix = (stride * gx + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            S::ZERO
                        } else {
                            img[src_row + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add transpose of `im2col`: accumulate a (c*k*k, gh*gw) matrix back
/// into an image (c, h, w).
#[allow(clippy::too_many_arguments)]
fn col2im<S: Scalar>(
    cols: &[S],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    gh: usize,
    gw: usize,
    img: &mut [S],
) {
    let grid = gh * gw;
    debug_assert_eq!(cols.len(), c * k * k * grid);
    debug_assert_eq!(img.len(), c * h * w);
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * grid;
                for gy in 0..gh {
                    let iy = (stride * gy + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (ci * h + iy as usize) * w;
                    for gx in 0..gw {
                        let ix = (stride * gx + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        img[dst_row + ix as usize] += cols[row + gy * gw + gx];
                    }
                }
            }
        }
    }
}

/// Row-major GEMM helper: c (m x n) = a (m x k) * b (k x n) + beta * c.
fn gemm_rm<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], beta: S, c: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        S::gemm(
            m,
            k,
            n,
            S::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Same but with A transposed in place: c (m x n) = a^T (m x k) * b + beta*c,
/// where a is stored as (k x m) row-major.
fn gemm_at<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], beta: S, c: &mut [S]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        S::gemm(
            m,
            k,
            n,
            S::ONE,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Same but with B transposed: c (m x n) = a (m x k) * b^T + beta*c, where b
/// is stored as (n x k) row-major.
fn gemm_bt<S: Scalar>(m: usize, k: usize, n: usize, a: &[S], b: &[S], beta: S, c: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    unsafe {
        S::gemm(
            m,
            k,
            n,
            S::ONE,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution. Weights are (out_ch, in_ch, k, k); bias has out_ch
/// entries.
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    bias: &[S],
    stride: usize,
    pad: usize,
) -> Tensor<S> {
    let [n, ci, h, iw] = x.shape;
    let [co, wci, k, k2] = w.shape;
    assert_eq!(ci, wci, "conv2d channel mismatch");
    assert_eq!(k, k2);
    assert_eq!(bias.len(), co);
    let oh = conv_out_size(h, k, stride, pad);
    let ow = conv_out_size(iw, k, stride, pad);
    let grid = oh * ow;
    let ckk = ci * k * k;
    let mut out = Tensor::zeros([n, co, oh, ow]);
    let mut cols = vec![S::ZERO; ckk * grid];
    for b in 0..n {
        im2col(
            &x.data[b * ci * h * iw..(b + 1) * ci * h * iw],
            ci,
            h,
            iw,
            k,
            stride,
            pad,
            oh,
            ow,
            &mut cols,
        );
        let dst = &mut out.data[b * co * grid..(b + 1) * co * grid];
        gemm_rm(co, ckk, grid, &w.data, &cols, S::ZERO, dst);
        for c in 0..co {
            let bc = bias[c];
            for v in dst[c * grid..(c + 1) * grid].iter_mut() {
                *v += bc;
            }
        }
    }
    out
}

/// Gradients of `conv2d`: returns (d_input, d_weights, d_bias).
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    gy: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> (Tensor<S>, Tensor<S>, Vec<S>) {
    let [n, ci, h, iw] = x.shape;
    let [co, _, k, _] = w.shape;
    let [gn, gco, oh, ow] = gy.shape;
    assert_eq!(gn, n);
    assert_eq!(gco, co);
    let grid = oh * ow;
    let ckk = ci * k * k;

    let mut gx = Tensor::zeros(x.shape);
    let mut gw = Tensor::zeros(w.shape);
    let mut gb = vec![S::ZERO; co];
    let mut cols = vec![S::ZERO; ckk * grid];
    let mut gcols = vec![S::ZERO; ckk * grid];
    for b in 0..n {
        let gy_b = &gy.data[b * co * grid..(b + 1) * co * grid];
        for c in 0..co {
            for &g in &gy_b[c * grid..(c + 1) * grid] {
                gb[c] += g;
            }
        }
        im2col(
            &x.data[b * ci * h * iw..(b + 1) * ci * h * iw],
            ci,
            h,
            iw,
            k,
            stride,
            pad,
            oh,
            ow,
            &mut cols,
        );
        // gw += gy_b (co, grid) * cols^T (grid, ckk)
        gemm_bt(co, grid, ckk, gy_b, &cols, S::ONE, &mut gw.data);
        // gcols = w^T (ckk, co) * gy_b (co, grid)
        gemm_at(ckk, co, grid, &w.data, gy_b, S::ZERO, &mut gcols);
        col2im(
            &gcols,
            ci,
            h,
            iw,
            k,
            stride,
            pad,
            oh,
            ow,
            &mut gx.data[b * ci * h * iw..(b + 1) * ci * h * iw],
        );
    }
    (gx, gw, gb)
}

/// Forward transposed convolution. Weights are (in_ch, out_ch, k, k); bias
/// has out_ch entries.
pub fn conv2d_transpose<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    bias: &[S],
    stride: usize,
    pad: usize,
) -> Tensor<S> {
    let [n, ci, ih, iw] = x.shape;
    let [wci, co, k, k2] = w.shape;
    assert_eq!(ci, wci, "conv2d_transpose channel mismatch");
    assert_eq!(k, k2);
    assert_eq!(bias.len(), co);
    let oh = conv_transpose_out_size(ih, k, stride, pad);
    let ow = conv_transpose_out_size(iw, k, stride, pad);
    let grid = ih * iw;
    let ckk = co * k * k;
    let mut out = Tensor::zeros([n, co, oh, ow]);
    let mut cols = vec![S::ZERO; ckk * grid];
    for b in 0..n {
        // cols (co*k*k, grid) = w^T (co*k*k, ci) * x_b (ci, grid); w viewed
        // as a (ci, co*k*k) matrix.
        gemm_at(
            ckk,
            ci,
            grid,
            &w.data,
            &x.data[b * ci * grid..(b + 1) * ci * grid],
            S::ZERO,
            &mut cols,
        );
        let dst = &mut out.data[b * co * oh * ow..(b + 1) * co * oh * ow];
        col2im(&cols, co, oh, ow, k, stride, pad, ih, iw, dst);
        for c in 0..co {
            let bc = bias[c];
            for v in dst[c * oh * ow..(c + 1) * oh * ow].iter_mut() {
                *v += bc;
            }
        }
    }
    out
}

/// Gradients of `conv2d_transpose`: returns (d_input, d_weights, d_bias).
pub fn conv2d_transpose_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    gy: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> (Tensor<S>, Tensor<S>, Vec<S>) {
    let [n, ci, ih, iw] = x.shape;
    let [_, co, k, _] = w.shape;
    let [_, _, oh, ow] = gy.shape;
    let grid = ih * iw;
    let ckk = co * k * k;

    let mut gx = Tensor::zeros(x.shape);
    let mut gw = Tensor::zeros(w.shape);
    let mut gb = vec![S::ZERO; co];
    let mut gycols = vec![S::ZERO; ckk * grid];
    for b in 0..n {
        let gy_b = &gy.data[b * co * oh * ow..(b + 1) * co * oh * ow];
        for c in 0..co {
            for &g in &gy_b[c * oh * ow..(c + 1) * oh * ow] {
                gb[c] += g;
            }
        }
        // Windows of gy at the input grid positions.
        im2col(gy_b, co, oh, ow, k, stride, pad, ih, iw, &mut gycols);
        // gx_b (ci, grid) = w (ci, co*k*k) * gycols (co*k*k, grid)
        gemm_rm(
            ci,
            ckk,
            grid,
            &w.data,
            &gycols,
            S::ZERO,
            &mut gx.data[b * ci * grid..(b + 1) * ci * grid],
        );
        // gw (ci, co*k*k) += x_b (ci, grid) * gycols^T (grid, co*k*k)
        gemm_bt(
            ci,
            grid,
            ckk,
            &x.data[b * ci * grid..(b + 1) * ci * grid],
            &gycols,
            S::ONE,
            &mut gw.data,
        );
    }
    (gx, gw, gb)
}

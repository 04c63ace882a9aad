//! Low-level compute kernels for matmul and conv2d.
//!
//! Each kernel has a sequential implementation and, with the `parallel`
//! feature, a rayon one that splits work over disjoint output regions only,
//! so both produce bit-identical results. The `*_dispatch` functions pick
//! the parallel path when the feature is enabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// C[m x n] = A[m x k] * B[k x n]
pub fn matmul_seq(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for (i, row) in out.chunks_mut(n).enumerate() {
        matmul_row(a, b, k, n, i, row);
    }
    out
}

#[cfg(feature = "parallel")]
pub fn matmul_par(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    out.par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| matmul_row(a, b, k, n, i, row));
    out
}

#[inline]
fn matmul_row(a: &[f64], b: &[f64], k: usize, n: usize, i: usize, row: &mut [f64]) {
    for p in 0..k {
        let av = a[i * k + p];
        if av == 0.0 {
            continue;
        }
        let brow = &b[p * n..(p + 1) * n];
        for (o, bv) in row.iter_mut().zip(brow.iter()) {
            *o += av * bv;
        }
    }
}

pub fn matmul_dispatch(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        matmul_par(a, b, m, k, n)
    }
    #[cfg(not(feature = "parallel"))]
    {
        matmul_seq(a, b, m, k, n)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

/// Cross-correlation (no kernel flip) of one output plane (n, co).
fn conv_plane(input: &[f64], kernel: &[f64], d: &ConvDims, n: usize, co: usize, out: &mut [f64]) {
    let in_plane = d.h * d.w;
    let in_img = d.c_in * in_plane;
    let ker_per_co = d.c_in * d.kh * d.kw;
    for oh in 0..d.h_out {
        for ow in 0..d.w_out {
            let mut acc = 0.0;
            for ci in 0..d.c_in {
                for kh in 0..d.kh {
                    let ih = (oh * d.stride + kh) as isize - d.padding as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    for kw in 0..d.kw {
                        let iw = (ow * d.stride + kw) as isize - d.padding as isize;
                        if iw < 0 || iw >= d.w as isize {
                            continue;
                        }
                        acc += input[n * in_img + ci * in_plane + ih as usize * d.w + iw as usize]
                            * kernel[co * ker_per_co + ci * d.kh * d.kw + kh * d.kw + kw];
                    }
                }
            }
            out[oh * d.w_out + ow] = acc;
        }
    }
}

pub fn conv2d_forward_seq(input: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let plane = d.h_out * d.w_out;
    let mut out = vec![0.0; d.batch * d.c_out * plane];
    for (idx, chunk) in out.chunks_mut(plane).enumerate() {
        conv_plane(input, kernel, d, idx / d.c_out, idx % d.c_out, chunk);
    }
    out
}

#[cfg(feature = "parallel")]
pub fn conv2d_forward_par(input: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let plane = d.h_out * d.w_out;
    let mut out = vec![0.0; d.batch * d.c_out * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, chunk)| {
        conv_plane(input, kernel, d, idx / d.c_out, idx % d.c_out, chunk);
    });
    out
}

pub fn conv2d_forward_dispatch(input: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        conv2d_forward_par(input, kernel, d)
    }
    #[cfg(not(feature = "parallel"))]
    {
        conv2d_forward_seq(input, kernel, d)
    }
}

/// Gradient w.r.t. the input, scattered per batch image (disjoint slices).
fn conv_grad_input_image(
    grad_out: &[f64],
    kernel: &[f64],
    d: &ConvDims,
    n: usize,
    gin: &mut [f64],
) {
    let in_plane = d.h * d.w;
    let out_plane = d.h_out * d.w_out;
    let ker_per_co = d.c_in * d.kh * d.kw;
    for co in 0..d.c_out {
        let gout = &grad_out[(n * d.c_out + co) * out_plane..(n * d.c_out + co + 1) * out_plane];
        for oh in 0..d.h_out {
            for ow in 0..d.w_out {
                let g = gout[oh * d.w_out + ow];
                if g == 0.0 {
                    continue;
                }
                for ci in 0..d.c_in {
                    for kh in 0..d.kh {
                        let ih = (oh * d.stride + kh) as isize - d.padding as isize;
                        if ih < 0 || ih >= d.h as isize {
                            continue;
                        }
                        for kw in 0..d.kw {
                            let iw = (ow * d.stride + kw) as isize - d.padding as isize;
                            if iw < 0 || iw >= d.w as isize {
                                continue;
                            }
                            gin[ci * in_plane + ih as usize * d.w + iw as usize] +=
                                g * kernel[co * ker_per_co + ci * d.kh * d.kw + kh * d.kw + kw];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_grad_input_seq(grad_out: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let img = d.c_in * d.h * d.w;
    let mut gin = vec![0.0; d.batch * img];
    for (n, chunk) in gin.chunks_mut(img).enumerate() {
        conv_grad_input_image(grad_out, kernel, d, n, chunk);
    }
    gin
}

#[cfg(feature = "parallel")]
pub fn conv2d_grad_input_par(grad_out: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let img = d.c_in * d.h * d.w;
    let mut gin = vec![0.0; d.batch * img];
    gin.par_chunks_mut(img)
        .enumerate()
        .for_each(|(n, chunk)| conv_grad_input_image(grad_out, kernel, d, n, chunk));
    gin
}

pub fn conv2d_grad_input_dispatch(grad_out: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        conv2d_grad_input_par(grad_out, kernel, d)
    }
    #[cfg(not(feature = "parallel"))]
    {
        conv2d_grad_input_seq(grad_out, kernel, d)
    }
}

/// Gradient w.r.t. the kernel, one output-channel slice at a time.
fn conv_grad_kernel_co(
    input: &[f64],
    grad_out: &[f64],
    d: &ConvDims,
    co: usize,
    gker: &mut [f64],
) {
    let in_plane = d.h * d.w;
    let in_img = d.c_in * in_plane;
    let out_plane = d.h_out * d.w_out;
    for n in 0..d.batch {
        let gout = &grad_out[(n * d.c_out + co) * out_plane..(n * d.c_out + co + 1) * out_plane];
        for oh in 0..d.h_out {
            for ow in 0..d.w_out {
                let g = gout[oh * d.w_out + ow];
                if g == 0.0 {
                    continue;
                }
                for ci in 0..d.c_in {
                    for kh in 0..d.kh {
                        let ih = (oh * d.stride + kh) as isize - d.padding as isize;
                        if ih < 0 || ih >= d.h as isize {
                            continue;
                        }
                        for kw in 0..d.kw {
                            let iw = (ow * d.stride + kw) as isize - d.padding as isize;
                            if iw < 0 || iw >= d.w as isize {
                                continue;
                            }
                            gker[ci * d.kh * d.kw + kh * d.kw + kw] += g
                                * input[n * in_img + ci * in_plane + ih as usize * d.w
                                    + iw as usize];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_grad_kernel_seq(input: &[f64], grad_out: &[f64], d: &ConvDims) -> Vec<f64> {
    let per_co = d.c_in * d.kh * d.kw;
    let mut gker = vec![0.0; d.c_out * per_co];
    for (co, chunk) in gker.chunks_mut(per_co).enumerate() {
        conv_grad_kernel_co(input, grad_out, d, co, chunk);
    }
    gker
}

#[cfg(feature = "parallel")]
pub fn conv2d_grad_kernel_par(input: &[f64], grad_out: &[f64], d: &ConvDims) -> Vec<f64> {
    let per_co = d.c_in * d.kh * d.kw;
    let mut gker = vec![0.0; d.c_out * per_co];
    gker.par_chunks_mut(per_co)
        .enumerate()
        .for_each(|(co, chunk)| conv_grad_kernel_co(input, grad_out, d, co, chunk));
    gker
}

pub fn conv2d_grad_kernel_dispatch(input: &[f64], grad_out: &[f64], d: &ConvDims) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        conv2d_grad_kernel_par(input, grad_out, d)
    }
    #[cfg(not(feature = "parallel"))]
    {
        conv2d_grad_kernel_seq(input, grad_out, d)
    }
}

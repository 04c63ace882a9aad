//! Shared helpers for integration tests: independent oracles and a central
//! finite-difference gradient checker.

#![allow(dead_code)]

use motivnet::autodiff::{Graph, NodeId};
use motivnet::store::ParamStore;
use motivnet::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Naive triple-loop matrix product, independent of the library kernels.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Naive six-loop direct cross-correlation oracle.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Tensor {
    let (n, c_in, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (c_out, kh, kw) = (kernel.shape()[0], kernel.shape()[2], kernel.shape()[3]);
    let h_out = (h + 2 * padding - kh) / stride + 1;
    let w_out = (w + 2 * padding - kw) / stride + 1;
    let mut out = vec![0.0; n * c_out * h_out * w_out];
    for b in 0..n {
        for co in 0..c_out {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for dh in 0..kh {
                            for dw in 0..kw {
                                let ih = (oh * stride + dh) as isize - padding as isize;
                                let iw = (ow * stride + dw) as isize - padding as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= w as isize {
                                    continue;
                                }
                                let xi = ((b * c_in + ci) * h + ih as usize) * w + iw as usize;
                                let ki = ((co * c_in + ci) * kh + dh) * kw + dw;
                                acc += input.data()[xi] * kernel.data()[ki];
                            }
                        }
                    }
                    out[((b * c_out + co) * h_out + oh) * w_out + ow] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[n, c_out, h_out, w_out], out).unwrap()
}

/// Max relative error between analytic gradients and central finite
/// differences (h = 1e-5) over every parameter element of `store`.
///
/// `forward` must rebuild the graph from scratch and return the scalar loss
/// node; it may be called many times.
pub fn max_rel_grad_err<F>(store: &mut ParamStore, mut forward: F) -> f64
where
    F: FnMut(&mut Graph, &mut ParamStore) -> NodeId,
{
    const H: f64 = 1e-5;
    store.zero_grads();
    let mut g = Graph::new();
    let loss = forward(&mut g, store);
    g.backward(loss, store).unwrap();
    let names: Vec<String> = store.param_names().map(str::to_string).collect();
    let analytic: Vec<Vec<f64>> = names
        .iter()
        .map(|n| store.grad(n).unwrap().data().to_vec())
        .collect();

    let mut eval = |store: &mut ParamStore| -> f64 {
        let mut g = Graph::new();
        let loss = forward(&mut g, store);
        g.value(loss).item().unwrap()
    };

    let mut worst: f64 = 0.0;
    for (name, grads) in names.iter().zip(analytic.iter()) {
        for i in 0..grads.len() {
            let orig = store.value(name).unwrap().data()[i];
            store.value_mut(name).unwrap().data_mut()[i] = orig + H;
            let plus = eval(store);
            store.value_mut(name).unwrap().data_mut()[i] = orig - H;
            let minus = eval(store);
            store.value_mut(name).unwrap().data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * H);
            let a = grads[i];
            let denom = a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

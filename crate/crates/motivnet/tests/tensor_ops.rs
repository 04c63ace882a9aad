//! Per-operation examples for the tensor/autodiff core: trivial cases plus
//! independent oracles (naive loops, direct statistics, finite differences).

mod common;

use common::{max_rel_grad_err, naive_conv2d, naive_matmul, random_tensor, rng};
use motivnet::autodiff::Graph;
use motivnet::store::ParamStore;
use motivnet::tensor::Tensor;
use motivnet::Error;

#[test]
fn matmul_identity_case() {
    let mut g = Graph::new();
    let eye = g.constant(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let m = g.constant(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let out = g.matmul(eye, m).unwrap();
    assert_eq!(g.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_projector_case() {
    let mut g = Graph::new();
    let p = g.constant(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap());
    let m = g.constant(Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
    let out = g.matmul(p, m).unwrap();
    assert_eq!(g.value(out).data(), &[5.0, 6.0, 0.0, 0.0]);
}

#[test]
fn matmul_matches_naive_triple_loop() {
    let mut r = rng(11);
    let a = random_tensor(&mut r, &[3, 4], -2.0, 2.0);
    let b = random_tensor(&mut r, &[4, 2], -2.0, 2.0);
    let expect = naive_matmul(a.data(), b.data(), 3, 4, 2);
    let mut g = Graph::new();
    let an = g.constant(a);
    let bn = g.constant(b);
    let out = g.matmul(an, bn).unwrap();
    for (got, want) in g.value(out).data().iter().zip(expect.iter()) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[4, 2]));
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
}

#[test]
fn conv2d_scalar_kernel_scales() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::ones(&[1, 1, 3, 3]));
    let k = g.constant(Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap());
    let out = g.conv2d(x, k, 1, 0).unwrap();
    assert_eq!(g.value(out).shape(), &[1, 1, 3, 3]);
    assert!(g.value(out).data().iter().all(|&v| v == 2.0));
}

#[test]
fn conv2d_delta_kernel_is_identity() {
    let mut r = rng(3);
    let x = random_tensor(&mut r, &[1, 1, 4, 5], -1.0, 1.0);
    let mut kernel = vec![0.0; 9];
    kernel[4] = 1.0; // center of 3x3
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let kn = g.constant(Tensor::from_vec(&[1, 1, 3, 3], kernel).unwrap());
    let out = g.conv2d(xn, kn, 1, 1).unwrap();
    assert_eq!(g.value(out).data(), x.data());
}

#[test]
fn conv2d_matches_naive_six_loop() {
    let mut r = rng(5);
    let x = random_tensor(&mut r, &[1, 2, 5, 5], -1.0, 1.0);
    let k = random_tensor(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
    for (stride, padding) in [(1, 0), (1, 1), (2, 1)] {
        let expect = naive_conv2d(&x, &k, stride, padding);
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let kn = g.constant(k.clone());
        let out = g.conv2d(xn, kn, stride, padding).unwrap();
        assert_eq!(g.value(out).shape(), expect.shape());
        for (got, want) in g.value(out).data().iter().zip(expect.data().iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}

#[test]
fn conv2d_non_integer_output_is_config_error() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 1, 5, 5]));
    let k = g.constant(Tensor::zeros(&[1, 1, 2, 2]));
    assert!(matches!(g.conv2d(x, k, 2, 0), Err(Error::Config(_))));
}

fn bn_buffers(c: usize) -> (Tensor, Tensor) {
    (Tensor::zeros(&[c]), Tensor::ones(&[c]))
}

#[test]
fn batchnorm_already_normalized_input_passes_through() {
    let eps = 1e-5;
    let x = Tensor::from_vec(&[2, 1, 1, 2], vec![-1.0, 1.0, 1.0, -1.0]).unwrap();
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let gamma = g.constant(Tensor::ones(&[1]));
    let beta = g.constant(Tensor::zeros(&[1]));
    let (mut rm, mut rv) = bn_buffers(1);
    let out = g
        .batchnorm2d(xn, gamma, beta, &mut rm, &mut rv, true, 0.1, eps)
        .unwrap();
    for (got, want) in g.value(out).data().iter().zip(x.data().iter()) {
        assert!((got - want).abs() < 2.0 * eps, "{got} vs {want}");
    }
}

#[test]
fn batchnorm_constant_input_becomes_beta() {
    let mut g = Graph::new();
    let xn = g.constant(Tensor::full(&[3, 2, 2, 2], 7.0));
    let gamma = g.constant(Tensor::ones(&[2]));
    let beta = g.constant(Tensor::full(&[2], 5.0));
    let (mut rm, mut rv) = bn_buffers(2);
    let out = g
        .batchnorm2d(xn, gamma, beta, &mut rm, &mut rv, true, 0.1, 1e-5)
        .unwrap();
    for &v in g.value(out).data() {
        assert!((v - 5.0).abs() < 1e-12);
    }
}

#[test]
fn batchnorm_training_statistics_oracle() {
    // with identity affine, per-channel output mean ~0 and variance ~1
    let mut r = rng(9);
    let x = random_tensor(&mut r, &[4, 3, 5, 5], -3.0, 3.0);
    let mut g = Graph::new();
    let xn = g.constant(x);
    let gamma = g.constant(Tensor::ones(&[3]));
    let beta = g.constant(Tensor::zeros(&[3]));
    let (mut rm, mut rv) = bn_buffers(3);
    let out = g
        .batchnorm2d(xn, gamma, beta, &mut rm, &mut rv, true, 0.1, 1e-12)
        .unwrap();
    let y = g.value(out);
    let (n, c, plane) = (4, 3, 25);
    let m = (n * plane) as f64;
    for ch in 0..c {
        let mut mean = 0.0;
        for b in 0..n {
            for p in 0..plane {
                mean += y.data()[(b * c + ch) * plane + p];
            }
        }
        mean /= m;
        assert!(mean.abs() < 1e-9, "channel {ch} mean {mean}");
        let mut var = 0.0;
        for b in 0..n {
            for p in 0..plane {
                let d = y.data()[(b * c + ch) * plane + p] - mean;
                var += d * d;
            }
        }
        var /= m;
        assert!((var - 1.0).abs() < 1e-6, "channel {ch} var {var}");
    }
}

#[test]
fn batchnorm_zero_batch_errors() {
    let mut g = Graph::new();
    let xn = g.constant(Tensor::zeros(&[0, 2, 3, 3]));
    let gamma = g.constant(Tensor::ones(&[2]));
    let beta = g.constant(Tensor::zeros(&[2]));
    let (mut rm, mut rv) = bn_buffers(2);
    assert!(g
        .batchnorm2d(xn, gamma, beta, &mut rm, &mut rv, true, 0.1, 1e-5)
        .is_err());
}

#[test]
fn batchnorm_eval_uses_running_buffers() {
    let mut g = Graph::new();
    let xn = g.constant(Tensor::full(&[1, 1, 1, 2], 3.0));
    let gamma = g.constant(Tensor::ones(&[1]));
    let beta = g.constant(Tensor::zeros(&[1]));
    let mut rm = Tensor::from_vec(&[1], vec![1.0]).unwrap();
    let mut rv = Tensor::from_vec(&[1], vec![4.0]).unwrap();
    let out = g
        .batchnorm2d(xn, gamma, beta, &mut rm, &mut rv, false, 0.1, 0.0)
        .unwrap();
    // (3 - 1) / sqrt(4) = 1
    for &v in g.value(out).data() {
        assert!((v - 1.0).abs() < 1e-12);
    }
    // eval mode leaves buffers untouched
    assert_eq!(rm.data(), &[1.0]);
    assert_eq!(rv.data(), &[4.0]);
}

#[test]
fn backward_of_sum_is_all_ones() {
    let mut store = ParamStore::new();
    store.register("w", Tensor::full(&[2, 3], 0.3), true).unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let loss = g.sum(w);
    g.backward(loss, &mut store).unwrap();
    assert!(store.grad("w").unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn backward_of_annihilated_branch_is_zero() {
    let mut store = ParamStore::new();
    store.register("w", Tensor::full(&[4], 0.7), true).unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let act = g.gelu(w);
    let s = g.sum(act);
    let loss = g.scale(s, 0.0);
    g.backward(loss, &mut store).unwrap();
    assert!(store.grad("w").unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_rejects_non_scalar_and_unrecorded_nodes() {
    let mut store = ParamStore::new();
    store.register("w", Tensor::ones(&[2, 2]), true).unwrap();
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    assert!(matches!(
        g.backward(w, &mut store),
        Err(Error::Usage(_))
    ));
    let g2 = Graph::new();
    assert!(matches!(g2.backward(0, &mut store), Err(Error::Usage(_))));
}

#[test]
fn backward_is_linear_in_loss_scale() {
    let mut r = rng(21);
    let mut store = ParamStore::new();
    store
        .register("w", random_tensor(&mut r, &[3, 4], -1.0, 1.0), true)
        .unwrap();
    store
        .register("b", random_tensor(&mut r, &[4], -1.0, 1.0), true)
        .unwrap();
    let x = random_tensor(&mut r, &[2, 3], -1.0, 1.0);
    let labels = vec![1, 3];
    let run = |store: &mut ParamStore, factor: f64| -> Vec<f64> {
        store.zero_grads();
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let w = g.param(store, "w").unwrap();
        let b = g.param(store, "b").unwrap();
        let h = g.matmul(xn, w).unwrap();
        let h = g.add_bias(h, b).unwrap();
        let loss = g.softmax_cross_entropy(h, &labels).unwrap();
        let loss = g.scale(loss, factor);
        g.backward(loss, store).unwrap();
        let mut out = store.grad("w").unwrap().data().to_vec();
        out.extend_from_slice(store.grad("b").unwrap().data());
        out
    };
    let g1 = run(&mut store, 1.0);
    let g4 = run(&mut store, 4.0);
    for (a, b) in g1.iter().zip(g4.iter()) {
        // scaling by a power of two is exact in floating point
        assert_eq!(a * 4.0, *b);
    }
}

#[test]
fn relu_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(&[4], vec![-2.0, -0.0, 0.5, 3.0]).unwrap());
    let y = g.relu(x);
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.5, 3.0]);
}

#[test]
fn gelu_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(&[3], vec![-1e3, 0.0, 1e3]).unwrap());
    let y = g.gelu(x);
    // saturates to 0 / identity at the tails, exactly 0 at 0
    assert!((g.value(y).data()[0]).abs() < 1e-9);
    assert_eq!(g.value(y).data()[1], 0.0);
    assert!((g.value(y).data()[2] - 1e3).abs() < 1e-9);
}

#[test]
fn add_and_global_avg_pool_examples() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::full(&[1, 2, 2, 2], 1.5));
    let b = g.constant(Tensor::full(&[1, 2, 2, 2], 0.5));
    let s = g.add(a, b).unwrap();
    let p = g.global_avg_pool(s).unwrap();
    assert_eq!(g.value(p).shape(), &[1, 2]);
    assert_eq!(g.value(p).data(), &[2.0, 2.0]);
    // mismatched shapes refuse
    let c = g.constant(Tensor::zeros(&[1, 2, 2, 3]));
    assert!(g.add(a, c).is_err());
}

#[test]
fn flatten_and_dense_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let f = g.flatten(x).unwrap();
    assert_eq!(g.value(f).shape(), &[1, 4]);
    // dense affine: y = x W + b
    let w = g.constant(Tensor::from_vec(&[4, 2], vec![1.0; 8]).unwrap());
    let b = g.constant(Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap());
    let h = g.matmul(f, w).unwrap();
    let y = g.add_bias(h, b).unwrap();
    assert_eq!(g.value(y).data(), &[10.5, 9.5]);
}

#[test]
fn softmax_cross_entropy_uniform_logits() {
    for c in [2usize, 10, 37] {
        let mut g = Graph::new();
        let logits = g.constant(Tensor::full(&[3, c], 0.42));
        let loss = g.softmax_cross_entropy(logits, &[0, c - 1, c / 2]).unwrap();
        let v = g.value(loss).item().unwrap();
        assert!(v >= 0.0);
        assert!((v - (c as f64).ln()).abs() < 1e-12, "c={c} loss={v}");
    }
}

#[test]
fn layernorm_normalizes_rows() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let gamma = g.constant(Tensor::ones(&[4]));
    let beta = g.constant(Tensor::zeros(&[4]));
    let y = g.layernorm(x, gamma, beta, 1e-12).unwrap();
    let row = g.value(y).data();
    let mean: f64 = row.iter().sum::<f64>() / 4.0;
    let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-6);
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut r = rng(77);
    let mut store = ParamStore::new();
    store
        .register("l0.weight", random_tensor(&mut r, &[5, 6], -0.5, 0.5), true)
        .unwrap();
    store
        .register("l0.bias", random_tensor(&mut r, &[6], -0.5, 0.5), true)
        .unwrap();
    store
        .register("l1.weight", random_tensor(&mut r, &[6, 3], -0.5, 0.5), true)
        .unwrap();
    store
        .register("l1.bias", random_tensor(&mut r, &[3], -0.5, 0.5), true)
        .unwrap();
    let x = random_tensor(&mut r, &[4, 5], -1.0, 1.0);
    let labels = vec![0, 2, 1, 1];
    let err = max_rel_grad_err(&mut store, |g, store| {
        let xn = g.constant(x.clone());
        let w0 = g.param(store, "l0.weight").unwrap();
        let b0 = g.param(store, "l0.bias").unwrap();
        let w1 = g.param(store, "l1.weight").unwrap();
        let b1 = g.param(store, "l1.bias").unwrap();
        let h = g.matmul(xn, w0).unwrap();
        let h = g.add_bias(h, b0).unwrap();
        let h = g.relu(h);
        let h = g.matmul(h, w1).unwrap();
        let h = g.add_bias(h, b1).unwrap();
        g.softmax_cross_entropy(h, &labels).unwrap()
    });
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn forward_determinism_same_inputs_same_bits() {
    let mut r = rng(55);
    let x = random_tensor(&mut r, &[2, 3, 6, 6], -1.0, 1.0);
    let k = random_tensor(&mut r, &[4, 3, 3, 3], -1.0, 1.0);
    let run = || {
        let mut g = Graph::new();
        let xn = g.constant(x.clone());
        let kn = g.constant(k.clone());
        let c = g.conv2d(xn, kn, 1, 1).unwrap();
        let a = g.relu(c);
        let p = g.global_avg_pool(a).unwrap();
        g.value(p).data().iter().map(|v| v.to_bits()).collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}

//! Sequential vs data-parallel kernels, plus a whole-training-step
//! benchmark through the dispatch path the trainer actually uses.
//!
//! With default features the dispatch functions run the rayon versions;
//! `--no-default-features` measures the sequential fallback under the same
//! names. The `*_seq` baselines are always available for comparison.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use motivnet::data::{make_synthetic, SyntheticKind};
use motivnet::kernels::{
    conv2d_forward_dispatch, conv2d_forward_seq, conv2d_grad_kernel_dispatch,
    conv2d_grad_kernel_seq, matmul_dispatch, matmul_seq, ConvDims,
};
use motivnet::motivation::ConditionKind;
use motivnet::optim::{OptimizerKind, Schedule, ScheduleKind};
use motivnet::trainer::{train, Mode, RunConfig};
use motivnet::zoo::{ArchConfig, Family};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for size in [64usize, 128, 256] {
        let a = random_vec(&mut rng, size * size);
        let b = random_vec(&mut rng, size * size);
        group.bench_with_input(BenchmarkId::new("seq", size), &size, |bench, &s| {
            bench.iter(|| matmul_seq(&a, &b, s, s, s))
        });
        group.bench_with_input(BenchmarkId::new("dispatch", size), &size, |bench, &s| {
            bench.iter(|| matmul_dispatch(&a, &b, s, s, s))
        });
    }
    group.finish();
}

fn conv_dims(batch: usize, c: usize, hw: usize) -> ConvDims {
    ConvDims {
        batch,
        c_in: c,
        h: hw,
        w: hw,
        c_out: c,
        kh: 3,
        kw: 3,
        stride: 1,
        padding: 1,
        h_out: hw,
        w_out: hw,
    }
}

fn bench_conv2d(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (batch, channels, hw) in [(8usize, 16usize, 16usize), (16, 32, 16)] {
        let d = conv_dims(batch, channels, hw);
        let input = random_vec(&mut rng, batch * channels * hw * hw);
        let kernel = random_vec(&mut rng, channels * channels * 9);
        let grad_out = random_vec(&mut rng, batch * channels * hw * hw);
        let label = format!("{batch}x{channels}x{hw}");
        group.bench_function(BenchmarkId::new("forward_seq", &label), |bench| {
            bench.iter(|| conv2d_forward_seq(&input, &kernel, &d))
        });
        group.bench_function(BenchmarkId::new("forward_dispatch", &label), |bench| {
            bench.iter(|| conv2d_forward_dispatch(&input, &kernel, &d))
        });
        group.bench_function(BenchmarkId::new("grad_kernel_seq", &label), |bench| {
            bench.iter(|| conv2d_grad_kernel_seq(&input, &grad_out, &d))
        });
        group.bench_function(BenchmarkId::new("grad_kernel_dispatch", &label), |bench| {
            bench.iter(|| conv2d_grad_kernel_dispatch(&input, &grad_out, &d))
        });
    }
    group.finish();
}

fn bench_training_epoch(c: &mut Criterion) {
    let data = make_synthetic(SyntheticKind::Blobs, 256, 4, 0.2, 3, (3, 8, 8)).unwrap();
    let config = RunConfig {
        base: ArchConfig::preset(Family::WidthConvNet, 0, 4, (3, 8, 8)),
        motivated: ArchConfig::preset(Family::WidthConvNet, 1, 4, (3, 8, 8)),
        condition: ConditionKind::ConsecutiveDecrease { k: 2 },
        optimizer: OptimizerKind::Sgd {
            momentum: 0.9,
            weight_decay: 0.0,
        },
        schedule: Schedule {
            kind: ScheduleKind::CosineDecay,
            base_lr: 0.05,
        },
        epochs: 1,
        batch_size: 32,
        seed: 7,
        mode: Mode::Motivated,
    };
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    group.bench_function("convnet_motivated", |bench| {
        bench.iter(|| train(&config, &data).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_conv2d, bench_training_epoch);
criterion_main!(benches);

//! Sequential vs rayon kernels, plus end-to-end step timings as compiled
//! (parallel by default; build with --no-default-features for the fallback).

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsc_core::tensor::kernels::{self, ConvDims};

fn conv_input(rng: &mut ChaCha8Rng, d: ConvDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let input = (0..d.batch * d.height * d.width * d.in_channels)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let kernel = (0..d.kh * d.kw * d.in_channels * d.out_channels)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let bias = (0..d.out_channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (input, kernel, bias)
}

fn bench_conv2d(c: &mut Criterion) {
    let d = ConvDims {
        batch: 64,
        height: 16,
        width: 16,
        in_channels: 8,
        out_channels: 16,
        kh: 3,
        kw: 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (input, kernel, bias) = conv_input(&mut rng, d);
    let mut out = vec![0.0; d.batch * d.height * d.width * d.out_channels];

    let mut group = c.benchmark_group("conv2d_forward");
    group.bench_function("seq", |b| {
        b.iter(|| {
            kernels::conv2d_forward_seq(&input, &kernel, &bias, d, &mut out);
            black_box(&out);
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| {
        b.iter(|| {
            kernels::conv2d_forward_par(&input, &kernel, &bias, d, &mut out);
            black_box(&out);
        })
    });
    group.finish();

    let d_out = out.clone();
    let mut d_in = vec![0.0; input.len()];
    let mut group = c.benchmark_group("conv2d_backward_input");
    group.bench_function("seq", |b| {
        b.iter(|| {
            kernels::conv2d_backward_input_seq(&d_out, &kernel, d, &mut d_in);
            black_box(&d_in);
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| {
        b.iter(|| {
            kernels::conv2d_backward_input_par(&d_out, &kernel, d, &mut d_in);
            black_box(&d_in);
        })
    });
    group.finish();

    let mut d_k = vec![0.0; kernel.len()];
    let mut group = c.benchmark_group("conv2d_backward_kernel");
    group.bench_function("seq", |b| {
        b.iter(|| {
            kernels::conv2d_backward_kernel_seq(&input, &d_out, d, &mut d_k);
            black_box(&d_k);
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| {
        b.iter(|| {
            kernels::conv2d_backward_kernel_par(&input, &d_out, d, &mut d_k);
            black_box(&d_k);
        })
    });
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let (m, k, n) = (256, 1024, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; m * n];

    let mut group = c.benchmark_group("matmul");
    group.bench_function("seq", |bch| {
        bch.iter(|| {
            kernels::matmul_seq(&a, &b, &mut out, m, k, n);
            black_box(&out);
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |bch| {
        bch.iter(|| {
            kernels::matmul_par(&a, &b, &mut out, m, k, n);
            black_box(&out);
        })
    });
    group.finish();
}

criterion_group!(benches, bench_conv2d, bench_matmul);
criterion_main!(benches);

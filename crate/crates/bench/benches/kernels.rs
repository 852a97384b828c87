use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use polymer_bench::{fixture, reference_law};
use polymer_core::env::site_uniform;
use polymer_core::lattice::{backward_field, point_partition};
use polymer_core::localization::overlap_trace;
use polymer_core::martingale::martingale_trace;
use polymer_core::moments::{log_second_moment_curve, return_sequence};
use polymer_core::oracle::enumerate_partition;
use polymer_core::TestFunction;

fn bench_rng(c: &mut Criterion) {
    c.bench_function("site_uniform", |b| {
        let mut t = 0i64;
        b.iter(|| {
            t += 1;
            site_uniform(black_box(7), t, &[3, -2, 5])
        })
    });
}

fn bench_forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("point_partition");
    for (d, n) in [(1usize, 256i64), (2, 64), (3, 32)] {
        let (cfg, env) = fixture(d, n, 0.8);
        g.bench_with_input(BenchmarkId::new(format!("d{d}"), n), &n, |b, &n| {
            b.iter(|| point_partition(&cfg, &env, &vec![0; d], n).unwrap())
        });
    }
    g.finish();
}

fn bench_backward(c: &mut Criterion) {
    let (cfg, env) = fixture(3, 24, 0.8);
    c.bench_function("backward_field/d3/24", |b| {
        b.iter(|| backward_field(&cfg, &env, 24, &[0, 0, 0], 0, None).unwrap())
    });
}

fn bench_traces(c: &mut Criterion) {
    let (cfg, env) = fixture(2, 32, 0.8);
    let f = TestFunction::default();
    c.bench_function("martingale_trace/d2/32", |b| {
        b.iter(|| martingale_trace(&f, &cfg, &env, 32).unwrap())
    });
    c.bench_function("overlap_trace/d2/32", |b| b.iter(|| overlap_trace(&cfg, &env, 32).unwrap()));
}

fn bench_moments(c: &mut Criterion) {
    let law = reference_law();
    c.bench_function("return_sequence/d3/1024", |b| b.iter(|| return_sequence(3, black_box(1024)).unwrap()));
    c.bench_function("log_second_moment_curve/d3/4096", |b| {
        b.iter(|| log_second_moment_curve(3, black_box(4096), 1.0, &law).unwrap())
    });
}

fn bench_oracle(c: &mut Criterion) {
    let (cfg, env) = fixture(2, 7, 0.8);
    c.bench_function("enumerate_partition/d2/7", |b| {
        b.iter(|| enumerate_partition(2, 7, &[0, 0], &env, cfg.beta, &cfg.law, None, None).unwrap())
    });
}

criterion_group!(rng, bench_rng);
criterion_group!(dp, bench_forward, bench_backward, bench_traces);
criterion_group!(exact, bench_moments, bench_oracle);
criterion_main!(rng, dp, exact);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pomdp_core::belief::{correct, predict};
use pomdp_core::metrics::{hilbert_metric, wasserstein1, StateMetric};
use pomdp_core::quantized::{build_grid, build_quantized_model, value_iterate, LbarParams};
use pomdp_core::{fixtures, Belief};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn filter_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = fixtures::random_model(&mut rng, 8, 3, 4, 0.01);
    let prior = Belief::uniform(8);
    c.bench_function("filter step n=8", |b| {
        b.iter(|| correct(&model, &predict(&model, black_box(prior.probs()), 1), 2).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("metrics");
    for n in [4usize, 16, 64] {
        let mu = pomdp_core::quantized::sample_simplex(&mut rng, n);
        let nu = pomdp_core::quantized::sample_simplex(&mut rng, n);
        let coords: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let metric = StateMetric::from_coords(&coords).unwrap();
        group.bench_with_input(BenchmarkId::new("wasserstein1", n), &n, |b, _| {
            b.iter(|| wasserstein1(black_box(&mu), black_box(&nu), &metric).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("hilbert", n), &n, |b, _| {
            b.iter(|| hilbert_metric(black_box(&mu), black_box(&nu)))
        });
    }
    group.finish();
}

fn quantized_solve(c: &mut Criterion) {
    let model = fixtures::twostate();
    let mut group = c.benchmark_group("quantized");
    group.sample_size(20);
    for m in [16usize, 64] {
        let grid = build_grid(&model, m).unwrap();
        group.bench_with_input(BenchmarkId::new("build", m), &m, |b, _| {
            b.iter(|| build_quantized_model(&model, &grid, LbarParams { samples_per_bin: 0, seed: 0 }).unwrap())
        });
        let q = build_quantized_model(&model, &grid, LbarParams { samples_per_bin: 0, seed: 0 }).unwrap();
        group.bench_with_input(BenchmarkId::new("value_iterate", m), &m, |b, _| {
            b.iter(|| value_iterate(&q, 0.9, 1e-9).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, filter_step, metrics, quantized_solve);
criterion_main!(benches);

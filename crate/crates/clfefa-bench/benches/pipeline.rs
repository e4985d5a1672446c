//! Criterion benchmarks for the hot paths: the closed-form similarity
//! update, the analytic gradient, the eigen step, and a small full fit.

use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use std::hint::black_box;

use clfefa::dataset::{Embedding, Projection, SupervisionMode};
use clfefa::graph::{SimilarityMatrix, gamma_for_row, laplacian, update_similarity, update_similarity_row, update_spectral};
use clfefa::ingest::make_blobs;
use clfefa::objective::{Kernel, gradient};
use clfefa::params::HyperParams;
use clfefa::supervision::IndicatorMatrix;
use clfefa::{Matrix, rng};
use rand::Rng;

fn random_row(n: usize, seed: u64) -> (Vec<f64>, f64, usize) {
    let mut rng = rng::from_seed(seed);
    let k = 6;
    let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    d[0] = f64::INFINITY;
    let mut sorted = d.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gamma = gamma_for_row(&sorted, k).unwrap();
    (d, gamma, k)
}

fn bench_similarity_row(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_row");
    for n in [50usize, 200, 1000] {
        let (d, gamma, k) = random_row(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| update_similarity_row(black_box(&d), gamma, k).unwrap())
        });
    }
    group.finish();
}

fn graph_inputs(n: usize) -> (Embedding, clfefa::graph::SpectralEmbedding, IndicatorMatrix, HyperParams) {
    let mut rng = rng::from_seed(2);
    let y = Embedding::from_matrix(Matrix::from_fn(8, n, |_, _| rng.random_range(-1.0..1.0)));
    let f = clfefa::graph::SpectralEmbedding::from_matrix(Matrix::from_fn(n, 3, |_, _| {
        rng.random_range(-1.0..1.0)
    }));
    let h = IndicatorMatrix::from_matrix(Matrix::repeat(n, n, 1.0));
    let params = HyperParams { k: 6, c: 3, d: 8, lambda: 0.5, ..Default::default() };
    (y, f, h, params)
}

fn bench_similarity_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("similarity_update");
    group.sample_size(20);
    for n in [60usize, 200] {
        let (y, f, h, params) = graph_inputs(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| update_similarity(black_box(&y), &f, &h, &params).unwrap())
        });
    }
    group.finish();
}

fn bench_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("contrastive_gradient");
    group.sample_size(30);
    for (n, dim, d) in [(60usize, 256usize, 30usize), (200, 64, 10)] {
        let mut rng = rng::from_seed(3);
        let x = Matrix::from_fn(dim, n, |_, _| rng.random_range(0.0..1.0));
        let p = Projection::new(Matrix::from_fn(dim, d, |_, _| rng.random_range(-0.1..0.1))).unwrap();
        let h = IndicatorMatrix::from_matrix(Matrix::repeat(n, n, 1.0));
        let mut s = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
        for mut row in s.row_iter_mut() {
            let total: f64 = row.iter().sum();
            row /= total;
        }
        let s = SimilarityMatrix::from_matrix(s);
        let kernel = Kernel::new(1.0).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("n{n}_D{dim}_d{d}")),
            &n,
            |b, _| b.iter(|| gradient(black_box(&x), &p, &h, &s, &kernel).unwrap()),
        );
    }
    group.finish();
}

fn bench_spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_step");
    group.sample_size(20);
    for n in [60usize, 200] {
        let (y, f, h, params) = graph_inputs(n);
        let s = update_similarity(&y, &f, &h, &params).unwrap();
        let lap = laplacian(&s).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| update_spectral(black_box(&lap), 3).unwrap())
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    let ds = make_blobs(10, 3, 5, 10.0, 0.5, 4).unwrap();
    let params = HyperParams { k: 4, c: 3, d: 2, max_outer: 5, ..Default::default() };
    group.bench_function("blobs_n30", |b| {
        b.iter(|| clfefa::trainer::fit(black_box(&ds), SupervisionMode::Unsupervised, &params).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_similarity_row,
    bench_similarity_update,
    bench_gradient,
    bench_spectral,
    bench_fit
);
criterion_main!(benches);

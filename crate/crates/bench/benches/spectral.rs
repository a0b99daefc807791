use std::hint::black_box;

use bargain_core::linear_model::{build_blossom, build_cycle, path_matrix, LoopCase};
use bargain_core::spectral::{bicycle_spectrum, blossom_spectrum, symmetric_eigen_oracle, verify_eigen_det};
use criterion::{criterion_group, criterion_main, Criterion};

fn oracles(c: &mut Criterion) {
    let path = path_matrix(50);
    c.bench_function("jacobi path n=50", |b| b.iter(|| symmetric_eigen_oracle(black_box(&path))));
    let cycle = build_cycle(50, 1.0).unwrap().a;
    c.bench_function("jacobi cycle n=50", |b| b.iter(|| symmetric_eigen_oracle(black_box(&cycle))));
    let a = build_blossom(6, 7, LoopCase::Case1, 1.0).unwrap().a;
    let values = blossom_spectrum(6, 7).values();
    c.bench_function("det residual blossom (6,7), all eigenvalues", |b| {
        b.iter(|| values.iter().map(|&v| verify_eigen_det(black_box(&a), v)).fold(0.0, f64::max))
    });
}

fn closed_forms(c: &mut Criterion) {
    c.bench_function("bicycle_spectrum (40,20,40)", |b| {
        b.iter(|| bicycle_spectrum(black_box(40), black_box(20), black_box(40)))
    });
}

criterion_group!(benches, oracles, closed_forms);
criterion_main!(benches);

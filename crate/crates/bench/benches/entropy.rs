use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use logifold_bench::ensemble;
use logifold_core::cores::{default_grid, threshold_sweep};
use logifold_core::laws::{verify_laws, LawScope};

fn pointwise(c: &mut Criterion) {
    let mut group = c.benchmark_group("pointwise_entropies");
    for models in [2, 4, 8] {
        let e = ensemble(1000, 10, models);
        group.bench_with_input(BenchmarkId::from_parameter(models), &e, |b, e| {
            b.iter(|| black_box(e.pointwise_entropies()))
        });
    }
    group.finish();
}

fn totals(c: &mut Criterion) {
    let e = ensemble(1000, 10, 4);
    c.bench_function("total_entropy", |b| b.iter(|| black_box(e.total_entropy(true))));
    c.bench_function("conservation_residual", |b| {
        b.iter(|| black_box(e.conservation_residual().unwrap()))
    });
}

fn sweep(c: &mut Criterion) {
    let grid = default_grid();
    let mut group = c.benchmark_group("threshold_sweep");
    for samples in [200, 1000] {
        let e = ensemble(samples, 10, 4);
        group.bench_with_input(BenchmarkId::from_parameter(samples), &e, |b, e| {
            b.iter(|| black_box(threshold_sweep(e, &grid).unwrap()))
        });
    }
    group.finish();
}

fn laws(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_laws");
    group.sample_size(10);
    group.bench_function("all_10_trials", |b| {
        b.iter(|| black_box(verify_laws(LawScope::All, 1, 10).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, pointwise, totals, sweep, laws);
criterion_main!(benches);

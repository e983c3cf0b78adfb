use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use resilient_bench::{chain_plant, sim_fixture};
use resilient_core::matrix::{mat_exp, solve_lyapunov};
use resilient_core::trigger::riccati_delta2;
use resilient_core::RealMatrix;

fn matrix_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("matrix");
    for n in [2, 4, 8] {
        let plant = chain_plant(n);
        let phi = plant.closed_loop_matrix().clone();
        g.bench_with_input(BenchmarkId::new("expm", n), &phi, |b, m| b.iter(|| mat_exp(black_box(m), 0.7).unwrap()));
        let q = RealMatrix::identity(n);
        g.bench_with_input(BenchmarkId::new("lyapunov", n), &phi, |b, m| b.iter(|| solve_lyapunov(black_box(m), &q).unwrap()));
    }
    g.finish();
}

fn riccati(c: &mut Criterion) {
    c.bench_function("riccati_delta2", |b| b.iter(|| riccati_delta2(black_box(2.3), black_box(1.7), black_box(0.2)).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("sim");
    g.sample_size(10);
    for n in [2, 4] {
        let cfg = sim_fixture(n);
        g.bench_with_input(BenchmarkId::new("event_time_run", n), &cfg, |b, cfg| b.iter(|| resilient_core::sim::run(black_box(cfg)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, matrix_kernels, riccati, simulation);
criterion_main!(benches);

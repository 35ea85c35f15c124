use criterion::{criterion_group, criterion_main, Criterion};
use rpca_bench::instance;
use rpca_core::solver::{self, SolverConfig};
use rpca_core::unrolled::{self, UnrolledParams};
use std::hint::black_box;

fn solve_and_forward(c: &mut Criterion) {
    let t = instance(250, 7);
    let mut group = c.benchmark_group("d250");
    group.sample_size(20);
    let cfg = SolverConfig::with_defaults(250, 250, 2);
    group.bench_function("accaltproj", |b| {
        b.iter(|| solver::solve(black_box(&t.m_star), &cfg).unwrap())
    });
    let p = UnrolledParams::with_defaults(250, 250);
    group.bench_function("unrolled_forward_k20", |b| {
        b.iter(|| unrolled::forward(black_box(&t.m_star), 2, &p).unwrap())
    });
    let prep = unrolled::prepare(&t.m_star, 2, &p).unwrap();
    group.bench_function("unrolled_forward_k20_prepared", |b| {
        b.iter(|| unrolled::forward_prepared(&prep, black_box(&t.m_star), &p).unwrap())
    });
    group.finish();
}

criterion_group!(benches, solve_and_forward);
criterion_main!(benches);

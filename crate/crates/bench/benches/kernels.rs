use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rpca_bench::projection_inputs;
use rpca_core::linalg;
use std::hint::black_box;

fn rank_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_r_after_tangent");
    for d in [100, 250, 500] {
        let (a, basis) = projection_inputs(d, 2, 1);
        group.bench_with_input(BenchmarkId::new("structured", d), &d, |b, _| {
            b.iter(|| {
                let f = linalg::tangent_factors(black_box(&a), &basis).unwrap();
                linalg::structured_rank_projection(&f, &basis, 2).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("dense", d), &d, |b, _| {
            b.iter(|| {
                let (p, _) = linalg::tangent_projection(black_box(&a), &basis).unwrap();
                linalg::truncated_svd(&p, 2).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, rank_projection);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use swe_esdg::bench::{kernel_fluxdiff, kernel_matvec, Exec, KernelCase, BENCH_G};
use swe_esdg::diagnostics::{lake_at_rest_setup, Problem};
use swe_esdg::mesh::Periodicity;
use swe_esdg::solver::{Discretization, Penalty, Scheme};

const ELEMENTS: usize = 256;

fn kernels(c: &mut Criterion) {
    for n in [10, 50, 200] {
        let case = KernelCase::generate(n, ELEMENTS, 1);
        let mut out = vec![[0.0; 3]; n * ELEMENTS];
        let mut group = c.benchmark_group(format!("n{n}"));
        for (name, exec) in [("seq", Exec::Sequential), ("par", Exec::Parallel)] {
            group.bench_function(BenchmarkId::new("dg-matvec", name), |b| {
                b.iter(|| kernel_matvec(&case.q, black_box(&case.states), BENCH_G, &mut out, exec))
            });
            group.bench_function(BenchmarkId::new("esdg-fluxdiff", name), |b| {
                b.iter(|| {
                    kernel_fluxdiff(&case.q, black_box(&case.states), BENCH_G, &mut out, exec)
                })
            });
        }
        group.finish();
    }
}

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for n in [2, 4] {
        let mesh = Problem::Lake.mesh(8, 8, 0.1).unwrap();
        let mut disc = Discretization::new(
            mesh,
            Periodicity::XY,
            n,
            Scheme::Hybridized,
            Penalty::LaxFriedrichs,
            1.0,
        )
        .unwrap();
        let s = lake_at_rest_setup(&mut disc);
        let mut du = vec![[0.0; 3]; s.u.len()];
        group.bench_function(BenchmarkId::new("hybridized", n), |b| {
            b.iter(|| disc.rhs(black_box(&s.u), 0.0, &mut du).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, rhs);
criterion_main!(benches);

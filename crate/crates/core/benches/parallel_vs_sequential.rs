use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pmean_fair::exact::{enumerate_optima_with, grid_oracle_divisible_with};
use pmean_fair::fairness::check_po_integral_with;
use pmean_fair::instance::{IntegralAllocation, Kind};
use pmean_fair::sample;
use pmean_fair::{Execution, PMean};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn enumerate(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate_optima");
    group.sample_size(10);
    let inst = sample::dense(&mut sample::rng(5), Kind::Goods, 3, 11);
    let p = PMean::new(-1.0).unwrap();
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, "3x11"), &exec, |b, &exec| {
            b.iter(|| enumerate_optima_with(black_box(&inst), p, exec).unwrap())
        });
    }
    group.finish();
}

fn po_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("check_po_integral");
    group.sample_size(10);
    let inst = sample::dense(&mut sample::rng(6), Kind::Chores, 4, 9);
    // Round robin is typically Pareto optimal only by chance, so the search usually runs to the end.
    let alloc = IntegralAllocation::new(4, (0..9).map(|j| j % 4).collect()).unwrap();
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, "4x9"), &exec, |b, &exec| {
            b.iter(|| check_po_integral_with(black_box(&inst), &alloc, exec).unwrap())
        });
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_oracle");
    group.sample_size(10);
    let inst = sample::dense(&mut sample::rng(7), Kind::Goods, 2, 3);
    let p = PMean::new(0.5).unwrap();
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, "2x3_r150"), &exec, |b, &exec| {
            b.iter(|| grid_oracle_divisible_with(black_box(&inst), p, 150, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, enumerate, po_search, grid);
criterion_main!(benches);

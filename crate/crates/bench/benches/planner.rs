use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mergeplan_bench::{fixture_model, fixture_trace};
use mergeplan_core::comm_model::{AllReduceAlgorithm, NetworkParams, TreeStartup};
use mergeplan_core::{brute_force_plan, evaluate, greedy_plan, optimal_plan, resnet50_like, run_sweep, sweep, MergePlan};

fn bench_planners(c: &mut Criterion) {
    let comm = fixture_model();
    let mut group = c.benchmark_group("planners");
    for layers in [12usize, 161, 604] {
        let trace = fixture_trace(layers);
        group.bench_with_input(BenchmarkId::new("greedy", layers), &trace, |b, t| {
            b.iter(|| greedy_plan(black_box(t), &comm).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("optimal", layers), &trace, |b, t| {
            b.iter(|| optimal_plan(black_box(t), &comm).unwrap())
        });
    }
    let small = fixture_trace(12);
    group.bench_function("brute_force/12", |b| {
        b.iter(|| brute_force_plan(black_box(&small), &comm, 20).unwrap())
    });
    group.finish();
}

fn bench_timeline(c: &mut Criterion) {
    let comm = fixture_model();
    let trace = fixture_trace(161);
    let plan = MergePlan::all_normal(161);
    c.bench_function("evaluate/161", |b| {
        b.iter(|| evaluate(black_box(&trace), &plan, &comm).unwrap())
    });
}

fn bench_sweep(c: &mut Criterion) {
    let trace = resnet50_like();
    let net = NetworkParams::from_ring_fit(&fixture_model(), 16).unwrap();
    let counts = sweep::default_worker_counts();
    c.bench_function("sweep/ring/resnet50_like", |b| {
        b.iter(|| run_sweep(&trace, &net, AllReduceAlgorithm::Ring, TreeStartup::default(), &counts).unwrap())
    });
}

criterion_group!(benches, bench_planners, bench_timeline, bench_sweep);
criterion_main!(benches);

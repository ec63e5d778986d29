use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use scheduleak::decompose::{decompose_all, ToleranceMode};
use scheduleak::generator::{generate_taskset, GenConfig};
use scheduleak::harness::{run_sweep, SweepConfig};
use scheduleak::simulator::{busy_intervals, simulate, VariationModel};
use scheduleak::Execution;

fn strategies() -> Vec<(&'static str, Execution)> {
    #[allow(unused_mut, clippy::useless_vec)]
    let mut v = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Execution::Parallel));
    v
}

fn bench_decompose(c: &mut Criterion) {
    let set = generate_taskset(&GenConfig::new(15, (0.8, 0.9), 11))
        .and_then(|s| s.with_acet_fraction(0.8))
        .expect("feasible draw");
    let trace = simulate(&set, set.hyper_period(), &VariationModel::truncated_normal(0.8), 1).unwrap();
    let bis = busy_intervals(&trace);
    let mut group = c.benchmark_group("decompose_all");
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| decompose_all(black_box(&set), black_box(&bis), ToleranceMode::PerVector, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("utilization_sweep");
    group.sample_size(10);
    for (name, exec) in strategies() {
        let mut cfg = SweepConfig::utilization(VariationModel::truncated_normal(0.8), 7);
        cfg.sets_per_bin = 4;
        cfg.exec = exec;
        group.bench_function(name, |b| b.iter(|| run_sweep(black_box(&cfg)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_decompose, bench_sweep);
criterion_main!(benches);

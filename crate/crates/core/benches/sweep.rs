use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use graphsys::experiment::{run_sweep_with, AlphaMode, ExperimentConfig};
use graphsys::gbf::{FilterKind, FilterSpec};
use graphsys::graph::{GraphKind, GraphModelSpec};
use graphsys::par::Execution;

fn config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        GraphModelSpec::new(GraphKind::Modular, 16, 0),
        FilterSpec::new(FilterKind::ExponentialDecay, 0.5).unwrap(),
    );
    cfg.trials = 4;
    cfg.k_over_n = vec![5.0, 30.0];
    cfg.alpha_mode = AlphaMode::Grid;
    cfg.seed = 7;
    cfg
}

fn sweep(c: &mut Criterion) {
    let cfg = config();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        group.bench_function(name, |b| b.iter(|| run_sweep_with(black_box(&cfg), exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);

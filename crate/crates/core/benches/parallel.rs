use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use commute_reg::graph::{monte_carlo_commute_with, GraphPreset};
use commute_reg::pipeline::{run_experiment, ExperimentSpec};
use commute_reg::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn commute_walks(c: &mut Criterion) {
    let g = GraphPreset::G0.build(6).unwrap();
    let mut group = c.benchmark_group("commute_walks");
    for walks in [10_000usize, 100_000] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, walks), &walks, |b, &w| {
                b.iter(|| black_box(monte_carlo_commute_with(&g, 0, 5, w, 11, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn training_sweep(c: &mut Criterion) {
    let mut spec = ExperimentSpec::benchmark();
    spec.runs = 2;
    spec.subjects = 2;
    spec.axes.truncate(1);
    spec.flip_rates.truncate(1);
    spec.train.epochs = 20;
    let mut group = c.benchmark_group("training_sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(15));
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| black_box(run_experiment(&spec, exec).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, commute_walks, training_sweep);
criterion_main!(benches);

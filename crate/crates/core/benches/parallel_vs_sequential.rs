use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pipeline_ranker::eval::{generate_synthetic_kb, loo_evaluate_with, OracleConfig};
use pipeline_ranker::kb::Metric;
use pipeline_ranker::par::Execution;
use pipeline_ranker::ranker::{build_training_groups, train_with, RankConfig};
use pipeline_ranker::tabular::Task;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn bench(c: &mut Criterion) {
    let s = generate_synthetic_kb(&OracleConfig { n_datasets: 8, n_pipelines: 150, ..OracleConfig::default() })
        .expect("synthetic kb");
    let set = build_training_groups(&s.kb, Task::Classification, Metric::Accuracy).expect("groups");
    let config = RankConfig { n_trees: 20, ..RankConfig::default() };

    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_with(&set, &config, exec).unwrap())
        });
    }
    group.finish();

    let model = train_with(&set, &config, Execution::Sequential).unwrap();
    let mf = &s.kb.records().next().unwrap().meta_features;
    let mut group = c.benchmark_group("rank");
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.rank_candidates_with(mf, &s.pipelines, exec).unwrap())
        });
    }
    group.finish();

    let small = RankConfig { n_trees: 5, ..RankConfig::default() };
    let mut group = c.benchmark_group("leave_one_out");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| loo_evaluate_with(&s.kb, Task::Classification, Metric::Accuracy, &small, &[1, 5, 10], exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

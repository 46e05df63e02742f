use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leverage_sim::embedding::{verify_embedding, EmbeddingConfig, EmbeddingMode, SearchOptions};
use leverage_sim::fitting::{fit_unknown_f, FitOptions, LabelOracle};
use leverage_sim::harness::gen_gaussian;
use leverage_sim::{Exec, Nonlinearity, SamplingPlan};

fn embedding_trials(c: &mut Criterion) {
    let x = gen_gaussian(1000, 4, 1).unwrap();
    let mut group = c.benchmark_group("embedding_trials");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let cfg = EmbeddingConfig {
            mode: EmbeddingMode::FixedF,
            m: 500,
            trials: 16,
            search: SearchOptions { starts: 6, iters: 20 },
            exec,
            ..EmbeddingConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| verify_embedding(&x, cfg, &[Nonlinearity::Relu]).unwrap())
        });
    }
    group.finish();
}

fn unknown_f_restarts(c: &mut Criterion) {
    let x = gen_gaussian(2000, 8, 2).unwrap();
    let y: Vec<f64> = x.mul_vec(&[0.3; 8]).into_iter().map(|t| t.max(0.0)).collect();
    let plan = SamplingPlan::leverage(&x, 400, 3).unwrap();
    let mut group = c.benchmark_group("unknown_f_restarts");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = FitOptions { restarts: 8, exec, ..FitOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, opts| {
            b.iter(|| {
                let oracle = LabelOracle::new(y.clone());
                fit_unknown_f(&x, &plan, &oracle, 0.1, 1.0, opts).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, embedding_trials, unknown_f_restarts);
criterion_main!(benches);

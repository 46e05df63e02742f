use leverage_sim::embedding::{verify_embedding, EmbeddingConfig, EmbeddingMode, SearchOptions};
use leverage_sim::fitting::{fit_known_f, FitOptions, LabelOracle};
use leverage_sim::harness::{gen_basis_hard, gen_gaussian, run_experiment, ExperimentConfig, GeneratorKind};
use leverage_sim::io::{read_matrix, read_vector, write_matrix, write_vector};
use leverage_sim::leverage::{parse_plan_csv, parse_plan_meta};
use leverage_sim::net::{net_check, net_report_csv, NetCheckConfig};
use leverage_sim::{
    leverage_scores, sample_budget, BudgetMode, Exec, Nonlinearity, Sampler, SamplingPlan,
};
use nalgebra::DMatrix;

#[test]
fn matrix_files_round_trip_and_keep_scores() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_gaussian(30, 3, 4).unwrap();
    for name in ["x.csv", "x.slmx"] {
        let path = dir.path().join(name);
        write_matrix(&path, &x).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.as_row_major(), x.as_row_major());
        assert_eq!(leverage_scores(&back).unwrap(), leverage_scores(&x).unwrap());
    }
    let path = dir.path().join("y.txt");
    write_vector(&path, &[1.5, -0.25, 3e-300]).unwrap();
    assert_eq!(read_vector(&path).unwrap(), vec![1.5, -0.25, 3e-300]);
}

#[test]
fn plan_files_rebuild_the_same_plan() {
    let x = gen_gaussian(40, 3, 5).unwrap();
    let plan = SamplingPlan::leverage(&x, 25, 9).unwrap();
    let (idx, w) = parse_plan_csv(&plan.to_csv()).unwrap();
    let meta = parse_plan_meta(&plan.metadata(3, Sampler::Leverage)).unwrap();
    assert_eq!((meta.m, meta.seed, meta.d, meta.n, meta.sampler), (25, 9, 3, 40, Sampler::Leverage));
    assert_eq!(idx, plan.indices);
    assert_eq!(w, plan.weights);
    let rebuilt = SamplingPlan::from_indices(plan.scores.clone(), plan.probs.clone(), idx, meta.seed).unwrap();
    assert_eq!(rebuilt.aggregated(), plan.aggregated());
}

#[test]
fn gaussian_design_scores_ignore_column_transforms() {
    let x = gen_gaussian(60, 4, 6).unwrap();
    let rmap = DMatrix::from_row_slice(4, 4, &[2.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
    let a = leverage_scores(&x).unwrap();
    let b = leverage_scores(&x.right_mul(&rmap).unwrap()).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn uniform_sampling_misses_basis_rows() {
    // P(all d basis rows hit) by inclusion-exclusion over the missed set
    let (n, d, m) = (10_000.0f64, 10i32, 100i32);
    let mut prob = 0.0;
    let mut binom = 1.0;
    for k in 0..=d {
        if k > 0 {
            binom *= f64::from(d - k + 1) / f64::from(k);
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        prob += sign * binom * (1.0 - f64::from(k) / n).powi(m);
    }
    assert!(prob.abs() < 1e-10, "{prob}");

    let x = gen_basis_hard(10_000, 10).unwrap();
    let m = (10.0 * 10.0 * 10f64.ln()).ceil() as usize;
    let hits = (0..200)
        .filter(|&s| {
            let plan = SamplingPlan::leverage(&x, m, s).unwrap();
            (0..10).all(|j| plan.indices.contains(&j))
        })
        .count();
    assert!(hits as f64 / 200.0 >= 0.99);
}

#[test]
fn known_f_experiment_at_the_budget() {
    let cfg = ExperimentConfig {
        generator: GeneratorKind::Gaussian,
        n: 1000,
        d: 3,
        eps: 0.1,
        budget_c: 1.0,
        trials: 20,
        seed: 12,
        ..ExperimentConfig::default()
    };
    let m = sample_budget(3, 0.1, 1.0, 1000, BudgetMode::KnownF, 1.0).unwrap().m;
    assert_eq!(cfg.sample_count().unwrap(), m);
    let report = run_experiment(&cfg).unwrap();
    assert!(report.accuracy_rate() >= 0.95);
    assert!(report.rows.iter().all(|r| r.labels_used <= m));
}

#[test]
fn experiment_csv_is_byte_identical_across_runs_and_policies() {
    let cfg = ExperimentConfig {
        generator: GeneratorKind::Gaussian,
        n: 200,
        d: 3,
        f: Nonlinearity::Relu,
        mode: BudgetMode::UnknownF,
        m_override: Some(60),
        corruption: 0.05,
        magnitude: 1.0,
        trials: 4,
        restarts: 2,
        seed: 13,
        ..ExperimentConfig::default()
    };
    let a = run_experiment(&cfg).unwrap().to_csv(true);
    let b = run_experiment(&cfg).unwrap().to_csv(true);
    let c = run_experiment(&ExperimentConfig { exec: Exec::Sequential, ..cfg }).unwrap().to_csv(true);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn equal_label_budgets_for_both_samplers() {
    let base = ExperimentConfig { n: 300, d: 3, m_override: Some(30), trials: 5, seed: 14, ..ExperimentConfig::default() };
    for sampler in [Sampler::Leverage, Sampler::Uniform] {
        let report = run_experiment(&ExperimentConfig { sampler, ..base.clone() }).unwrap();
        assert!(report.rows.iter().all(|r| r.m == 30 && r.labels_used <= 30));
    }
}

#[test]
fn reports_do_not_depend_on_the_execution_policy() {
    let x = gen_gaussian(120, 3, 15).unwrap();
    let cfg = EmbeddingConfig {
        mode: EmbeddingMode::UnknownF,
        m: 40,
        trials: 6,
        pairs_per_trial: 3,
        search: SearchOptions { starts: 4, iters: 10 },
        ..EmbeddingConfig::default()
    };
    let pool = [Nonlinearity::Relu, Nonlinearity::Tanh, Nonlinearity::Identity];
    let par = verify_embedding(&x, &cfg, &pool).unwrap();
    let seq = verify_embedding(&x, &EmbeddingConfig { exec: Exec::Sequential, ..cfg }, &pool).unwrap();
    assert_eq!(par.to_csv(), seq.to_csv());

    let ncfg = NetCheckConfig { mus: vec![0.25], etas: vec![0.2, 0.4], plans: 3, functions: 30, m: 20, ..NetCheckConfig::default() };
    let a = net_report_csv(&net_check(&x, &ncfg).unwrap());
    let b = net_report_csv(&net_check(&x, &NetCheckConfig { exec: Exec::Sequential, ..ncfg }).unwrap());
    assert_eq!(a, b);
}

#[test]
fn fixed_f_fit_recovers_a_clean_linear_model() {
    let x = gen_gaussian(500, 4, 16).unwrap();
    let w = [0.5, -1.0, 0.25, 2.0];
    let y = x.mul_vec(&w);
    let plan = SamplingPlan::leverage(&x, 200, 17).unwrap();
    let oracle = LabelOracle::new(y);
    let fit = fit_known_f(&Nonlinearity::Identity, &x, &plan, &oracle, 1e-6, &FitOptions::default()).unwrap();
    for (a, b) in fit.w.iter().zip(&w) {
        assert!((a - b).abs() < 1e-4);
    }
    assert!(oracle.query_count() <= 200);
}

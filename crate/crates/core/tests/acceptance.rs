//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use leverage_sim::embedding::{verify_embedding, EmbeddingConfig, EmbeddingMode, SearchOptions};
use leverage_sim::fitting::{
    fit_known_f, fit_lipschitz_1d, fit_subsampled, fit_unknown_f, full_loss, subsampled_loss, weighted_sse,
    FitOptions, LabelOracle,
};
use leverage_sim::harness::{
    binary_designated_row, corrupt_targets, gen_basis_hard, gen_binary_relu, gen_gaussian, run_experiment,
    ExperimentConfig, GeneratorKind,
};
use leverage_sim::net::{
    build_grid, g_sigma_embed, log_count_sigma, net_check, NetCheckConfig, SigmaIndex,
};
use leverage_sim::{leverage_scores, BudgetMode, DesignMatrix, Exec, Nonlinearity, Sampler, SamplingPlan};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(id: u32, name: &str, pass: bool, elapsed: Duration, detail: String) {
    println!(
        "criterion {id:>2} {name}: {} ({:.2}s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DesignMatrix {
    DesignMatrix::from_row_major(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// `x_j^T (X^T X)^{-1} x_j` through the normal equations.
fn normal_equation_leverage(x: &DesignMatrix) -> Vec<f64> {
    let m = x.to_matrix();
    let chol = (m.transpose() * &m).cholesky().expect("full rank");
    (0..x.nrows())
        .map(|j| {
            let r = DVector::from_column_slice(x.row(j));
            r.dot(&chol.solve(&r))
        })
        .collect()
}

#[test]
fn criterion_01_leverage_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut sum_err, mut inv_err, mut oracle_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let x = gaussian(200, 8, &mut rng);
        let tau = leverage_scores(&x).unwrap();
        sum_err = sum_err.max((tau.iter().sum::<f64>() - 8.0).abs());
        for (a, b) in tau.iter().zip(normal_equation_leverage(&x)) {
            oracle_err = oracle_err.max((a - b).abs());
        }
        let rmap = DMatrix::from_fn(8, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tau2 = leverage_scores(&x.right_mul(&rmap).unwrap()).unwrap();
        for (a, b) in tau.iter().zip(&tau2) {
            inv_err = inv_err.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = sum_err <= 1e-8 && inv_err <= 1e-8 && oracle_err <= 1e-8 && elapsed < Duration::from_secs(5);
    verdict(
        1,
        "leverage correctness",
        pass,
        elapsed,
        format!("max |sum - d| = {sum_err:.2e}, max invariance gap = {inv_err:.2e}, max gap to normal equations = {oracle_err:.2e}"),
    );
}

#[test]
fn criterion_02_unbiasedness() {
    let start = Instant::now();
    let (n, d, m, plans) = (64, 3, 8, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian(n, d, &mut rng);
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let f = Nonlinearity::Tanh;
    let target = full_loss(&f, &w, &x, &y).unwrap();
    let oracle = LabelOracle::new(y);
    let mut diag = vec![Vec::with_capacity(plans); n];
    let mut losses = Vec::with_capacity(plans);
    for s in 0..plans {
        let plan = SamplingPlan::leverage(&x, m, s as u64).unwrap();
        for (j, v) in plan.sts_diagonal().into_iter().enumerate() {
            diag[j].push(v);
        }
        losses.push(subsampled_loss(&f, &w, &plan, &oracle, &x).unwrap());
    }
    // S^T S is diagonal by construction, so the off-diagonal targets hold exactly
    let mut worst_z: f64 = 0.0;
    for samples in &diag {
        let (mean, se) = mean_and_se(samples);
        worst_z = worst_z.max((mean - 1.0).abs() / se);
    }
    let (lmean, lse) = mean_and_se(&losses);
    let loss_z = (lmean - target).abs() / lse;
    let elapsed = start.elapsed();
    let pass = worst_z <= 4.0 && loss_z <= 4.0 && elapsed < Duration::from_secs(30);
    verdict(
        2,
        "unbiasedness",
        pass,
        elapsed,
        format!("max |mean - 1| / SE over diag(S^T S) = {worst_z:.2}, loss |mean - L| / SE = {loss_z:.2}"),
    );
}

#[test]
fn criterion_03_linear_subspace_embedding() {
    let start = Instant::now();
    let (n, d, eps, delta) = (2000usize, 10usize, 0.25, 0.05);
    let m = (10.0 * d as f64 * (d as f64 / delta).ln() / (eps * eps)).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = gaussian(n, d, &mut rng).orthonormal().unwrap().q.clone();
    let cfg = EmbeddingConfig {
        mode: EmbeddingMode::Linear,
        m,
        r: 1.0,
        trials: 200,
        seed: 3,
        eps_target: eps,
        ..EmbeddingConfig::default()
    };
    let report = verify_embedding(&q, &cfg, &[]).unwrap();
    let worst = report.records.iter().map(|r| r.deviation_norm / 4.0).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let pass = report.violation_rate <= 0.05 + 0.05 && elapsed < Duration::from_secs(120);
    verdict(
        3,
        "linear subspace embedding",
        pass,
        elapsed,
        format!("m = {m}, violation rate = {:.3}, worst max|lambda - 1| = {worst:.4}", report.violation_rate),
    );
}

#[test]
fn criterion_04_nonlinear_embedding_scaling() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = gaussian(1000, 4, &mut rng).orthonormal().unwrap().q.clone();
    let ms = [250, 500, 1000, 2000];
    let medians: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let cfg = EmbeddingConfig {
                mode: EmbeddingMode::FixedF,
                m,
                r: 1.0,
                trials: 30,
                seed: 40 + m as u64,
                search: SearchOptions { starts: 20, iters: 40 },
                ..EmbeddingConfig::default()
            };
            verify_embedding(&q, &cfg, &[Nonlinearity::Relu]).unwrap().median_deviation()
        })
        .collect();
    let monotone = medians.windows(2).all(|w| w[1] < w[0]);
    let factor = medians[0] / medians[3];
    let elapsed = start.elapsed();
    verdict(
        4,
        "nonlinear embedding scaling",
        monotone && factor >= 2.0,
        elapsed,
        format!("medians at m = {ms:?}: {medians:.4?}, reduction 250 -> 2000 = {factor:.2}"),
    );
}

#[test]
fn criterion_05_fixed_f_matches_ridge() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (n, d, eps) = (200, rng.random_range(2..7), rng.random_range(0.01..0.5));
        let x = gaussian(n, d, &mut rng);
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let plan = SamplingPlan::leverage(&x, 60, i).unwrap();
        let oracle = LabelOracle::new(y.clone());
        let fit = fit_known_f(&Nonlinearity::Identity, &x, &plan, &oracle, eps, &FitOptions::default()).unwrap();
        // (X^T D X + eps X^T X) w = X^T D y
        let xm = x.to_matrix();
        let mut dmat = DMatrix::zeros(n, n);
        for (j, mult) in plan.aggregated() {
            dmat[(j, j)] = mult;
        }
        let lhs = xm.transpose() * &dmat * &xm + eps * xm.transpose() * &xm;
        let rhs = xm.transpose() * &dmat * DVector::from_vec(y.clone());
        let w = lhs.lu().solve(&rhs).unwrap();
        let r = &xm * &w - DVector::from_vec(y);
        let opt = (r.transpose() * &dmat * &r)[(0, 0)] + eps * (&xm * &w).norm_squared();
        worst = worst.max((fit.reg_loss - opt) / opt);
    }
    let elapsed = start.elapsed();
    verdict(
        5,
        "fixed-f solver vs ridge",
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        elapsed,
        format!("max relative objective gap = {worst:.2e}"),
    );
}

/// Exact chain QP by enumerating which constraints are tight and in which direction.
fn brute_force_chain(t: &[f64], y: &[f64], w: &[f64], lipschitz: f64) -> f64 {
    // nodes: the points plus the anchor at 0 (weight 0, fixed value 0)
    let mut nodes: Vec<(f64, f64, f64, bool)> = t.iter().zip(y).zip(w).map(|((&t, &y), &w)| (t, y, w, false)).collect();
    nodes.push((0.0, 0.0, 0.0, true));
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.3.cmp(&a.3)));
    let edges = nodes.len() - 1;
    let caps: Vec<f64> = (0..edges).map(|k| lipschitz * (nodes[k + 1].0 - nodes[k].0)).collect();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(edges as u32) {
        // 0 free, 1 tight upward, 2 tight downward
        let state: Vec<usize> = (0..edges).map(|k| code / 3usize.pow(k as u32) % 3).collect();
        let mut u = vec![0.0; nodes.len()];
        let mut k = 0;
        while k < nodes.len() {
            let mut end = k;
            let mut offs = vec![0.0];
            while end < edges && state[end] != 0 {
                let step = if state[end] == 1 { caps[end] } else { -caps[end] };
                offs.push(offs[offs.len() - 1] + step);
                end += 1;
            }
            let block = k..=end;
            let base = match block.clone().zip(&offs).find(|(i, _)| nodes[*i].3) {
                Some((_, off)) => -off,
                None => {
                    let sw: f64 = block.clone().map(|i| nodes[i].2).sum();
                    block.clone().zip(&offs).map(|(i, o)| nodes[i].2 * (nodes[i].1 - o)).sum::<f64>() / sw
                }
            };
            for (i, o) in block.zip(&offs) {
                u[i] = base + o;
            }
            k = end + 1;
        }
        let feasible = (0..edges).all(|k| (u[k + 1] - u[k]).abs() <= caps[k] + 1e-12);
        if feasible {
            let obj: f64 = nodes.iter().zip(&u).map(|(nd, ui)| nd.2 * (ui - nd.1).powi(2)).sum();
            best = best.min(obj);
        }
    }
    best
}

#[test]
fn criterion_06_f_step_matches_brute_force() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let lipschitz = rng.random_range(0.2..3.0);
        // occasional duplicates and points at the origin
        let t: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(-3.0..3.0),
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let f = fit_lipschitz_1d(&t, &y, &w, lipschitz).unwrap();
        let dp = weighted_sse(&f, &t, &y, &w);
        worst = worst.max((dp - brute_force_chain(&t, &y, &w, lipschitz)).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        6,
        "f-step oracle equivalence",
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        elapsed,
        format!("max objective gap = {worst:.2e}"),
    );
}

#[test]
fn criterion_07_hard_instance_separation() {
    let start = Instant::now();
    let base = ExperimentConfig {
        generator: GeneratorKind::BasisHard,
        n: 10_000,
        d: 10,
        f: Nonlinearity::Identity,
        eps: 0.1,
        c: 10.0,
        m_override: Some(200),
        mode: BudgetMode::KnownF,
        trials: 100,
        seed: 7,
        ..ExperimentConfig::default()
    };
    let lev = run_experiment(&ExperimentConfig { sampler: Sampler::Leverage, ..base.clone() }).unwrap();
    let uni = run_experiment(&ExperimentConfig { sampler: Sampler::Uniform, ..base }).unwrap();
    let frugal = lev.rows.iter().chain(&uni.rows).all(|r| r.labels_used <= r.m);
    let elapsed = start.elapsed();
    let pass = lev.accuracy_rate() >= 0.95 && uni.accuracy_rate() <= 0.05 && frugal && elapsed < Duration::from_secs(120);
    verdict(
        7,
        "hard-instance separation",
        pass,
        elapsed,
        format!(
            "leverage accuracy = {:.2} (median labels {}), uniform accuracy = {:.2} (median labels {})",
            lev.accuracy_rate(),
            lev.median_labels(),
            uni.accuracy_rate(),
            uni.median_labels()
        ),
    );
    // the basis rows carry all the signal
    assert_eq!(gen_basis_hard(10_000, 10).unwrap().row(3)[3], 1.0);
}

#[test]
fn criterion_08_regularization_necessity() {
    let start = Instant::now();
    let d = 8;
    let (eps, c) = (0.1, 10.0);
    let inst = gen_binary_relu(d).unwrap();
    let (opt, xw2) = (inst.opt_ub.unwrap(), inst.xw_star_norm2.unwrap());
    let designated = binary_designated_row(d);
    // the single-bit row e_k has index 2^(d-1-k)
    let unit_row = |k: usize| 1usize << (d - 1 - k);
    let m = 100;
    let (plan, k) = (0..1000u64)
        .find_map(|seed| {
            let plan = SamplingPlan::leverage(&inst.x, m, seed).unwrap();
            let seen: HashSet<usize> = plan.indices.iter().copied().collect();
            if seen.contains(&designated) {
                return None;
            }
            (0..d).find(|&k| !seen.contains(&unit_row(k))).map(|k| (plan, k))
        })
        .expect("a plan missing the designated row and one unit row");
    let oracle = LabelOracle::new(inst.y.clone());
    let relu = Nonlinearity::Relu;

    let mut reg = fit_known_f(&relu, &inst.x, &plan, &oracle, eps, &FitOptions::default()).unwrap();
    let reg_full = reg.evaluate_full(&inst.x, &inst.y).unwrap();

    // positive only on e_k: relu output t there, 0 on every sampled row
    let t = 10.0 * (1.0 + reg_full.sqrt());
    let adversarial: Vec<f64> = (0..d).map(|i| if i == k { t } else { -t }).collect();
    let opts = FitOptions {
        restarts: 0,
        include_zero_start: false,
        extra_starts: vec![adversarial.clone()],
        ..FitOptions::default()
    };
    let mut unreg = fit_subsampled(&relu, &inst.x, &plan, &oracle, 0.0, &opts).unwrap();
    let unreg_full = unreg.evaluate_full(&inst.x, &inst.y).unwrap();
    let adv_sub = subsampled_loss(&relu, &adversarial, &plan, &oracle, &inst.x).unwrap();
    let adv_full = full_loss(&relu, &adversarial, &inst.x, &inst.y).unwrap();

    let elapsed = start.elapsed();
    let pass = adv_sub == 0.0
        && adv_full >= 1.0
        && unreg.sub_loss <= 1e-20 * adv_full
        && unreg_full >= 10.0 * reg_full
        && reg_full <= c * opt + eps * xw2
        && elapsed < Duration::from_secs(60);
    verdict(
        8,
        "regularization necessity",
        pass,
        elapsed,
        format!(
            "adversarial sub/full = {adv_sub}/{adv_full:.1}, unregularized sub/full = {:.1e}/{unreg_full:.1}, regularized full = {reg_full:.4} <= {:.4}",
            unreg.sub_loss,
            c * opt + eps * xw2
        ),
    );
}

#[test]
fn criterion_09_net_covering() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = gaussian(200, 4, &mut rng);
    let cfg = NetCheckConfig {
        mus: vec![0.5, 0.25, 0.1],
        etas: vec![0.4, 0.2, 0.1],
        lipschitz: 1.0,
        r: 1.0,
        m: 50,
        plans: 20,
        functions: 500,
        seed: 9,
        exec: Exec::default(),
    };
    let rows = net_check(&x, &cfg).unwrap();
    let cover: usize = rows.iter().map(|r| r.cover_violations).sum();
    let proj: usize = rows.iter().map(|r| r.projection_failures).sum();
    let prof: usize = rows.iter().map(|r| r.profile_violations).sum();
    let ratio = rows.iter().map(|r| r.max_cover_ratio).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    verdict(
        9,
        "net covering",
        cover + proj + prof == 0 && elapsed < Duration::from_secs(180),
        elapsed,
        format!("covering violations = {cover}, invalid projections = {proj}, profile violations = {prof}, max rho/Delta = {ratio:.3}"),
    );
}

#[test]
fn criterion_10_net_cardinality_and_embedding() {
    let start = Instant::now();
    let mut dp_ok = true;
    for h in 0..=4usize {
        // enumerate every step sequence; distinct valid sigmas are the net indices
        let mut seen = HashSet::new();
        for code in 0..5usize.pow(2 * h as u32) {
            let steps: Vec<i64> = (0..2 * h).map(|i| (code / 5usize.pow(i as u32) % 5) as i64 - 2).collect();
            let walk = |s: &[i64]| s.iter().scan(0i64, |acc, v| { *acc += v; Some(*acc) }).collect::<Vec<i64>>();
            let sigma = SigmaIndex::from_sides(&walk(&steps[..h]), &walk(&steps[h..])).unwrap();
            assert!(sigma.is_valid());
            seen.insert(sigma);
        }
        let exact = (seen.len() as f64).ln();
        dp_ok &= (log_count_sigma(h, None) - exact).abs() <= 1e-9;
    }
    let grid = build_grid(0.5, 0.4, 1.0).unwrap();
    let h = grid.half_len();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = SigmaIndex::random(&mut rng, h, grid.n as i64);
        let b = SigmaIndex::random(&mut rng, h, grid.n as i64);
        let (disc, lip) = g_sigma_embed(&a, &b).unwrap();
        worst = worst.max((disc - 2.0 * h as f64 * lip).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        10,
        "net cardinality and embedding",
        dp_ok && worst <= 1e-12 && elapsed < Duration::from_secs(30),
        elapsed,
        format!("DP matches enumeration for N+K <= 4: {dp_ok}, max identity gap = {worst:.2e}"),
    );
}

#[test]
fn criterion_11_unknown_f_end_to_end() {
    let start = Instant::now();
    let (n, d, eps, m, trials) = (2000, 8, 0.1, 500, 50);
    let relu = Nonlinearity::Relu;
    let outcomes: Vec<(bool, f64, f64)> = Exec::default().map(trials, |trial| {
        let seed = 1100 + trial as u64;
        let x = gen_gaussian(n, d, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_star: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt()).collect();
        let xw = x.mul_vec(&w_star);
        let clean: Vec<f64> = xw.iter().map(|&t| relu.eval(t)).collect();
        let y = corrupt_targets(&clean, 0.05, 1.0, seed).unwrap();
        let plan = SamplingPlan::leverage(&x, m, seed).unwrap();
        let oracle = LabelOracle::new(y);
        let opts = FitOptions { restarts: 8, seed, exec: Exec::Sequential, ..FitOptions::default() };
        let fit = fit_unknown_f(&x, &plan, &oracle, eps, 1.0, &opts).unwrap();
        let xw2: f64 = xw.iter().map(|v| v * v).sum();
        let truth = subsampled_loss(&relu, &w_star, &plan, &oracle, &x).unwrap() + eps * xw2;
        (fit.reg_loss <= truth + 1e-3 * xw2, fit.reg_loss, truth)
    });
    let rate = outcomes.iter().filter(|o| o.0).count() as f64 / trials as f64;
    let worst_gap = outcomes.iter().map(|o| o.1 - o.2).fold(f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed();
    verdict(
        11,
        "unknown-f end-to-end",
        rate >= 0.9,
        elapsed,
        format!("success rate = {rate:.2}, worst objective minus truth objective = {worst_gap:.3e}"),
    );
}

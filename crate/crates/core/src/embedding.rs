//! Empirical checks of nonlinear subspace embeddings.
//!
//! For a plan `S` the quantity of interest is the deviation
//! `| ||S a||^2 - ||a||^2 |` with `a = f1(X w1) - f2(X w2)`, maximised over
//! `w1, w2` in the ball `B(R)`. The sup is not computable in general, so
//! [`verify_embedding`] runs a projected gradient ascent from many starts and
//! reports the best value found, a lower bound on the true sup. For the linear
//! case the sup is an eigenvalue problem and is computed exactly.
//!
//! Also provided: the Rademacher-signed process `Z`, the dual norm of the
//! polytope spanned by the rescaled sampled rows, and the sub-Gaussian distance
//! together with its Lipschitz upper bound.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::{dot, norm_sq, DesignMatrix, Nonlinearity};
use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::leverage::SamplingPlan;
use crate::par::{derive_seed, Exec};
use crate::pl::random_lipschitz;

fn check(plan: &SamplingPlan, x: &DesignMatrix, ws: &[&[f64]]) -> Result<()> {
    if plan.n() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("plan covers {} rows but X has {}", plan.n(), x.nrows())));
    }
    for w in ws {
        if w.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!("w has length {} but X has {} columns", w.len(), x.ncols())));
        }
    }
    Ok(())
}

fn residual(x: &DesignMatrix, j: usize, f1: &Nonlinearity, w1: &[f64], f2: &Nonlinearity, w2: &[f64]) -> f64 {
    f1.eval(x.row_dot(j, w1)) - f2.eval(x.row_dot(j, w2))
}

/// `| ||S f1(Xw1) - S f2(Xw2)||^2 - ||f1(Xw1) - f2(Xw2)||^2 |`. No labels are involved.
pub fn embedding_deviation(
    plan: &SamplingPlan,
    x: &DesignMatrix,
    f1: &Nonlinearity,
    w1: &[f64],
    f2: &Nonlinearity,
    w2: &[f64],
) -> Result<f64> {
    check(plan, x, &[w1, w2])?;
    let full: f64 = (0..x.nrows()).map(|j| residual(x, j, f1, w1, f2, w2).powi(2)).sum();
    let sketched: f64 = plan
        .aggregated()
        .into_iter()
        .map(|(j, mult)| mult * residual(x, j, f1, w1, f2, w2).powi(2))
        .sum();
    Ok((sketched - full).abs())
}

/// `sum_i xi_i (f1(<x_{j_i}, w1>) - f2(<x_{j_i}, w2>))^2 / p_{j_i}` for signs `xi`.
pub fn symmetrized_z(
    plan: &SamplingPlan,
    x: &DesignMatrix,
    f1: &Nonlinearity,
    w1: &[f64],
    f2: &Nonlinearity,
    w2: &[f64],
    xi: &[f64],
) -> Result<f64> {
    check(plan, x, &[w1, w2])?;
    if xi.len() != plan.m {
        return Err(Error::DimensionMismatch(format!("{} signs for {} samples", xi.len(), plan.m)));
    }
    if xi.iter().any(|s| *s != 1.0 && *s != -1.0) {
        return Err(Error::invalid("signs must be +1 or -1"));
    }
    Ok(plan
        .indices
        .iter()
        .zip(xi)
        .map(|(&j, s)| s * residual(x, j, f1, w1, f2, w2).powi(2) / plan.probs[j])
        .sum())
}

/// Minkowski norm of the polar of `conv{±x_{j_i} / sqrt(p_{j_i})}`:
/// `max_i |<x_{j_i}, w>| / sqrt(p_{j_i})`.
pub fn polytope_dual_norm(plan: &SamplingPlan, x: &DesignMatrix, w: &[f64]) -> Result<f64> {
    check(plan, x, &[w])?;
    if plan.indices.is_empty() {
        return Err(Error::invalid("plan is empty"));
    }
    Ok(plan
        .aggregated()
        .into_iter()
        .map(|(j, _)| x.row_dot(j, w).abs() / plan.probs[j].sqrt())
        .fold(0.0, f64::max))
}

/// Sub-Gaussian distance of the process `Z` between index pairs `(w1, w2)` and
/// `(w1', w2')` for a fixed `f`.
pub fn subgaussian_distance(
    plan: &SamplingPlan,
    x: &DesignMatrix,
    f: &Nonlinearity,
    pair: (&[f64], &[f64]),
    other: (&[f64], &[f64]),
) -> Result<f64> {
    check(plan, x, &[pair.0, pair.1, other.0, other.1])?;
    let sum: f64 = plan
        .indices
        .iter()
        .map(|&j| {
            let a = residual(x, j, f, pair.0, f, pair.1).powi(2);
            let b = residual(x, j, f, other.0, f, other.1).powi(2);
            ((a - b) / plan.probs[j]).powi(2)
        })
        .sum();
    Ok(sum.sqrt())
}

/// Upper bound on [`subgaussian_distance`] for any `L`-Lipschitz `f` and pairs in `B(R)`:
/// `4 L^2 R ||sum_i x x^T / p||^{1/2} (||w1 - w1'||_P + ||w2 - w2'||_P)`.
pub fn metric_bound(
    plan: &SamplingPlan,
    x: &DesignMatrix,
    lipschitz: f64,
    r: f64,
    pair: (&[f64], &[f64]),
    other: (&[f64], &[f64]),
) -> Result<f64> {
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u - v).collect::<Vec<f64>>();
    let n1 = polytope_dual_norm(plan, x, &diff(pair.0, other.0))?;
    let n2 = polytope_dual_norm(plan, x, &diff(pair.1, other.1))?;
    Ok(4.0 * lipschitz * lipschitz * r * plan.sampled_gram_norm(x).sqrt() * (n1 + n2))
}

/// Which family the deviation is maximised over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    /// `f1 = f2 = identity`; the sup is computed exactly.
    Linear,
    /// `f1 = f2 = f` for each `f` in the pool.
    FixedF,
    /// `f1, f2` drawn as pairs from the pool.
    UnknownF,
}

impl EmbeddingMode {
    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(EmbeddingMode::Linear),
            "fixed_f" | "fixed" => Ok(EmbeddingMode::FixedF),
            "unknown_f" | "unknown" => Ok(EmbeddingMode::UnknownF),
            other => Err(Error::invalid(format!("unknown embedding mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingMode::Linear => "linear",
            EmbeddingMode::FixedF => "fixed_f",
            EmbeddingMode::UnknownF => "unknown_f",
        }
    }
}

/// Projected gradient ascent budget.
#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub starts: usize,
    pub iters: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { starts: 20, iters: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingConfig {
    pub mode: EmbeddingMode,
    pub m: usize,
    pub r: f64,
    pub trials: usize,
    pub seed: u64,
    /// Threshold on the normalized deviation (linear mode: on `max |lambda - 1|`).
    pub eps_target: f64,
    /// Pool pairs tried per trial in unknown mode.
    pub pairs_per_trial: usize,
    pub search: SearchOptions,
    pub exec: Exec,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            mode: EmbeddingMode::FixedF,
            m: 100,
            r: 1.0,
            trials: 20,
            seed: 0,
            eps_target: 0.25,
            pairs_per_trial: 8,
            search: SearchOptions::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub f1_id: usize,
    pub f2_id: usize,
    pub deviation: f64,
    /// `deviation / R^2` (0 when `R = 0`).
    pub deviation_norm: f64,
    pub violated: bool,
}

#[derive(Debug, Clone)]
pub struct EmbeddingReport {
    pub mode: EmbeddingMode,
    pub m: usize,
    pub eps_target: f64,
    pub r: f64,
    pub trials: usize,
    pub max_observed_deviation: f64,
    pub violation_rate: f64,
    pub records: Vec<TrialRecord>,
}

impl EmbeddingReport {
    pub const HEADER: &'static str = "trial_id,m,R,eps_target,deviation_norm,violated";

    /// Median of the per-trial normalized deviations.
    pub fn median_deviation(&self) -> f64 {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.deviation_norm).collect();
        v.sort_by(f64::total_cmp);
        match v.len() {
            0 => 0.0,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        }
    }

    /// One row per trial, then `summary,m,R,eps_target,max_deviation,violation_rate`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.trial_id,
                self.m,
                format_f64(self.r),
                format_f64(self.eps_target),
                format_f64(r.deviation_norm),
                u8::from(r.violated)
            ));
        }
        out.push_str(&format!(
            "summary,{},{},{},{},{}\n",
            self.m,
            format_f64(self.r),
            format_f64(self.eps_target),
            format_f64(self.max_observed_deviation),
            format_f64(self.violation_rate)
        ));
        out
    }
}

/// Named kinds with constant at most `L` plus `count` random piecewise-linear
/// functions with knots in `[-R max ||x_j||, R max ||x_j||]`.
pub fn default_f_pool(x: &DesignMatrix, r: f64, lipschitz: f64, count: usize, seed: u64) -> Vec<Nonlinearity> {
    let mut pool: Vec<Nonlinearity> =
        [Nonlinearity::Identity, Nonlinearity::Relu, Nonlinearity::ShiftedSigmoid, Nonlinearity::Tanh]
            .into_iter()
            .filter(|f| f.lipschitz() <= lipschitz)
            .collect();
    let max_norm = (0..x.nrows()).map(|j| x.row_norm_sq(j)).fold(0.0, f64::max).sqrt();
    let half_width = (r * max_norm).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        pool.push(Nonlinearity::Piecewise(random_lipschitz(&mut rng, lipschitz, half_width, 8)));
    }
    pool
}

fn project(w: &mut [f64], r: f64) {
    let n = norm_sq(w).sqrt();
    if n > r {
        let s = if n > 0.0 { r / n } else { 0.0 };
        w.iter_mut().for_each(|v| *v *= s);
    }
}

fn random_in_ball(rng: &mut ChaCha8Rng, d: usize, r: f64, on_sphere: bool) -> Vec<f64> {
    let mut g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm_sq(&g).sqrt().max(f64::MIN_POSITIVE);
    let radius = if on_sphere { r } else { r * rng.random::<f64>().powf(1.0 / d as f64) };
    g.iter_mut().for_each(|v| *v *= radius / n);
    g
}

/// Signed deviation `sum_j (diag_j - 1) a_j^2` and its gradient in `(w1, w2)`.
struct DeviationField<'a> {
    x: &'a DesignMatrix,
    coef: Vec<f64>,
    f1: &'a Nonlinearity,
    f2: &'a Nonlinearity,
}

impl DeviationField<'_> {
    fn value(&self, w1: &[f64], w2: &[f64]) -> f64 {
        (0..self.x.nrows())
            .map(|j| self.coef[j] * residual(self.x, j, self.f1, w1, self.f2, w2).powi(2))
            .sum()
    }

    fn gradient(&self, w1: &[f64], w2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.x.ncols();
        let (mut g1, mut g2) = (vec![0.0; d], vec![0.0; d]);
        for j in 0..self.x.nrows() {
            let row = self.x.row(j);
            let (t1, t2) = (dot(row, w1), dot(row, w2));
            let s = 2.0 * self.coef[j] * (self.f1.eval(t1) - self.f2.eval(t2));
            let (a, b) = (s * self.f1.derivative(t1), -s * self.f2.derivative(t2));
            for k in 0..d {
                g1[k] += a * row[k];
                g2[k] += b * row[k];
            }
        }
        (g1, g2)
    }

    /// Best `|deviation|` found by ascent on both signs from `starts` points.
    fn search(&self, r: f64, opts: SearchOptions, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.x.ncols();
        let mut best = (0.0, vec![0.0; d], vec![0.0; d]);
        if r == 0.0 {
            return best;
        }
        for s in 0..opts.starts {
            let w1_0 = random_in_ball(rng, d, r, true);
            let w2_0 = if s % 2 == 0 { vec![0.0; d] } else { random_in_ball(rng, d, r, false) };
            for sign in [1.0, -1.0] {
                let (mut w1, mut w2) = (w1_0.clone(), w2_0.clone());
                let mut val = sign * self.value(&w1, &w2);
                let mut step = r;
                for _ in 0..opts.iters {
                    let (g1, g2) = self.gradient(&w1, &w2);
                    let gn = (norm_sq(&g1) + norm_sq(&g2)).sqrt();
                    if gn == 0.0 {
                        break;
                    }
                    let mut improved = false;
                    for _ in 0..8 {
                        let mut c1: Vec<f64> = w1.iter().zip(&g1).map(|(w, g)| w + sign * step * g / gn).collect();
                        let mut c2: Vec<f64> = w2.iter().zip(&g2).map(|(w, g)| w + sign * step * g / gn).collect();
                        project(&mut c1, r);
                        project(&mut c2, r);
                        let cv = sign * self.value(&c1, &c2);
                        if cv > val {
                            (w1, w2, val) = (c1, c2, cv);
                            step = (2.0 * step).min(r);
                            improved = true;
                            break;
                        }
                        step *= 0.5;
                    }
                    if !improved {
                        break;
                    }
                }
                if val > best.0 {
                    best = (val, w1, w2);
                }
            }
        }
        best
    }
}

/// Best deviation over `B(R)^2` found by ascent for one `(f1, f2)` pair.
pub fn worst_deviation(
    plan: &SamplingPlan,
    x: &DesignMatrix,
    f1: &Nonlinearity,
    f2: &Nonlinearity,
    r: f64,
    search: SearchOptions,
    seed: u64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check(plan, x, &[])?;
    let coef = plan.sts_diagonal().into_iter().map(|v| v - 1.0).collect();
    let field = DeviationField { x, coef, f1, f2 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(field.search(r, search, &mut rng))
}

/// Exact linear sup: `max |lambda - 1|` over the eigenvalues of `Q^T S^T S Q`,
/// with the unit eigenvector attaining it.
pub fn linear_distortion(plan: &SamplingPlan, q: &DesignMatrix) -> (f64, Vec<f64>) {
    let g = plan.sampled_gram(q) / plan.m as f64;
    let eig = SymmetricEigen::new(g);
    let (k, dev) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, l)| (k, (l - 1.0).abs()))
        .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
    (dev, eig.eigenvectors.column(k).iter().copied().collect())
}

/// Draws `trials` leverage plans on the orthonormal reduction of `x` and
/// searches each for its worst deviation.
pub fn verify_embedding(x: &DesignMatrix, cfg: &EmbeddingConfig, f_pool: &[Nonlinearity]) -> Result<EmbeddingReport> {
    if cfg.m == 0 || cfg.trials == 0 {
        return Err(Error::invalid("m and trials must be positive"));
    }
    if !(cfg.r >= 0.0 && cfg.r.is_finite()) {
        return Err(Error::invalid(format!("R must be finite and non-negative, got {}", cfg.r)));
    }
    if cfg.mode != EmbeddingMode::Linear && f_pool.is_empty() {
        return Err(Error::invalid("nonlinear modes need a non-empty function pool"));
    }
    let q = &x.orthonormal()?.q;
    let r2 = cfg.r * cfg.r;
    let normalize = |dev: f64| if r2 > 0.0 { dev / r2 } else { 0.0 };
    let records = cfg.exec.try_map(cfg.trials, |trial| -> Result<TrialRecord> {
        let seed = derive_seed(cfg.seed, trial as u64);
        let plan = SamplingPlan::leverage(q, cfg.m, seed)?;
        let rec = match cfg.mode {
            EmbeddingMode::Linear => {
                let (dist, u) = linear_distortion(&plan, q);
                let w1: Vec<f64> = u.iter().map(|v| v * cfg.r).collect();
                let w2: Vec<f64> = w1.iter().map(|v| -v).collect();
                let dev = 4.0 * r2 * dist;
                TrialRecord {
                    trial_id: trial,
                    w1,
                    w2,
                    f1_id: 0,
                    f2_id: 0,
                    deviation: dev,
                    deviation_norm: if r2 > 0.0 { 4.0 * dist } else { 0.0 },
                    violated: r2 > 0.0 && dist > cfg.eps_target,
                }
            }
            mode => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
                let pairs: Vec<(usize, usize)> = if mode == EmbeddingMode::FixedF {
                    (0..f_pool.len()).map(|i| (i, i)).collect()
                } else {
                    (0..cfg.pairs_per_trial)
                        .map(|_| (rng.random_range(0..f_pool.len()), rng.random_range(0..f_pool.len())))
                        .collect()
                };
                let mut best = (-1.0, vec![], vec![], 0, 0);
                for (a, b) in pairs {
                    let (dev, w1, w2) =
                        worst_deviation(&plan, q, &f_pool[a], &f_pool[b], cfg.r, cfg.search, rng.random())?;
                    if dev > best.0 {
                        best = (dev, w1, w2, a, b);
                    }
                }
                let dn = normalize(best.0);
                TrialRecord {
                    trial_id: trial,
                    w1: best.1,
                    w2: best.2,
                    f1_id: best.3,
                    f2_id: best.4,
                    deviation: best.0,
                    deviation_norm: dn,
                    violated: dn > cfg.eps_target,
                }
            }
        };
        Ok(rec)
    })?;
    let max_observed_deviation = records.iter().map(|r| r.deviation_norm).fold(0.0, f64::max);
    let violation_rate = records.iter().filter(|r| r.violated).count() as f64 / records.len() as f64;
    Ok(EmbeddingReport {
        mode: cfg.mode,
        m: cfg.m,
        eps_target: cfg.eps_target,
        r: cfg.r,
        trials: cfg.trials,
        max_observed_deviation,
        violation_rate,
        records,
    })
}

//! Leverage scores, the sampling distribution and sampling-and-reweighting plans.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::io::format_f64;

/// `tau_j = x_j^T (X^T X)^{-1} x_j`, computed as `||q_j||^2` on the
/// orthonormal reduction `X = QR`.
pub fn leverage_scores(x: &DesignMatrix) -> Result<Vec<f64>> {
    let o = x.orthonormal()?;
    Ok((0..x.nrows()).map(|j| o.q.row_norm_sq(j)).collect())
}

/// `p_j = tau_j / sum_i tau_i`.
pub fn sampling_distribution(tau: &[f64]) -> Result<Vec<f64>> {
    if tau.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("scores must be finite and non-negative"));
    }
    let total: f64 = tau.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("scores are all zero"));
    }
    Ok(tau.iter().map(|t| t / total).collect())
}

/// Sampler that produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Leverage,
    Uniform,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Leverage => "leverage",
            Sampler::Uniform => "uniform",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim() {
            "leverage" => Ok(Sampler::Leverage),
            "uniform" => Ok(Sampler::Uniform),
            other => Err(Error::invalid(format!("unknown sampler '{other}'"))),
        }
    }
}

/// The implied `m x n` matrix `S` whose `i`-th row is `e_{j_i} / sqrt(m p_{j_i})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub m: usize,
    pub seed: u64,
}

/// Draws `m` i.i.d. indices from `p` with replacement by inverse CDF on a
/// prefix-sum table. Deterministic given `seed`.
pub fn draw_plan(p: &[f64], m: usize, seed: u64) -> Result<SamplingPlan> {
    validate_probs(p)?;
    SamplingPlan::draw(p.to_vec(), p.to_vec(), m, seed)
}

fn validate_probs(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("probabilities must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

impl SamplingPlan {
    fn draw(scores: Vec<f64>, probs: Vec<f64>, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("sample count m must be at least 1"));
        }
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &pj in &probs {
            acc += pj;
            cdf.push(acc);
        }
        let total = acc;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices: Vec<usize> = (0..m)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                // first index whose cumulative mass exceeds u; zero-mass rows are never chosen
                cdf.partition_point(|&c| c <= u).min(probs.len() - 1)
            })
            .collect();
        let weights = indices.iter().map(|&j| 1.0 / (m as f64 * probs[j]).sqrt()).collect();
        Ok(Self { scores, probs, indices, weights, m, seed })
    }

    /// Leverage score sampling on `x`.
    pub fn leverage(x: &DesignMatrix, m: usize, seed: u64) -> Result<Self> {
        let tau = leverage_scores(x)?;
        let p = sampling_distribution(&tau)?;
        Self::draw(tau, p, m, seed)
    }

    /// Uniform sampling over `n` rows, reweighted by `1 / (m / n)`.
    pub fn uniform(n: usize, m: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot sample from zero rows"));
        }
        Self::draw(vec![1.0; n], vec![1.0 / n as f64; n], m, seed)
    }

    /// Rebuilds a plan from known probabilities and recorded indices.
    pub fn from_indices(scores: Vec<f64>, probs: Vec<f64>, indices: Vec<usize>, seed: u64) -> Result<Self> {
        validate_probs(&probs)?;
        let m = indices.len();
        if m == 0 {
            return Err(Error::invalid("plan has no samples"));
        }
        if let Some(&j) = indices.iter().find(|&&j| j >= probs.len() || probs[j] <= 0.0) {
            return Err(Error::invalid(format!("sampled index {j} has zero probability or is out of range")));
        }
        let weights = indices.iter().map(|&j| 1.0 / (m as f64 * probs[j]).sqrt()).collect();
        Ok(Self { scores, probs, indices, weights, m, seed })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    /// Distinct sampled rows with their total multiplier `count_j / (m p_j)`,
    /// i.e. the diagonal of `S^T S` restricted to its support, in index order.
    pub fn aggregated(&self) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &j in &self.indices {
            *counts.entry(j).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(j, c)| (j, c as f64 / (self.m as f64 * self.probs[j])))
            .collect()
    }

    pub fn distinct_count(&self) -> usize {
        self.aggregated().len()
    }

    /// Diagonal of `S^T S` (length n).
    pub fn sts_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n()];
        for (j, mult) in self.aggregated() {
            diag[j] = mult;
        }
        diag
    }

    /// `sum_i x_{j_i} x_{j_i}^T / p_{j_i}` (no `1/m` factor).
    pub fn sampled_gram(&self, x: &DesignMatrix) -> DMatrix<f64> {
        let d = x.ncols();
        let mut g = DMatrix::zeros(d, d);
        for &j in &self.indices {
            let row = x.row(j);
            let s = 1.0 / self.probs[j];
            for a in 0..d {
                for b in 0..d {
                    g[(a, b)] += s * row[a] * row[b];
                }
            }
        }
        g
    }

    /// Spectral norm of [`SamplingPlan::sampled_gram`].
    pub fn sampled_gram_norm(&self, x: &DesignMatrix) -> f64 {
        spectral_norm_sym(&self.sampled_gram(x))
    }

    /// `index,weight` CSV with one line per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,weight\n");
        for (j, w) in self.indices.iter().zip(&self.weights) {
            out.push_str(&format!("{j},{}\n", format_f64(*w)));
        }
        out
    }

    /// Sidecar metadata: `key=value` lines for m, seed, d, n and sampler.
    pub fn metadata(&self, d: usize, sampler: Sampler) -> String {
        format!("m={}\nseed={}\nd={d}\nn={}\nsampler={}\n", self.m, self.seed, self.n(), sampler.name())
    }
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Metadata recorded next to a plan CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMeta {
    pub m: usize,
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub sampler: Sampler,
}

pub fn parse_plan_meta(text: &str) -> Result<PlanMeta> {
    let kv = crate::harness::parse_key_values(text, "plan metadata")?;
    let get = |k: &str| kv.get(k).ok_or_else(|| Error::parse("plan metadata", format!("missing key '{k}'")));
    let num = |k: &str| -> Result<u64> {
        get(k)?.parse::<u64>().map_err(|e| Error::parse("plan metadata", format!("{k}: {e}")))
    };
    Ok(PlanMeta {
        m: num("m")? as usize,
        seed: num("seed")?,
        d: num("d")? as usize,
        n: num("n")? as usize,
        sampler: kv.get("sampler").map_or(Ok(Sampler::Leverage), |s| Sampler::from_name(s))?,
    })
}

/// Parses an `index,weight` plan CSV.
pub fn parse_plan_csv(text: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "index,weight" => {}
        _ => return Err(Error::parse("plan csv", "expected header 'index,weight'")),
    }
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for (i, line) in lines.enumerate() {
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse("plan csv", format!("line {}: expected two fields", i + 2)))?;
        idx.push(a.trim().parse().map_err(|e| Error::parse("plan csv", format!("line {}: {e}", i + 2)))?);
        w.push(b.trim().parse().map_err(|e| Error::parse("plan csv", format!("line {}: {e}", i + 2)))?);
    }
    Ok((idx, w))
}

/// Which sample budget to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMode {
    KnownF,
    UnknownF,
}

impl BudgetMode {
    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim() {
            "known_f" | "known" => Ok(BudgetMode::KnownF),
            "unknown_f" | "unknown" => Ok(BudgetMode::UnknownF),
            other => Err(Error::invalid(format!("unknown mode '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BudgetMode::KnownF => "known_f",
            BudgetMode::UnknownF => "unknown_f",
        }
    }
}

/// Sample count with a flag telling whether the `n ln n` cap kicked in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub m: usize,
    pub capped: bool,
}

/// Sample budget `c L^4 eps^-2 d log^3 d` (known `f`) or
/// `c L^4 eps^-2 d (log^2 n + log^3 d)` (unknown `f`), with `ln d` clamped
/// below at 1 and the result capped at `n ln n`.
pub fn sample_budget(d: usize, eps: f64, lipschitz: f64, n: usize, mode: BudgetMode, c: f64) -> Result<Budget> {
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid(format!("L must be positive, got {lipschitz}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("constant c must be positive, got {c}")));
    }
    if mode == BudgetMode::UnknownF && n < d {
        return Err(Error::invalid(format!("unknown-f budget needs n >= d, got n = {n}, d = {d}")));
    }
    let log_d = (d as f64).ln().max(1.0);
    let scale = c * lipschitz.powi(4) / (eps * eps) * d as f64;
    let raw = match mode {
        BudgetMode::KnownF => scale * log_d.powi(3),
        BudgetMode::UnknownF => {
            let log_n = (n.max(1) as f64).ln();
            scale * (log_n * log_n + log_d.powi(3))
        }
    };
    let m = raw.ceil() as usize;
    let nf = n.max(1) as f64;
    let cap = ((nf * nf.ln()).ceil() as usize).max(1);
    Ok(if m > cap { Budget { m: cap, capped: true } } else { Budget { m, capped: false } })
}

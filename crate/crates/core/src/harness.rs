//! Instance generators, label corruption and the uniform-vs-leverage
//! experiment loop with CSV reporting.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::{norm_sq, DesignMatrix, Nonlinearity};
use crate::error::{Error, Result};
use crate::fitting::{fit_known_f, fit_subsampled, fit_unknown_f, full_loss, LabelOracle, FitOptions};
use crate::io::{format_f64, write_file};
use crate::leverage::{sample_budget, BudgetMode, Sampler, SamplingPlan};
use crate::par::{derive_seed, Exec};

/// Parses flat `key = value` text. `#` starts a comment; blank lines are skipped.
pub fn parse_key_values(text: &str, context: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("{context}:{}", i + 1), "expected key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// I.i.d. standard normal `n x d` matrix. A rank-deficient draw is replaced
/// by one from a derived seed, at most three draws in total.
pub fn gen_gaussian(n: usize, d: usize, seed: u64) -> Result<DesignMatrix> {
    if d == 0 || n < d {
        return Err(Error::invalid(format!("gaussian design needs n >= d >= 1, got n = {n}, d = {d}")));
    }
    let mut last = None;
    for attempt in 0..3u64 {
        let s = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let x = DesignMatrix::from_row_major(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect())?;
        match x.orthonormal() {
            Ok(_) => return Ok(x),
            Err(e @ Error::RankDeficient { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("three failed attempts"))
}

/// First `d` rows are the standard basis, the remaining `n - d` rows are zero.
pub fn gen_basis_hard(n: usize, d: usize) -> Result<DesignMatrix> {
    if d == 0 || n <= d {
        return Err(Error::invalid(format!("basis-hard design needs n > d >= 1, got n = {n}, d = {d}")));
    }
    let mut data = vec![0.0; n * d];
    for i in 0..d {
        data[i * d + i] = 1.0;
    }
    DesignMatrix::from_row_major(n, d, data)
}

/// A generated problem with its ground truth when one is known.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub generator: String,
    /// Reference pair `(f*, w*)`.
    pub truth: Option<(Nonlinearity, Vec<f64>)>,
    /// `full_loss(f*, w*)` on `y`: the exact OPT when realizable, an upper bound otherwise.
    pub opt_ub: Option<f64>,
    /// `||X w*||^2`.
    pub xw_star_norm2: Option<f64>,
}

impl Instance {
    /// Realizable targets `y = f(X w)`.
    pub fn realizable(x: DesignMatrix, f: Nonlinearity, w: Vec<f64>, generator: impl Into<String>) -> Result<Self> {
        let xw = x.mul_vec(&w);
        let y: Vec<f64> = xw.iter().map(|&t| f.eval(t)).collect();
        Ok(Self {
            generator: generator.into(),
            opt_ub: Some(0.0),
            xw_star_norm2: Some(norm_sq(&xw)),
            truth: Some((f, w)),
            x,
            y,
        })
    }

    /// Replaces the targets and recomputes `opt_ub` against the stored truth.
    pub fn with_targets(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.x.nrows() {
            return Err(Error::DimensionMismatch(format!("{} targets for {} rows", y.len(), self.x.nrows())));
        }
        self.y = y;
        if let Some((f, w)) = &self.truth {
            self.opt_ub = Some(full_loss(f, w, &self.x, &self.y)?);
        }
        Ok(self)
    }
}

/// Index of the all-ones row in [`gen_binary_relu`].
pub fn binary_designated_row(d: usize) -> usize {
    (1usize << d) - 1
}

/// All `2^d` binary rows (row `i` holds the bits of `i`, most significant
/// first), target 1 on the all-ones row and 0 elsewhere, `f = relu`.
///
/// No ReLU index fits these targets exactly, so the reference `w*` is the
/// best full-data fit found and `opt_ub` is its loss.
pub fn gen_binary_relu(d: usize) -> Result<Instance> {
    if d == 0 || d > 16 {
        return Err(Error::invalid(format!("binary design needs 1 <= d <= 16, got {d}")));
    }
    let n = 1usize << d;
    let data: Vec<f64> =
        (0..n).flat_map(|i| (0..d).map(move |k| ((i >> (d - 1 - k)) & 1) as f64)).collect();
    let x = DesignMatrix::from_row_major(n, d, data)?;
    let mut y = vec![0.0; n];
    y[binary_designated_row(d)] = 1.0;
    let f = Nonlinearity::Relu;
    let p = vec![1.0 / n as f64; n];
    let all = SamplingPlan::from_indices(vec![d as f64 / n as f64; n], p, (0..n).collect(), 0)?;
    let oracle = LabelOracle::new(y.clone());
    // random starts die in the all-inactive region; the least-squares
    // direction lands in the basin of the best fit
    let o = x.orthonormal()?;
    let qty: Vec<f64> = (0..d).map(|k| (0..n).map(|j| o.q.row(j)[k] * y[j]).sum()).collect();
    let opts = FitOptions { restarts: 16, extra_starts: vec![o.to_original(&qty)], ..FitOptions::default() };
    let mut fit = fit_subsampled(&f, &x, &all, &oracle, 0.0, &opts)?;
    let opt = fit.evaluate_full(&x, &y)?;
    let xw2 = norm_sq(&x.mul_vec(&fit.w));
    Ok(Instance {
        x,
        y,
        generator: format!("binary_relu(d={d})"),
        truth: Some((f, fit.w)),
        opt_ub: Some(opt),
        xw_star_norm2: Some(xw2),
    })
}

/// Adds `magnitude * s_j` with random signs `s_j` to a seeded subset of
/// `ceil(fraction * n)` targets.
pub fn corrupt_targets(y: &[f64], fraction: f64, magnitude: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    if !magnitude.is_finite() {
        return Err(Error::invalid("magnitude must be finite"));
    }
    let n = y.len();
    let count = (crate::net::robust_ceil(fraction * n as f64) as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = y.to_vec();
    for j in sample(&mut rng, n, count) {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        out[j] += magnitude * s;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Gaussian,
    BasisHard,
    BinaryRelu,
}

impl GeneratorKind {
    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(GeneratorKind::Gaussian),
            "basis_hard" => Ok(GeneratorKind::BasisHard),
            "binary_relu" => Ok(GeneratorKind::BinaryRelu),
            other => Err(Error::invalid(format!("unknown generator '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Gaussian => "gaussian",
            GeneratorKind::BasisHard => "basis_hard",
            GeneratorKind::BinaryRelu => "binary_relu",
        }
    }
}

/// Settings for [`run_experiment`], readable from `key = value` text.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub generator: GeneratorKind,
    pub n: usize,
    pub d: usize,
    /// Ground-truth nonlinearity for the realizable generators.
    pub f: Nonlinearity,
    pub eps: f64,
    pub lipschitz: f64,
    /// Constant `C` of the accuracy check.
    pub c: f64,
    /// Constant of the sample budget.
    pub budget_c: f64,
    pub m_override: Option<usize>,
    pub sampler: Sampler,
    pub mode: BudgetMode,
    pub trials: usize,
    pub seed: u64,
    pub corruption: f64,
    pub magnitude: f64,
    pub restarts: usize,
    pub deterministic: bool,
    pub output: Option<PathBuf>,
    pub exec: Exec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Gaussian,
            n: 1000,
            d: 5,
            f: Nonlinearity::Identity,
            eps: 0.1,
            lipschitz: 1.0,
            c: 10.0,
            budget_c: 1.0,
            m_override: None,
            sampler: Sampler::Leverage,
            mode: BudgetMode::KnownF,
            trials: 20,
            seed: 0,
            corruption: 0.0,
            magnitude: 0.0,
            restarts: FitOptions::default().restarts,
            deterministic: true,
            output: None,
            exec: Exec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Unknown keys are rejected; missing keys keep their defaults.
    pub fn from_key_values(text: &str, context: &str) -> Result<Self> {
        let kv = parse_key_values(text, context)?;
        let mut cfg = Self::default();
        for (key, value) in &kv {
            let bad = |what: &str| Error::parse(format!("{context}: {key}"), format!("expected {what}, got '{value}'"));
            let num = || value.parse::<f64>().map_err(|_| bad("a number"));
            let count = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            match key.as_str() {
                "generator" => cfg.generator = GeneratorKind::from_name(value)?,
                "n" => cfg.n = count()?,
                "d" => cfg.d = count()?,
                "f" => cfg.f = Nonlinearity::from_name(value)?,
                "eps" => cfg.eps = num()?,
                "L" | "lipschitz" => cfg.lipschitz = num()?,
                "c" => cfg.c = num()?,
                "budget_c" => cfg.budget_c = num()?,
                "m" | "m_override" => cfg.m_override = Some(count()?),
                "sampler" => cfg.sampler = Sampler::from_name(value)?,
                "mode" => cfg.mode = BudgetMode::from_name(value)?,
                "trials" => cfg.trials = count()?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                "corruption" => cfg.corruption = num()?,
                "magnitude" => cfg.magnitude = num()?,
                "restarts" => cfg.restarts = count()?,
                "deterministic" => cfg.deterministic = value.parse().map_err(|_| bad("true or false"))?,
                "output" => cfg.output = Some(PathBuf::from(value)),
                "exec" => {
                    cfg.exec = match value.as_str() {
                        "parallel" => Exec::Parallel,
                        "sequential" => Exec::Sequential,
                        _ => return Err(bad("parallel or sequential")),
                    }
                }
                _ => return Err(Error::parse(context, format!("unknown key '{key}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.trials == 0 || self.m_override == Some(0) {
            return Err(Error::invalid("n, d, trials and m must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::invalid(format!("L must be positive, got {}", self.lipschitz)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("c must be positive, got {}", self.c)));
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return Err(Error::invalid(format!("corruption must lie in [0, 1], got {}", self.corruption)));
        }
        Ok(())
    }

    /// `m_override` if set, else the theoretical budget.
    pub fn sample_count(&self) -> Result<usize> {
        match self.m_override {
            Some(m) => Ok(m),
            None => {
                let n = if self.generator == GeneratorKind::BinaryRelu { 1 << self.d } else { self.n };
                Ok(sample_budget(self.d, self.eps, self.lipschitz, n, self.mode, self.budget_c)?.m)
            }
        }
    }

    /// Builds the instance for one trial: fresh design (Gaussian) and fresh
    /// `w* ~ N(0, I)`, then corruption.
    pub fn instance(&self, trial_seed: u64) -> Result<Instance> {
        let inst = match self.generator {
            GeneratorKind::BinaryRelu => return gen_binary_relu(self.d),
            GeneratorKind::Gaussian => {
                let x = gen_gaussian(self.n, self.d, derive_seed(trial_seed, 0))?;
                Instance::realizable(x, self.f.clone(), self.truth_w(trial_seed), format!("gaussian(n={},d={})", self.n, self.d))?
            }
            GeneratorKind::BasisHard => {
                let x = gen_basis_hard(self.n, self.d)?;
                Instance::realizable(x, self.f.clone(), self.truth_w(trial_seed), format!("basis_hard(n={},d={})", self.n, self.d))?
            }
        };
        let y = corrupt_targets(&inst.y, self.corruption, self.magnitude, derive_seed(trial_seed, 2))?;
        inst.with_targets(y)
    }

    fn truth_w(&self, trial_seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 1));
        (0..self.d).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// One trial of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub m: usize,
    pub labels_used: usize,
    pub sub_loss: f64,
    pub full_loss: f64,
    pub opt_ub: f64,
    pub xw_star_norm2: f64,
    pub accurate: bool,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub generator: GeneratorKind,
    pub sampler: Sampler,
    pub mode: BudgetMode,
    pub rows: Vec<TrialRow>,
}

impl ExperimentReport {
    pub const HEADER: &'static str =
        "trial,generator,sampler,mode,m,labels_used,sub_loss,full_loss,OPT_ub,xw_star_norm2,accurate,margin";

    pub fn accuracy_rate(&self) -> f64 {
        self.rows.iter().filter(|r| r.accurate).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn median_labels(&self) -> f64 {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.labels_used).collect();
        v.sort_unstable();
        match v.len() {
            0 => 0.0,
            n if n % 2 == 1 => v[n / 2] as f64,
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]) as f64,
        }
    }

    /// Rows in trial order followed by `summary,accuracy_rate=..,median_labels=..`.
    /// Unless `deterministic`, a `# generated_at=<unix seconds>` line comes first.
    pub fn to_csv(&self, deterministic: bool) -> String {
        let mut out = String::new();
        if !deterministic {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            out.push_str(&format!("# generated_at={secs}\n"));
        }
        out.push_str(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.trial,
                self.generator.name(),
                self.sampler.name(),
                self.mode.name(),
                r.m,
                r.labels_used,
                format_f64(r.sub_loss),
                format_f64(r.full_loss),
                format_f64(r.opt_ub),
                format_f64(r.xw_star_norm2),
                u8::from(r.accurate),
                format_f64(r.margin)
            ));
        }
        out.push_str(&format!(
            "summary,accuracy_rate={},median_labels={}\n",
            format_f64(self.accuracy_rate()),
            format_f64(self.median_labels())
        ));
        out
    }
}

fn run_trial(cfg: &ExperimentConfig, m: usize, trial: usize) -> Result<TrialRow> {
    let trial_seed = derive_seed(cfg.seed, trial as u64);
    let inst = cfg.instance(trial_seed)?;
    let plan_seed = derive_seed(trial_seed, 3);
    let plan = match cfg.sampler {
        Sampler::Leverage => SamplingPlan::leverage(&inst.x, m, plan_seed)?,
        Sampler::Uniform => SamplingPlan::uniform(inst.x.nrows(), m, plan_seed)?,
    };
    let oracle = LabelOracle::new(inst.y.clone());
    // trials already run in parallel
    let opts = FitOptions {
        restarts: cfg.restarts,
        seed: derive_seed(trial_seed, 4),
        exec: Exec::Sequential,
        ..FitOptions::default()
    };
    let f = inst.truth.as_ref().map_or(Nonlinearity::Relu, |t| t.0.clone());
    let mut fit = match cfg.mode {
        BudgetMode::KnownF => fit_known_f(&f, &inst.x, &plan, &oracle, cfg.eps, &opts)?,
        BudgetMode::UnknownF => fit_unknown_f(&inst.x, &plan, &oracle, cfg.eps, cfg.lipschitz, &opts)?,
    };
    let full = fit.evaluate_full(&inst.x, &inst.y)?;
    let opt = inst.opt_ub.unwrap_or(f64::NAN);
    let xw2 = inst.xw_star_norm2.unwrap_or(f64::NAN);
    let check = crate::fitting::accuracy_margin(full, opt, xw2, cfg.eps, cfg.c)?;
    Ok(TrialRow {
        trial,
        m,
        labels_used: oracle.query_count(),
        sub_loss: fit.sub_loss,
        full_loss: full,
        opt_ub: opt,
        xw_star_norm2: xw2,
        accurate: check.accurate,
        margin: check.margin,
    })
}

/// Runs every trial (in parallel when enabled) and collects rows in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let m = cfg.sample_count()?;
    let rows = cfg.exec.try_map(cfg.trials, |t| run_trial(cfg, m, t))?;
    Ok(ExperimentReport { generator: cfg.generator, sampler: cfg.sampler, mode: cfg.mode, rows })
}

/// Runs the experiment and writes the CSV to `cfg.output` when set.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = run_experiment(cfg)?;
    if let Some(path) = &cfg.output {
        write_file(path, report.to_csv(cfg.deterministic).as_bytes())?;
    }
    Ok(report)
}

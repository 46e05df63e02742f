use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::lip1d::fit_lipschitz_1d;
use super::loss::{check_dims, check_plan, LabelOracle};
use crate::design::{dot, norm_sq, DesignMatrix, Nonlinearity};
use crate::error::{Error, Result};
use crate::leverage::SamplingPlan;
use crate::par::{derive_seed, Exec};
use crate::pl::PiecewiseLinearFn;

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;
/// Objectives closer than this (relative) count as tied between restarts.
const TIE_TOL: f64 = 1e-12;

/// Solver knobs.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Random starts, drawn uniformly on the unit sphere of `Xw`.
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the relative objective decrease of a step falls below this.
    pub tol: f64,
    /// Cap on f-step / w-step rounds in the unknown-`f` fit.
    pub max_alternations: usize,
    pub seed: u64,
    /// Additional starting points in original coordinates.
    pub extra_starts: Vec<Vec<f64>>,
    pub include_zero_start: bool,
    pub exec: Exec,
    /// Keep the objective after every step of every start.
    pub record_trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iter: 5000,
            tol: 1e-9,
            max_alternations: 100,
            seed: 0,
            extra_starts: Vec::new(),
            include_zero_start: true,
            exec: Exec::default(),
            record_trace: false,
        }
    }
}

/// A fitted single index model plus diagnostics.
#[derive(Debug, Clone)]
pub struct SimFit {
    pub f: Nonlinearity,
    pub w: Vec<f64>,
    /// Filled by [`SimFit::evaluate_full`] when all targets are available.
    pub full_loss: Option<f64>,
    pub sub_loss: f64,
    pub reg_loss: f64,
    pub eps: f64,
    pub labels_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Final objective reached from each start, in start order.
    pub start_objectives: Vec<f64>,
    /// Index of the winning start in `start_objectives`.
    pub best_start: usize,
    /// Objective after each step, per start; empty unless requested.
    pub traces: Vec<Vec<f64>>,
}

impl SimFit {
    /// Largest minus smallest final objective across starts.
    pub fn restart_spread(&self) -> f64 {
        let lo = self.start_objectives.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.start_objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub fn evaluate_full(&mut self, x: &DesignMatrix, y: &[f64]) -> Result<f64> {
        let l = super::loss::full_loss(&self.f, &self.w, x, y)?;
        self.full_loss = Some(l);
        Ok(l)
    }
}

/// The subsampled problem in reduced coordinates `v = R w`, restricted to the
/// distinct sampled rows: `sum_j c_j (f(<q_j, v>) - y_j)^2 + eps ||v||^2`.
struct Reduced {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    y: Vec<f64>,
    eps: f64,
    d: usize,
}

impl Reduced {
    fn build(x: &DesignMatrix, plan: &SamplingPlan, oracle: &LabelOracle, eps: f64) -> Result<Self> {
        let o = x.orthonormal()?;
        let agg = plan.aggregated();
        let mut q = Vec::with_capacity(agg.len());
        let mut c = Vec::with_capacity(agg.len());
        let mut y = Vec::with_capacity(agg.len());
        for (j, mult) in agg {
            q.push(o.q.row(j).to_vec());
            c.push(mult);
            y.push(oracle.query(j)?);
        }
        Ok(Self { q, c, y, eps, d: x.ncols() })
    }

    fn projections(&self, v: &[f64]) -> Vec<f64> {
        self.q.iter().map(|r| dot(r, v)).collect()
    }

    fn data_term(&self, f: &Nonlinearity, v: &[f64]) -> f64 {
        self.q
            .iter()
            .zip(&self.c)
            .zip(&self.y)
            .map(|((r, c), y)| {
                let e = f.eval(dot(r, v)) - y;
                c * e * e
            })
            .sum()
    }

    fn objective(&self, f: &Nonlinearity, v: &[f64]) -> f64 {
        self.data_term(f, v) + self.eps * norm_sq(v)
    }

    fn gradient(&self, f: &Nonlinearity, v: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = v.iter().map(|vi| 2.0 * self.eps * vi).collect();
        for ((r, c), y) in self.q.iter().zip(&self.c).zip(&self.y) {
            let t = dot(r, v);
            let s = 2.0 * c * (f.eval(t) - y) * f.derivative(t);
            for (gk, rk) in g.iter_mut().zip(r) {
                *gk += s * rk;
            }
        }
        g
    }

    /// Closed-form minimizer for `f = identity`.
    fn ridge(&self) -> Vec<f64> {
        let d = self.d;
        let mut a = DMatrix::<f64>::identity(d, d) * self.eps;
        let mut b = DVector::<f64>::zeros(d);
        for ((r, c), y) in self.q.iter().zip(&self.c).zip(&self.y) {
            for i in 0..d {
                b[i] += c * y * r[i];
                for k in 0..d {
                    a[(i, k)] += c * r[i] * r[k];
                }
            }
        }
        match a.clone().cholesky() {
            Some(ch) => ch.solve(&b).iter().copied().collect(),
            None => a.lu().solve(&b).map_or(vec![0.0; d], |s| s.iter().copied().collect()),
        }
    }
}

struct Descent {
    v: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn non_finite(value: f64, v: &[f64]) -> Error {
    Error::NonFinite { value, iterate: v.to_vec() }
}

/// Gradient descent with Armijo backtracking (initial step 1, halving).
fn descend(
    obj: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    v0: Vec<f64>,
    max_iter: usize,
    tol: f64,
    record: bool,
) -> Result<Descent> {
    let mut v = v0;
    let mut value = obj(&v);
    if !value.is_finite() {
        return Err(non_finite(value, &v));
    }
    let mut trace = if record { vec![value] } else { Vec::new() };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let g = grad(&v);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(non_finite(value, &v));
        }
        let gn2 = norm_sq(&g);
        if gn2 == 0.0 {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let accepted = loop {
            let cand: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let cv = obj(&cand);
            if !cv.is_finite() {
                return Err(non_finite(cv, &cand));
            }
            if cv <= value - ARMIJO_C1 * step * gn2 {
                break Some((cand, cv));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((cand, cv)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        let decrease = value - cv;
        v = cand;
        value = cv;
        if record {
            trace.push(value);
        }
        if decrease <= tol * value.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(Descent { v, value, iterations, converged, trace })
}

fn validate_eps(eps: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { (0.0..1.0).contains(&eps) } else { eps > 0.0 && eps < 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("eps must lie in {}0, 1), got {eps}", if allow_zero { "[" } else { "(" })))
    }
}

fn random_unit(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm_sq(&g).sqrt();
        if n > 0.0 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Starting points in reduced coordinates: zero, optional extras, random unit vectors.
fn starts(x: &DesignMatrix, opts: &FitOptions, extra_reduced: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let d = x.ncols();
    let o = x.orthonormal()?;
    let mut out = Vec::new();
    if opts.include_zero_start {
        out.push(vec![0.0; d]);
    }
    out.extend(extra_reduced);
    for w in &opts.extra_starts {
        check_dims(x, w)?;
        out.push(o.to_reduced(w));
    }
    for r in 0..opts.restarts {
        out.push(random_unit(d, derive_seed(opts.seed, r as u64)));
    }
    if out.is_empty() {
        return Err(Error::invalid("no starting points requested"));
    }
    Ok(out)
}

/// Lowest objective; near-ties go to the smaller `||v||^2`.
fn pick_best(results: &[(f64, Vec<f64>)]) -> usize {
    let mut best = 0;
    for (i, (val, v)) in results.iter().enumerate().skip(1) {
        let (bval, bv) = &results[best];
        let scale = bval.abs().max(val.abs()).max(f64::MIN_POSITIVE);
        if *val < bval - TIE_TOL * scale || ((val - bval).abs() <= TIE_TOL * scale && norm_sq(v) < norm_sq(bv)) {
            best = i;
        }
    }
    best
}

fn finish(
    f: Nonlinearity,
    v: &[f64],
    x: &DesignMatrix,
    plan: &SamplingPlan,
    problem: &Reduced,
    eps: f64,
    meta: (usize, bool, Vec<f64>, usize, Vec<Vec<f64>>),
) -> Result<SimFit> {
    let o = x.orthonormal()?;
    let w = o.to_original(v);
    let sub_loss = problem.data_term(&f, v);
    let xw = x.mul_vec(&w);
    let reg_loss = sub_loss + eps * norm_sq(&xw);
    let (iterations, converged, start_objectives, best_start, traces) = meta;
    Ok(SimFit {
        f,
        w,
        full_loss: None,
        sub_loss,
        reg_loss,
        eps,
        labels_used: plan.distinct_count(),
        iterations,
        converged,
        start_objectives,
        best_start,
        traces,
    })
}

/// Minimizes the subsampled loss plus `eps ||Xw||^2` for a fixed `f`.
/// `eps = 0` gives the plain (unregularized) subsampled fit.
pub fn fit_subsampled(
    f: &Nonlinearity,
    x: &DesignMatrix,
    plan: &SamplingPlan,
    oracle: &LabelOracle,
    eps: f64,
    opts: &FitOptions,
) -> Result<SimFit> {
    validate_eps(eps, true)?;
    check_plan(x, plan)?;
    let problem = Reduced::build(x, plan, oracle, eps)?;
    let starts = starts(x, opts, Vec::new())?;
    let runs = opts.exec.try_map(starts.len(), |i| {
        descend(
            |v| problem.objective(f, v),
            |v| problem.gradient(f, v),
            starts[i].clone(),
            opts.max_iter,
            opts.tol,
            opts.record_trace,
        )
    })?;
    let summary: Vec<(f64, Vec<f64>)> = runs.iter().map(|r| (r.value, r.v.clone())).collect();
    let best = pick_best(&summary);
    let r = &runs[best];
    let objectives = runs.iter().map(|r| r.value).collect();
    let traces = runs.iter().map(|r| r.trace.clone()).collect();
    finish(f.clone(), &r.v, x, plan, &problem, eps, (r.iterations, r.converged, objectives, best, traces))
}

/// Regularized subsampled fit with a known nonlinearity; `eps` must lie in (0, 1).
pub fn fit_known_f(
    f: &Nonlinearity,
    x: &DesignMatrix,
    plan: &SamplingPlan,
    oracle: &LabelOracle,
    eps: f64,
    opts: &FitOptions,
) -> Result<SimFit> {
    validate_eps(eps, false)?;
    fit_subsampled(f, x, plan, oracle, eps, opts)
}

struct Alternation {
    f: PiecewiseLinearFn,
    v: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn alternate(problem: &Reduced, v0: Vec<f64>, lipschitz: f64, opts: &FitOptions) -> Result<Alternation> {
    let f_step = |v: &[f64]| fit_lipschitz_1d(&problem.projections(v), &problem.y, &problem.c, lipschitz);
    let mut v = v0;
    let mut f = f_step(&v)?;
    let mut value = problem.objective(&Nonlinearity::Piecewise(f.clone()), &v);
    if !value.is_finite() {
        return Err(non_finite(value, &v));
    }
    let mut trace = if opts.record_trace { vec![value] } else { Vec::new() };
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..opts.max_alternations {
        let frozen = Nonlinearity::Piecewise(f.clone());
        let step = descend(
            |u| problem.objective(&frozen, u),
            |u| problem.gradient(&frozen, u),
            v.clone(),
            opts.max_iter,
            opts.tol,
            false,
        )?;
        iterations += step.iterations;
        let f_new = f_step(&step.v)?;
        let value_new = problem.objective(&Nonlinearity::Piecewise(f_new.clone()), &step.v);
        if !value_new.is_finite() {
            return Err(non_finite(value_new, &step.v));
        }
        // both half-steps are exact or monotone, so the objective cannot rise
        let decrease = value - value_new;
        if value_new <= value {
            v = step.v;
            f = f_new;
            value = value_new;
        }
        if opts.record_trace {
            trace.push(value);
        }
        if decrease <= opts.tol * value.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(Alternation { f, v, value, iterations, converged, trace })
}

/// Joint fit over `L`-Lipschitz `f` and `w` by alternating an exact f-step
/// with a gradient w-step. Starts: zero, the ridge (linear) solution, and
/// random unit vectors.
pub fn fit_unknown_f(
    x: &DesignMatrix,
    plan: &SamplingPlan,
    oracle: &LabelOracle,
    eps: f64,
    lipschitz: f64,
    opts: &FitOptions,
) -> Result<SimFit> {
    validate_eps(eps, false)?;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid(format!("L must be positive, got {lipschitz}")));
    }
    check_plan(x, plan)?;
    let problem = Reduced::build(x, plan, oracle, eps)?;
    let starts = starts(x, opts, vec![problem.ridge()])?;
    let runs = opts.exec.try_map(starts.len(), |i| alternate(&problem, starts[i].clone(), lipschitz, opts))?;
    let summary: Vec<(f64, Vec<f64>)> = runs.iter().map(|r| (r.value, r.v.clone())).collect();
    let best = pick_best(&summary);
    let r = &runs[best];
    let objectives = runs.iter().map(|r| r.value).collect();
    let traces = runs.iter().map(|r| r.trace.clone()).collect();
    finish(
        Nonlinearity::Piecewise(r.f.clone()),
        &r.v,
        x,
        plan,
        &problem,
        eps,
        (r.iterations, r.converged, objectives, best, traces),
    )
}

/// Outcome of the accuracy test `full_loss <= C * OPT + eps * ||Xw*||^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyCheck {
    pub accurate: bool,
    /// Right-hand side minus left-hand side.
    pub margin: f64,
}

pub fn accuracy_margin(full_loss: f64, opt: f64, xwstar_norm2: f64, eps: f64, c: f64) -> Result<AccuracyCheck> {
    if opt.is_nan() || opt < 0.0 {
        return Err(Error::invalid(format!("OPT must be non-negative, got {opt}")));
    }
    let margin = c * opt + eps * xwstar_norm2 - full_loss;
    Ok(AccuracyCheck { accurate: margin >= 0.0, margin })
}

/// Whether `candidate` is an `eps`-accurate solution; needs its full loss.
pub fn epsilon_accuracy_check(candidate: &SimFit, opt: f64, xwstar_norm2: f64, eps: f64, c: f64) -> Result<AccuracyCheck> {
    let full = candidate
        .full_loss
        .ok_or_else(|| Error::invalid("candidate has no full loss; call evaluate_full first"))?;
    accuracy_margin(full, opt, xwstar_norm2, eps, c)
}

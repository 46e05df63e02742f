use std::collections::HashMap;
use std::sync::Mutex;

use crate::design::{dot, DesignMatrix, Nonlinearity};
use crate::error::{Error, Result};
use crate::leverage::SamplingPlan;

/// Query access to a hidden target vector. Every distinct index is charged
/// once; repeats are served from the cache.
#[derive(Debug)]
pub struct LabelOracle {
    targets: Vec<f64>,
    cache: Mutex<HashMap<usize, f64>>,
}

impl LabelOracle {
    pub fn new(targets: Vec<f64>) -> Self {
        Self { targets, cache: Mutex::new(HashMap::new()) }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn query(&self, j: usize) -> Result<f64> {
        let y = *self
            .targets
            .get(j)
            .ok_or_else(|| Error::invalid(format!("label index {j} out of range for {} targets", self.targets.len())))?;
        self.cache.lock().expect("oracle cache poisoned").entry(j).or_insert(y);
        Ok(y)
    }

    /// Number of distinct indices revealed so far.
    pub fn query_count(&self) -> usize {
        self.cache.lock().expect("oracle cache poisoned").len()
    }
}

pub(crate) fn check_dims(x: &DesignMatrix, w: &[f64]) -> Result<()> {
    if w.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!("w has length {} but X has {} columns", w.len(), x.ncols())));
    }
    Ok(())
}

pub(crate) fn check_plan(x: &DesignMatrix, plan: &SamplingPlan) -> Result<()> {
    if plan.n() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("plan covers {} rows but X has {}", plan.n(), x.nrows())));
    }
    if plan.indices.is_empty() {
        return Err(Error::invalid("plan is empty"));
    }
    Ok(())
}

/// `||f(Xw) - y||^2`.
pub fn full_loss(f: &Nonlinearity, w: &[f64], x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    check_dims(x, w)?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("y has length {} but X has {} rows", y.len(), x.nrows())));
    }
    Ok((0..x.nrows())
        .map(|j| {
            let r = f.eval(x.row_dot(j, w)) - y[j];
            r * r
        })
        .sum())
}

/// `(1/m) sum_i (f(<w, x_{j_i}>) - y_{j_i})^2 / p_{j_i}`, touching labels only at sampled rows.
pub fn subsampled_loss(
    f: &Nonlinearity,
    w: &[f64],
    plan: &SamplingPlan,
    oracle: &LabelOracle,
    x: &DesignMatrix,
) -> Result<f64> {
    check_dims(x, w)?;
    check_plan(x, plan)?;
    let mut total = 0.0;
    for (j, mult) in plan.aggregated() {
        let r = f.eval(x.row_dot(j, w)) - oracle.query(j)?;
        total += mult * r * r;
    }
    Ok(total)
}

/// Subsampled loss plus `eps ||Xw||^2`. Requires `eps > 0`.
pub fn regularized_loss(
    f: &Nonlinearity,
    w: &[f64],
    plan: &SamplingPlan,
    oracle: &LabelOracle,
    x: &DesignMatrix,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let xw = x.mul_vec(w);
    Ok(subsampled_loss(f, w, plan, oracle, x)? + eps * dot(&xw, &xw))
}

/// Gradient of [`regularized_loss`] in `w`, using [`Nonlinearity::derivative`]
/// at kinks.
pub fn regularized_gradient(
    f: &Nonlinearity,
    w: &[f64],
    plan: &SamplingPlan,
    oracle: &LabelOracle,
    x: &DesignMatrix,
    eps: f64,
) -> Result<Vec<f64>> {
    check_dims(x, w)?;
    check_plan(x, plan)?;
    let d = x.ncols();
    let mut g = vec![0.0; d];
    for (j, mult) in plan.aggregated() {
        let t = x.row_dot(j, w);
        let s = 2.0 * mult * (f.eval(t) - oracle.query(j)?) * f.derivative(t);
        for (gk, xk) in g.iter_mut().zip(x.row(j)) {
            *gk += s * xk;
        }
    }
    // 2 eps X^T X w
    for j in 0..x.nrows() {
        let s = 2.0 * eps * x.row_dot(j, w);
        for (gk, xk) in g.iter_mut().zip(x.row(j)) {
            *gk += s * xk;
        }
    }
    Ok(g)
}

//! Piecewise-linear scalar functions vanishing at the origin.

use rand::Rng;

use crate::error::{Error, Result};

/// Slack allowed on the chain constraint `|v[k+1] - v[k]| <= L * (t[k+1] - t[k])`,
/// scaled by `1 + max(|v[k]|, |v[k+1]|)` so rounding on large values is tolerated.
pub const CHAIN_TOL: f64 = 1e-12;

/// A continuous piecewise-linear function with `f(0) = 0`.
///
/// Between knots the function interpolates linearly. Outside
/// `[knots[0], knots[last]]` it continues with the slope of the boundary
/// segment, clamped to `[-L, L]`, so the function stays `L`-Lipschitz on the
/// whole real line. A function with the single knot `0` is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    knots: Vec<f64>,
    values: Vec<f64>,
    lipschitz: f64,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinearFn {
    /// Builds and validates a function. Knots must be finite, strictly
    /// increasing and contain `0` with value exactly `0`.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::invalid(format!("Lipschitz bound must be finite and >= 0, got {lipschitz}")));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("knots and values must be finite"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("knots must be strictly increasing"));
        }
        let zero = knots
            .iter()
            .position(|&t| t == 0.0)
            .ok_or_else(|| Error::invalid("knots must contain 0"))?;
        if values[zero] != 0.0 {
            return Err(Error::invalid(format!("value at knot 0 must be 0, got {}", values[zero])));
        }
        for k in 0..knots.len().saturating_sub(1) {
            let rise = (values[k + 1] - values[k]).abs();
            let run = knots[k + 1] - knots[k];
            let slack = CHAIN_TOL * (1.0 + values[k].abs().max(values[k + 1].abs()));
            if rise > lipschitz * run + slack {
                return Err(Error::Lipschitz(format!(
                    "segment [{}, {}] has slope {} > L = {lipschitz}",
                    knots[k],
                    knots[k + 1],
                    rise / run
                )));
            }
        }
        let (left_slope, right_slope) = if knots.len() < 2 {
            (0.0, 0.0)
        } else {
            let n = knots.len();
            let left = (values[1] - values[0]) / (knots[1] - knots[0]);
            let right = (values[n - 1] - values[n - 2]) / (knots[n - 1] - knots[n - 2]);
            (left.clamp(-lipschitz, lipschitz), right.clamp(-lipschitz, lipschitz))
        };
        Ok(Self { knots, values, lipschitz, left_slope, right_slope })
    }

    /// The identically zero function.
    pub fn zero(lipschitz: f64) -> Self {
        Self { knots: vec![0.0], values: vec![0.0], lipschitz, left_slope: 0.0, right_slope: 0.0 }
    }

    /// The linear map `t -> slope * t` represented with knots `{lo, 0, hi}`.
    pub fn linear(slope: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, 0.0, hi], vec![slope * lo, 0.0, slope * hi], slope.abs())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Evaluates the function at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return 0.0;
        }
        if t <= self.knots[0] {
            return self.values[0] + self.left_slope * (t - self.knots[0]);
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1] + self.right_slope * (t - self.knots[n - 1]);
        }
        // first knot strictly greater than t; 1 <= hi <= n-1
        let hi = self.knots.partition_point(|&k| k <= t);
        let lo = hi - 1;
        if self.knots[lo] == t {
            return self.values[lo];
        }
        let frac = (t - self.knots[lo]) / (self.knots[hi] - self.knots[lo]);
        self.values[lo] + frac * (self.values[hi] - self.values[lo])
    }

    /// A subgradient at `t`: the segment slope inside a segment, the mean of
    /// the adjacent slopes at an interior knot, the boundary slope outside.
    pub fn slope_at(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if n == 1 {
            return 0.0;
        }
        if t < self.knots[0] {
            return self.left_slope;
        }
        if t > self.knots[n - 1] {
            return self.right_slope;
        }
        let hi = self.knots.partition_point(|&k| k <= t);
        let seg = |k: usize| (self.values[k + 1] - self.values[k]) / (self.knots[k + 1] - self.knots[k]);
        if hi == n {
            // t is the last knot
            return 0.5 * (seg(n - 2) + self.right_slope);
        }
        let lo = hi - 1;
        if self.knots[lo] == t {
            let left = if lo == 0 { self.left_slope } else { seg(lo - 1) };
            return 0.5 * (left + seg(lo));
        }
        seg(lo)
    }

    /// Largest absolute slope over all segments and both extrapolations.
    pub fn max_abs_slope(&self) -> f64 {
        let interior = self
            .knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
            .fold(0.0, f64::max);
        interior.max(self.left_slope.abs()).max(self.right_slope.abs())
    }

    /// Exact `sup_{t in [a, b]} |self(t) - other(t)|`.
    ///
    /// The difference is piecewise linear with breakpoints in the union of
    /// both knot sets, so the supremum is attained at one of those breakpoints
    /// or at an endpoint.
    pub fn sup_abs_diff(&self, other: &Self, a: f64, b: f64) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let diff = |t: f64| (self.eval(t) - other.eval(t)).abs();
        let mut best = diff(a).max(diff(b));
        for &t in self.knots.iter().chain(other.knots.iter()) {
            if t > a && t < b {
                best = best.max(diff(t));
            }
        }
        best
    }

    /// Whether the two functions agree on all of `R`.
    pub fn same_function(&self, other: &Self) -> bool {
        if self.left_slope != other.left_slope || self.right_slope != other.right_slope {
            return false;
        }
        let lo = self.knots[0].min(other.knots[0]);
        let hi = self.knots[self.knots.len() - 1].max(other.knots[other.knots.len() - 1]);
        self.sup_abs_diff(other, lo, hi) == 0.0
    }
}

/// A random `L`-Lipschitz function: `pieces` knots uniform in
/// `(-half_width, half_width)` plus the origin, segment slopes uniform in `[-L, L]`.
pub fn random_lipschitz<R: Rng + ?Sized>(rng: &mut R, lipschitz: f64, half_width: f64, pieces: usize) -> PiecewiseLinearFn {
    let mut knots: Vec<f64> = (0..pieces).map(|_| (2.0 * rng.random::<f64>() - 1.0) * half_width).collect();
    knots.push(0.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let zero = knots.iter().position(|&t| t == 0.0).expect("origin inserted above");
    let mut values = vec![0.0; knots.len()];
    let mut slope = || (2.0 * rng.random::<f64>() - 1.0) * lipschitz;
    for k in zero + 1..knots.len() {
        values[k] = values[k - 1] + slope() * (knots[k] - knots[k - 1]);
    }
    for k in (0..zero).rev() {
        values[k] = values[k + 1] - slope() * (knots[k + 1] - knots[k]);
    }
    PiecewiseLinearFn::new(knots, values, lipschitz).expect("slopes drawn inside [-L, L]")
}

/// Evaluates `f` at `t`.
pub fn eval_pl(f: &PiecewiseLinearFn, t: f64) -> f64 {
    f.eval(t)
}

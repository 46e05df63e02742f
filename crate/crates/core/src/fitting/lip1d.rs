//! Weighted least squares over `L`-Lipschitz functions vanishing at 0.
//!
//! Only the values at the data points matter, so the problem is a chain QP in
//! the values `u_k` at the sorted distinct abscissae with `|u_k - u_{k-1}| <=
//! L (s_k - s_{k-1})` and the anchor `u = 0` at the origin. The two sides of the
//! origin decouple and each is solved exactly by dynamic programming on the
//! convex, piecewise-quadratic cost-to-come, stored through its derivative.

use crate::error::{Error, Result};
use crate::pl::PiecewiseLinearFn;

/// Derivative `a + b u` on `[start, end]`.
#[derive(Debug, Clone, Copy)]
struct Seg {
    start: f64,
    end: f64,
    a: f64,
    b: f64,
}

impl Seg {
    fn at(&self, u: f64) -> f64 {
        self.a + self.b * u
    }
}

/// Minimizer of a convex function given by its (nondecreasing) derivative pieces.
fn argmin(segs: &[Seg]) -> f64 {
    for s in segs {
        let d0 = s.at(s.start);
        if d0 >= 0.0 {
            return s.start;
        }
        let d1 = s.at(s.end);
        if d1 >= 0.0 {
            return if s.b > 0.0 { (-s.a / s.b).clamp(s.start, s.end) } else { s.end };
        }
    }
    segs.last().map_or(0.0, |s| s.end)
}

/// `min_{|u' - u| <= c} F(u')` followed by adding `w (u - ybar)^2`.
fn step(segs: &[Seg], vstar: f64, c: f64, w: f64, ybar: f64) -> Vec<Seg> {
    let mut out = Vec::with_capacity(segs.len() + 2);
    for s in segs {
        if s.start < vstar {
            let end = s.end.min(vstar);
            out.push(Seg { start: s.start - c, end: end - c, a: s.a + s.b * c, b: s.b });
        }
    }
    out.push(Seg { start: vstar - c, end: vstar + c, a: 0.0, b: 0.0 });
    for s in segs {
        if s.end > vstar {
            let start = s.start.max(vstar);
            out.push(Seg { start: start + c, end: s.end + c, a: s.a - s.b * c, b: s.b });
        }
    }
    out.retain(|s| s.end > s.start);
    for s in &mut out {
        s.a -= 2.0 * w * ybar;
        s.b += 2.0 * w;
    }
    out
}

/// Solves one side: abscissae `s` strictly increasing and positive (distances
/// from the origin), aggregated weights and means.
fn solve_chain(s: &[f64], w: &[f64], ybar: &[f64], lipschitz: f64) -> Vec<f64> {
    let k = s.len();
    if k == 0 {
        return Vec::new();
    }
    let mut caps = Vec::with_capacity(k);
    let mut prev = 0.0;
    for &sk in s {
        caps.push(lipschitz * (sk - prev));
        prev = sk;
    }
    // cost-to-come before the first point is the indicator of {0}
    let mut vstars = Vec::with_capacity(k);
    let mut segs: Vec<Seg> = Vec::new();
    let mut vstar = 0.0;
    for i in 0..k {
        vstars.push(vstar);
        segs = step(&segs, vstar, caps[i], w[i], ybar[i]);
        vstar = argmin(&segs);
    }
    let mut u = vec![0.0; k];
    u[k - 1] = vstar;
    for i in (1..k).rev() {
        u[i - 1] = vstars[i].clamp(u[i] - caps[i], u[i] + caps[i]);
    }
    u
}

/// Groups equal abscissae into (t, total weight, weighted mean target).
fn aggregate(t: &[f64], targets: &[f64], weights: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if g.0 == t[i] => {
                g.1 += weights[i];
                g.2 += weights[i] * targets[i];
            }
            _ => groups.push((t[i], weights[i], weights[i] * targets[i])),
        }
    }
    for g in &mut groups {
        g.2 /= g.1;
    }
    groups
}

/// Exact minimizer of `sum_i weights_i (f(t_i) - targets_i)^2` over
/// `L`-Lipschitz `f` with `f(0) = 0`, returned as a piecewise-linear function
/// with knots at the distinct `t_i` and `0`.
pub fn fit_lipschitz_1d(t: &[f64], targets: &[f64], weights: &[f64], lipschitz: f64) -> Result<PiecewiseLinearFn> {
    if t.len() != targets.len() || t.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "t, targets and weights have lengths {}, {}, {}",
            t.len(),
            targets.len(),
            weights.len()
        )));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::invalid(format!("L must be positive, got {lipschitz}")));
    }
    if t.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::invalid("abscissae and targets must be finite"));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("weights must be positive and finite"));
    }
    let groups = aggregate(t, targets, weights);
    let right: Vec<_> = groups.iter().filter(|g| g.0 > 0.0).copied().collect();
    let left: Vec<_> = groups.iter().rev().filter(|g| g.0 < 0.0).copied().collect();

    let solve = |side: &[(f64, f64, f64)]| {
        let s: Vec<f64> = side.iter().map(|g| g.0.abs()).collect();
        let w: Vec<f64> = side.iter().map(|g| g.1).collect();
        let y: Vec<f64> = side.iter().map(|g| g.2).collect();
        solve_chain(&s, &w, &y, lipschitz)
    };
    let ur = solve(&right);
    let ul = solve(&left);

    let mut knots = Vec::with_capacity(groups.len() + 1);
    let mut values = Vec::with_capacity(groups.len() + 1);
    for (g, u) in left.iter().zip(&ul).rev() {
        knots.push(g.0);
        values.push(*u);
    }
    knots.push(0.0);
    values.push(0.0);
    for (g, u) in right.iter().zip(&ur) {
        knots.push(g.0);
        values.push(*u);
    }
    PiecewiseLinearFn::new(knots, values, lipschitz)
}

/// `sum_i weights_i (f(t_i) - targets_i)^2`.
pub fn weighted_sse(f: &PiecewiseLinearFn, t: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    t.iter()
        .zip(targets)
        .zip(weights)
        .map(|((&ti, &yi), &wi)| {
            let r = f.eval(ti) - yi;
            wi * r * r
        })
        .sum()
}

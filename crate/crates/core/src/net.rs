//! A finite net of piecewise-linear functions covering `L`-Lipschitz
//! functions vanishing at 0, with the metrics used to measure it.
//!
//! The grid has `N` linearly spaced points up to `z_N ~ mu R` and `K`
//! geometrically spaced points from `z_N` to `R`. A net function is indexed by
//! integer sequences `sigma_{-(N+K)}, ..., sigma_{N+K}` with `sigma_0 = 0` and
//! neighbouring entries differing by at most 2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::io::format_f64;
use crate::leverage::SamplingPlan;
use crate::par::{derive_seed, Exec};
use crate::pl::{random_lipschitz, PiecewiseLinearFn};

/// Ceiling that treats values within `1e-9` relative of an integer as that integer.
pub(crate) fn robust_ceil(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

/// Grid parameters and the grid `z_0 = 0 < z_1 < ... < z_{N+K} = R`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub mu: f64,
    pub eta: f64,
    pub eta_prime: f64,
    pub k: usize,
    pub n: usize,
    pub r: f64,
    pub z: Vec<f64>,
}

impl NetSpec {
    /// `N + K`, the number of grid points on each side of the origin.
    pub fn half_len(&self) -> usize {
        self.n + self.k
    }

    pub fn z_n(&self) -> f64 {
        self.z[self.n]
    }

    /// `max(z_k, z_N)`, the scale of the value quantization at `z_k`.
    pub fn scale(&self, k: usize) -> f64 {
        self.z[k].max(self.z_n())
    }
}

/// Builds the grid. `mu` may equal `1/2`; `eta` must lie in `(0, 1/2)`.
pub fn build_grid(mu: f64, eta: f64, r: f64) -> Result<NetSpec> {
    if !(mu > 0.0 && mu <= 0.5) {
        return Err(Error::invalid(format!("mu must lie in (0, 1/2], got {mu}")));
    }
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::invalid(format!("eta must lie in (0, 1/2), got {eta}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("R must be positive, got {r}")));
    }
    let eta_prime = eta / 4.0;
    let k = robust_ceil((1.0 / mu).ln() / (1.0 + eta_prime).ln()) as usize;
    let n = robust_ceil(1.0 / eta_prime) as usize;
    let mut z = vec![0.0; n + k + 1];
    for (i, zi) in z.iter_mut().enumerate().skip(n) {
        *zi = r * (1.0 + eta_prime).powi(-((k + n - i) as i32));
    }
    let z_n = z[n];
    for (i, zi) in z.iter_mut().enumerate().take(n) {
        *zi = i as f64 / n as f64 * z_n;
    }
    z[n + k] = r;
    Ok(NetSpec { mu, eta, eta_prime, k, n, r, z })
}

/// An index `sigma_{-H}, ..., sigma_H` with `sigma_0 = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SigmaIndex {
    half_len: usize,
    values: Vec<i64>,
}

impl SigmaIndex {
    /// From the full sequence, stored from `-H` to `H`.
    pub fn new(values: Vec<i64>) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(Error::invalid("sigma must have odd length"));
        }
        let half_len = values.len() / 2;
        if values[half_len] != 0 {
            return Err(Error::invalid("sigma_0 must be 0"));
        }
        Ok(Self { half_len, values })
    }

    /// From `sigma_1..sigma_H` and `sigma_{-1}..sigma_{-H}`.
    pub fn from_sides(pos: &[i64], neg: &[i64]) -> Result<Self> {
        if pos.len() != neg.len() {
            return Err(Error::DimensionMismatch(format!("sides have lengths {} and {}", pos.len(), neg.len())));
        }
        let mut values: Vec<i64> = neg.iter().rev().copied().collect();
        values.push(0);
        values.extend_from_slice(pos);
        Self::new(values)
    }

    pub fn zero(half_len: usize) -> Self {
        Self { half_len, values: vec![0; 2 * half_len + 1] }
    }

    pub fn half_len(&self) -> usize {
        self.half_len
    }

    /// `sigma_k` for `k` in `-H..=H`.
    pub fn get(&self, k: isize) -> i64 {
        self.values[(k + self.half_len as isize) as usize]
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.values
    }

    /// Whether neighbouring entries differ by at most 2.
    pub fn is_valid(&self) -> bool {
        self.values.windows(2).all(|w| (w[1] - w[0]).abs() <= 2)
    }

    pub fn max_abs(&self) -> i64 {
        self.values.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// `max_k |sigma_k - other_k|`.
    pub fn sup_distance(&self, other: &Self) -> i64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
    }

    /// Random walk outward from 0 with steps uniform among those in `-2..=2`
    /// keeping `|sigma| <= bound`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, half_len: usize, bound: i64) -> Self {
        let side = |rng: &mut R| {
            let mut out = Vec::with_capacity(half_len);
            let mut cur = 0i64;
            for _ in 0..half_len {
                let lo = (cur - 2).max(-bound);
                let hi = (cur + 2).min(bound);
                cur = rng.random_range(lo..=hi);
                out.push(cur);
            }
            out
        };
        let pos = side(rng);
        let neg = side(rng);
        Self::from_sides(&pos, &neg).expect("sides have equal length")
    }
}

fn check_sigma(sigma: &SigmaIndex, grid: &NetSpec) -> Result<()> {
    if sigma.half_len() != grid.half_len() {
        return Err(Error::DimensionMismatch(format!(
            "sigma has half length {} but the grid has {}",
            sigma.half_len(),
            grid.half_len()
        )));
    }
    Ok(())
}

/// The net function: `f(+-z_k) = L eta' sigma_{+-k} max(z_k, z_N)`, linear in
/// between. Its Lipschitz constant is the largest segment slope, which stays
/// below `4L` whenever `|sigma| <= N`.
pub fn f_sigma(sigma: &SigmaIndex, grid: &NetSpec, lipschitz: f64) -> Result<PiecewiseLinearFn> {
    check_sigma(sigma, grid)?;
    let h = grid.half_len() as isize;
    let mut knots = Vec::with_capacity(2 * h as usize + 1);
    let mut values = Vec::with_capacity(2 * h as usize + 1);
    for k in -h..=h {
        let idx = k.unsigned_abs();
        knots.push(k.signum() as f64 * grid.z[idx]);
        values.push(lipschitz * grid.eta_prime * sigma.get(k) as f64 * grid.scale(idx));
    }
    let slope = knots
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
        .fold(0.0, f64::max);
    PiecewiseLinearFn::new(knots, values, slope)
}

/// `sigma(f)_{+-k} = ceil(f(+-z_k) / (L eta' max(z_k, z_N)))`.
///
/// Fails with [`Error::Lipschitz`] if `f` is not declared `L`-Lipschitz and with
/// [`Error::NetDiagnostic`] if the result leaves `|sigma| <= N` or the
/// neighbour constraint.
pub fn sigma_projection(f: &PiecewiseLinearFn, grid: &NetSpec, lipschitz: f64) -> Result<SigmaIndex> {
    if f.lipschitz() > lipschitz * (1.0 + 1e-12) || f.max_abs_slope() > lipschitz * (1.0 + 1e-9) {
        return Err(Error::Lipschitz(format!(
            "function has constant {} but the net is built for L = {lipschitz}",
            f.lipschitz()
        )));
    }
    let h = grid.half_len();
    let side = |sign: f64| -> Vec<i64> {
        (1..=h)
            .map(|k| robust_ceil(f.eval(sign * grid.z[k]) / (lipschitz * grid.eta_prime * grid.scale(k))) as i64)
            .collect()
    };
    let sigma = SigmaIndex::from_sides(&side(1.0), &side(-1.0))?;
    if sigma.max_abs() > grid.n as i64 {
        return Err(Error::NetDiagnostic(format!("|sigma| reached {} > N = {}", sigma.max_abs(), grid.n)));
    }
    if !sigma.is_valid() {
        return Err(Error::NetDiagnostic("projected sigma has a jump larger than 2".into()));
    }
    Ok(sigma)
}

fn check_plan(plan: &SamplingPlan, x: &DesignMatrix) -> Result<()> {
    if plan.n() != x.nrows() {
        return Err(Error::DimensionMismatch(format!("plan covers {} rows but X has {}", plan.n(), x.nrows())));
    }
    if plan.indices.is_empty() {
        return Err(Error::invalid("plan is empty"));
    }
    Ok(())
}

/// `sup |f1 - f2|` on `[-R ||x_j||, R ||x_j||]`.
fn interval_sup(f1: &PiecewiseLinearFn, f2: &PiecewiseLinearFn, x: &DesignMatrix, j: usize, r: f64) -> f64 {
    let half = r * x.row_norm_sq(j).sqrt();
    f1.sup_abs_diff(f2, -half, half)
}

/// `L R ||M||^{1/2} (sum_i ||f1 - f2||^2_{L_inf(I_i)} / p_{j_i})^{1/2}` with
/// `M = sum_i x_{j_i} x_{j_i}^T / p_{j_i}` and `I_i = [-R||x_{j_i}||, R||x_{j_i}||]`.
pub fn rho_infty(
    f1: &PiecewiseLinearFn,
    f2: &PiecewiseLinearFn,
    plan: &SamplingPlan,
    x: &DesignMatrix,
    r: f64,
    lipschitz: f64,
) -> Result<f64> {
    check_plan(plan, x)?;
    let sum: f64 = plan
        .aggregated()
        .into_iter()
        .map(|(j, mult)| {
            let count = mult * plan.m as f64 * plan.probs[j];
            count * interval_sup(f1, f2, x, j, r).powi(2) / plan.probs[j]
        })
        .sum();
    Ok(lipschitz * r * plan.sampled_gram_norm(x).sqrt() * sum.sqrt())
}

/// Sup term over samples with `||x|| >= mu` plus the point-mass term
/// `L^2 R^2 d (#{i : ||x_{j_i}|| < mu})^{1/2} rho_delta(f1, f2)`, where
/// `rho_delta` is 0 for equal functions and 1 otherwise.
pub fn rho_2(
    f1: &PiecewiseLinearFn,
    f2: &PiecewiseLinearFn,
    plan: &SamplingPlan,
    x: &DesignMatrix,
    r: f64,
    lipschitz: f64,
    mu: f64,
) -> Result<f64> {
    check_plan(plan, x)?;
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    if f1.same_function(f2) {
        return Ok(0.0);
    }
    let mut sup: f64 = 0.0;
    let mut small = 0usize;
    for &j in &plan.indices {
        if x.row_norm_sq(j).sqrt() >= mu {
            sup = sup.max(interval_sup(f1, f2, x, j, r) / plan.probs[j].sqrt());
        } else {
            small += 1;
        }
    }
    let d = x.ncols() as f64;
    let first = if small < plan.indices.len() { lipschitz * r * plan.sampled_gram_norm(x).sqrt() * sup } else { 0.0 };
    Ok(first + lipschitz * lipschitz * r * r * d * (small as f64).sqrt())
}

/// `Delta(mu, eta) = eta L^2 R^2 ||M||^{1/2} (m d + sum_i mu^2 / p_{j_i})^{1/2}` on the realized plan.
pub fn delta_bound(grid: &NetSpec, plan: &SamplingPlan, x: &DesignMatrix, lipschitz: f64) -> Result<f64> {
    check_plan(plan, x)?;
    let inv_p: f64 = plan.indices.iter().map(|&j| 1.0 / plan.probs[j]).sum();
    let inner = (plan.m * x.ncols()) as f64 + grid.mu * grid.mu * inv_p;
    Ok(grid.eta * lipschitz.powi(2) * grid.r.powi(2) * plan.sampled_gram_norm(x).sqrt() * inner.sqrt())
}

/// Log of the number of sequences `sigma_1..sigma_H` per side with
/// `sigma_0 = 0`, jumps in `-2..=2` and optionally `|sigma| <= bound`,
/// summed over both sides.
pub fn log_count_sigma(half_len: usize, bound: Option<i64>) -> f64 {
    let side = match bound {
        None => half_len as f64 * 5f64.ln(),
        Some(b) => {
            let b = b.max(0);
            let width = (2 * b + 1) as usize;
            let mut counts = vec![0.0; width];
            counts[b as usize] = 1.0;
            let mut log_scale = 0.0;
            for _ in 0..half_len {
                let mut next = vec![0.0; width];
                for (s, &c) in counts.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let lo = s.saturating_sub(2);
                    let hi = (s + 2).min(width - 1);
                    for v in &mut next[lo..=hi] {
                        *v += c;
                    }
                }
                let total: f64 = next.iter().sum();
                log_scale += total.ln();
                counts = next.into_iter().map(|c| c / total).collect();
            }
            log_scale
        }
    };
    2.0 * side
}

/// `log |Sigma|` for the grid.
pub fn net_log_cardinality(grid: &NetSpec) -> f64 {
    log_count_sigma(grid.half_len(), None)
}

/// `g_sigma(+-k/H) = sigma_{+-k} / (2H)` on `[-1, 1]`, a 1-Lipschitz function for valid `sigma`.
pub fn g_sigma(sigma: &SigmaIndex) -> Result<PiecewiseLinearFn> {
    let h = sigma.half_len() as isize;
    if h == 0 {
        return Ok(PiecewiseLinearFn::zero(1.0));
    }
    let scale = 2.0 * h as f64;
    let knots = (-h..=h).map(|k| k as f64 / h as f64).collect();
    let values = (-h..=h).map(|k| sigma.get(k) as f64 / scale).collect();
    PiecewiseLinearFn::new(knots, values, 1.0)
}

/// `(||sigma - sigma'||_inf, ||g_sigma - g_sigma'||_{L_inf([-1, 1])})`, checked
/// against the identity `first = 2H * second`.
pub fn g_sigma_embed(sigma: &SigmaIndex, other: &SigmaIndex) -> Result<(f64, f64)> {
    if sigma.half_len() != other.half_len() {
        return Err(Error::DimensionMismatch("sigma lengths differ".into()));
    }
    let g1 = g_sigma(sigma)?;
    let g2 = g_sigma(other)?;
    let discrete = sigma.sup_distance(other) as f64;
    let lip = g1.sup_abs_diff(&g2, -1.0, 1.0);
    let scaled = 2.0 * sigma.half_len() as f64 * lip;
    if (discrete - scaled).abs() > 1e-12 * discrete.max(1.0) {
        return Err(Error::NetDiagnostic(format!("embedding identity fails: {discrete} vs {scaled}")));
    }
    Ok((discrete, lip))
}

/// Sup error of the net approximation on `[-z_k, z_k]` and its guaranteed bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEntry {
    pub k: usize,
    pub error: f64,
    pub bound: f64,
}

/// Exact `||f - f_{sigma(f)}||_{L_inf([-z_k, z_k])}` for `k = 1..=N+K`. Fails
/// with [`Error::NetDiagnostic`] if an error exceeds `2 L eta' z_k` (for
/// `k > N`) or `L (eta' + 1/N) z_N` (for `k <= N`).
pub fn net_error_profile(f: &PiecewiseLinearFn, grid: &NetSpec, lipschitz: f64) -> Result<Vec<ProfileEntry>> {
    let sigma = sigma_projection(f, grid, lipschitz)?;
    let g = f_sigma(&sigma, grid, lipschitz)?;
    let mut running: f64 = 0.0;
    let mut out = Vec::with_capacity(grid.half_len());
    for k in 1..=grid.half_len() {
        let (a, b) = (grid.z[k - 1], grid.z[k]);
        running = running.max(f.sup_abs_diff(&g, a, b)).max(f.sup_abs_diff(&g, -b, -a));
        let bound = if k > grid.n {
            2.0 * lipschitz * grid.eta_prime * grid.z[k]
        } else {
            lipschitz * (grid.eta_prime + 1.0 / grid.n as f64) * grid.z_n()
        };
        if running > bound * (1.0 + 1e-9) {
            return Err(Error::NetDiagnostic(format!("error {running} at k = {k} exceeds {bound}")));
        }
        out.push(ProfileEntry { k, error: running, bound });
    }
    Ok(out)
}

/// Lower estimate of `sup_{w1, w2 in B(R)} sum_i |a_i^2 - b_i^2| / p_{j_i}` with
/// `a = f1(<x, w1>) - f2(<x, w2>)` and `b` the same for `(g1, g2)`, by random
/// search with local refinement.
pub fn d_infty_estimate(
    plan: &SamplingPlan,
    x: &DesignMatrix,
    pair: (&PiecewiseLinearFn, &PiecewiseLinearFn),
    other: (&PiecewiseLinearFn, &PiecewiseLinearFn),
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_plan(plan, x)?;
    let d = x.ncols();
    let agg: Vec<(usize, f64)> =
        plan.aggregated().into_iter().map(|(j, mult)| (j, mult * plan.m as f64 * plan.probs[j])).collect();
    let value = |w1: &[f64], w2: &[f64]| -> f64 {
        agg.iter()
            .map(|&(j, count)| {
                let (t1, t2) = (x.row_dot(j, w1), x.row_dot(j, w2));
                let a = pair.0.eval(t1) - pair.1.eval(t2);
                let b = other.0.eval(t1) - other.1.eval(t2);
                count * (a * a - b * b).abs() / plan.probs[j]
            })
            .sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ball = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let rad = r * rng.random::<f64>().powf(1.0 / d as f64);
        g.into_iter().map(|v| v * rad / n).collect()
    };
    let project = |w: &mut Vec<f64>| {
        let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > r {
            w.iter_mut().for_each(|v| *v *= r / n);
        }
    };
    let (mut b1, mut b2) = (vec![0.0; d], vec![0.0; d]);
    let mut best = 0.0;
    for _ in 0..samples {
        let (w1, w2) = (ball(&mut rng), ball(&mut rng));
        let v = value(&w1, &w2);
        if v > best {
            (best, b1, b2) = (v, w1, w2);
        }
    }
    let mut step = 0.5 * r;
    for _ in 0..samples {
        let mut c1: Vec<f64> = b1.iter().map(|v| v + step * rng.random_range(-1.0..1.0)).collect();
        let mut c2: Vec<f64> = b2.iter().map(|v| v + step * rng.random_range(-1.0..1.0)).collect();
        project(&mut c1);
        project(&mut c2);
        let v = value(&c1, &c2);
        if v > best {
            (best, b1, b2) = (v, c1, c2);
        } else {
            step *= 0.97;
        }
    }
    Ok(best)
}

/// Settings for a sweep over `(mu, eta)` cells.
#[derive(Debug, Clone)]
pub struct NetCheckConfig {
    pub mus: Vec<f64>,
    pub etas: Vec<f64>,
    pub lipschitz: f64,
    pub r: f64,
    pub m: usize,
    pub plans: usize,
    pub functions: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for NetCheckConfig {
    fn default() -> Self {
        Self {
            mus: vec![0.5, 0.25, 0.1],
            etas: vec![0.4, 0.2, 0.1],
            lipschitz: 1.0,
            r: 1.0,
            m: 50,
            plans: 5,
            functions: 100,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

/// Results for one `(mu, eta)` cell.
#[derive(Debug, Clone)]
pub struct NetRow {
    pub mu: f64,
    pub eta: f64,
    pub k: usize,
    pub n: usize,
    pub log_card: f64,
    /// Smallest `Delta` over the plans.
    pub delta: f64,
    /// `max rho_inf(f, f_sigma(f)) / Delta` over functions and plans.
    pub max_cover_ratio: f64,
    pub cover_violations: usize,
    pub projection_failures: usize,
    pub profile_violations: usize,
}

pub const NET_HEADER: &str = "mu,eta,K,N,log_card,delta,max_cover_ratio";

impl NetRow {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            format_f64(self.mu),
            format_f64(self.eta),
            self.k,
            self.n,
            format_f64(self.log_card),
            format_f64(self.delta),
            format_f64(self.max_cover_ratio)
        )
    }
}

pub fn net_report_csv(rows: &[NetRow]) -> String {
    let mut out = format!("{NET_HEADER}\n");
    for row in rows {
        out.push_str(&row.to_csv_row());
        out.push('\n');
    }
    out
}

fn check_cell(x: &DesignMatrix, cfg: &NetCheckConfig, mu: f64, eta: f64, cell_seed: u64) -> Result<NetRow> {
    let grid = build_grid(mu, eta, cfg.r)?;
    let plans: Vec<SamplingPlan> = (0..cfg.plans)
        .map(|i| SamplingPlan::leverage(x, cfg.m, derive_seed(cell_seed, i as u64)))
        .collect::<Result<_>>()?;
    let deltas: Vec<f64> = plans.iter().map(|p| delta_bound(&grid, p, x, cfg.lipschitz)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell_seed, u64::MAX));
    let mut row = NetRow {
        mu,
        eta,
        k: grid.k,
        n: grid.n,
        log_card: net_log_cardinality(&grid),
        delta: deltas.iter().copied().fold(f64::INFINITY, f64::min),
        max_cover_ratio: 0.0,
        cover_violations: 0,
        projection_failures: 0,
        profile_violations: 0,
    };
    for _ in 0..cfg.functions {
        let pieces = rng.random_range(1..=12);
        let f = random_lipschitz(&mut rng, cfg.lipschitz, cfg.r, pieces);
        let sigma = match sigma_projection(&f, &grid, cfg.lipschitz) {
            Ok(s) => s,
            Err(Error::NetDiagnostic(_)) => {
                row.projection_failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match net_error_profile(&f, &grid, cfg.lipschitz) {
            Ok(_) => {}
            Err(Error::NetDiagnostic(_)) => row.profile_violations += 1,
            Err(e) => return Err(e),
        }
        let g = f_sigma(&sigma, &grid, cfg.lipschitz)?;
        for (plan, delta) in plans.iter().zip(&deltas) {
            let rho = rho_infty(&f, &g, plan, x, cfg.r, cfg.lipschitz)?;
            row.max_cover_ratio = row.max_cover_ratio.max(rho / delta);
            if rho > *delta {
                row.cover_violations += 1;
            }
        }
    }
    Ok(row)
}

/// Runs every `(mu, eta)` cell on the orthonormal reduction of `x`.
pub fn net_check(x: &DesignMatrix, cfg: &NetCheckConfig) -> Result<Vec<NetRow>> {
    if cfg.m == 0 || cfg.plans == 0 {
        return Err(Error::invalid("m and plans must be positive"));
    }
    if !(cfg.lipschitz > 0.0 && cfg.lipschitz.is_finite()) {
        return Err(Error::invalid(format!("L must be positive, got {}", cfg.lipschitz)));
    }
    let q = &x.orthonormal()?.q;
    let cells: Vec<(f64, f64)> = cfg.mus.iter().flat_map(|&mu| cfg.etas.iter().map(move |&eta| (mu, eta))).collect();
    cfg.exec.try_map(cells.len(), |i| check_cell(q, cfg, cells[i].0, cells[i].1, derive_seed(cfg.seed, i as u64)))
}

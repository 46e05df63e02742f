//! Design matrices, orthonormal reduction and scalar nonlinearities.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pl::PiecewiseLinearFn;

/// Relative threshold on `|R_ii| / max |R_jj|` below which a column counts as dependent.
pub const RANK_TOL: f64 = 1e-12;

/// An `n x d` real matrix with `d >= 1` and `n >= d`, stored row-major.
///
/// The orthonormal reduction is computed at most once and shared between
/// clones.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    reduced: Arc<OnceLock<std::result::Result<Orthonormal, (usize, usize)>>>,
}

/// `X = Q * R` with `Q^T Q = I_d` and `R` invertible upper triangular.
#[derive(Debug, Clone)]
pub struct Orthonormal {
    pub q: DesignMatrix,
    pub r: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_row_major(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("design matrix needs at least one column"));
        }
        if n < d {
            return Err(Error::invalid(format!("design matrix needs n >= d, got n = {n}, d = {d}")));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch(format!("{} entries for a {n}x{d} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix entries must be finite"));
        }
        Ok(Self { n, d, data, reduced: Arc::new(OnceLock::new()) })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("rows have differing lengths".into()));
        }
        Self::from_row_major(rows.len(), d, rows.concat())
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self::from_row_major(n, d, data)
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::from_matrix(&DMatrix::identity(d, d))
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    /// `<x_j, w>`.
    pub fn row_dot(&self, j: usize, w: &[f64]) -> f64 {
        dot(self.row(j), w)
    }

    pub fn row_norm_sq(&self, j: usize) -> f64 {
        self.row(j).iter().map(|v| v * v).sum()
    }

    /// `X w`.
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.d, "weight vector length must equal column count");
        self.rows().map(|r| dot(r, w)).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.data)
    }

    /// `X * B` for a `d x d'` matrix `B`.
    pub fn right_mul(&self, b: &DMatrix<f64>) -> Result<Self> {
        if b.nrows() != self.d {
            return Err(Error::DimensionMismatch(format!("{}x{} times {}x{}", self.n, self.d, b.nrows(), b.ncols())));
        }
        Self::from_matrix(&(self.to_matrix() * b))
    }

    /// Cached thin orthonormal reduction; see [`orthonormalize`].
    pub fn orthonormal(&self) -> Result<&Orthonormal> {
        self.reduced
            .get_or_init(|| householder_reduce(self))
            .as_ref()
            .map_err(|&(rank, cols)| Error::RankDeficient { rank, cols })
    }
}

/// Thin Householder QR `X = Q R`, signs normalized so that `diag(R) > 0`.
///
/// Fails with [`Error::RankDeficient`] when some `|R_ii|` falls below
/// [`RANK_TOL`] times the largest one.
pub fn orthonormalize(x: &DesignMatrix) -> Result<Orthonormal> {
    x.orthonormal().cloned()
}

fn householder_reduce(x: &DesignMatrix) -> std::result::Result<Orthonormal, (usize, usize)> {
    let qr = x.to_matrix().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let d = x.ncols();
    let max_diag = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..d).filter(|&i| r[(i, i)].abs() > RANK_TOL * max_diag).count();
    if max_diag == 0.0 || rank < d {
        return Err((rank, d));
    }
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    let q = DesignMatrix::from_matrix(&q).map_err(|_| (rank, d))?;
    Ok(Orthonormal { q, r })
}

impl Orthonormal {
    /// Maps reduced coordinates `v = R w` back to `w = R^{-1} v`.
    pub fn to_original(&self, v: &[f64]) -> Vec<f64> {
        let b = nalgebra::DVector::from_column_slice(v);
        let w = self.r.solve_upper_triangular(&b).expect("R is invertible by construction");
        w.iter().copied().collect()
    }

    /// `v = R w`.
    pub fn to_reduced(&self, w: &[f64]) -> Vec<f64> {
        let b = nalgebra::DVector::from_column_slice(w);
        (&self.r * b).iter().copied().collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// A scalar nonlinearity with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Identity,
    Relu,
    /// `1 / (1 + e^{-t}) - 1/2`
    ShiftedSigmoid,
    Tanh,
    Piecewise(PiecewiseLinearFn),
}

impl Nonlinearity {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Identity => t,
            Nonlinearity::Relu => t.max(0.0),
            Nonlinearity::ShiftedSigmoid => {
                // 1/(1+e^{-t}) - 1/2 == tanh(t/2)/2, exact zero at 0
                0.5 * (0.5 * t).tanh()
            }
            Nonlinearity::Tanh => t.tanh(),
            Nonlinearity::Piecewise(f) => f.eval(t),
        }
    }

    /// Derivative, or a fixed subgradient at kinks (ReLU uses 0 at the origin).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::ShiftedSigmoid => {
                let th = (0.5 * t).tanh();
                0.25 * (1.0 - th * th)
            }
            Nonlinearity::Tanh => {
                let th = t.tanh();
                1.0 - th * th
            }
            Nonlinearity::Piecewise(f) => f.slope_at(t),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::Identity | Nonlinearity::Relu | Nonlinearity::Tanh => 1.0,
            Nonlinearity::ShiftedSigmoid => 0.25,
            Nonlinearity::Piecewise(f) => f.lipschitz(),
        }
    }

    /// Whether the derivative exists everywhere except on a finite set.
    pub fn is_smooth(&self) -> bool {
        matches!(self, Nonlinearity::Identity | Nonlinearity::ShiftedSigmoid | Nonlinearity::Tanh)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::Identity => "identity",
            Nonlinearity::Relu => "relu",
            Nonlinearity::ShiftedSigmoid => "sigmoid",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Piecewise(_) => "piecewise",
        }
    }

    /// Parses one of the named kinds.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Nonlinearity::Identity),
            "relu" => Ok(Nonlinearity::Relu),
            "sigmoid" | "shifted-sigmoid" | "shifted_sigmoid" => Ok(Nonlinearity::ShiftedSigmoid),
            "tanh" => Ok(Nonlinearity::Tanh),
            other => Err(Error::invalid(format!("unknown nonlinearity '{other}'"))),
        }
    }
}

/// Entrywise application `f(z)`.
pub fn apply_elementwise(f: &Nonlinearity, z: &[f64]) -> Vec<f64> {
    z.iter().map(|&t| f.eval(t)).collect()
}

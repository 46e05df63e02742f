//! Agnostic active learning of single index models `F(x) = f(<w, x>)` with
//! statistical leverage score sampling.
//!
//! The crate is organised bottom-up:
//!
//! * [`design`]: dense design matrices, orthonormal reduction and the scalar
//!   function classes (fixed nonlinearities, piecewise-linear Lipschitz maps).
//! * [`leverage`]: leverage scores, the sampling distribution and the
//!   sampling-and-reweighting plan.
//! * [`fitting`]: full, subsampled and regularized losses plus the fixed-`f`
//!   and unknown-`f` solvers.
//! * [`embedding`]: Monte Carlo checks of nonlinear subspace embeddings and the
//!   Bernoulli-process objects behind them.
//! * [`net`]: the distribution-aware discretization of Lipschitz functions.
//! * [`harness`]: instance generators, experiments and CSV reporting.
//!
//! Trial loops run on rayon when the `parallel` feature is enabled (the
//! default); see [`par::Exec`].

pub mod design;
pub mod embedding;
pub mod error;
pub mod fitting;
pub mod harness;
pub mod io;
pub mod leverage;
pub mod net;
pub mod par;
pub mod pl;

pub use design::{apply_elementwise, orthonormalize, DesignMatrix, Nonlinearity, Orthonormal};
pub use error::{Error, Result};
pub use leverage::{draw_plan, leverage_scores, sample_budget, sampling_distribution, BudgetMode, Sampler, SamplingPlan};
pub use par::Exec;
pub use pl::PiecewiseLinearFn;

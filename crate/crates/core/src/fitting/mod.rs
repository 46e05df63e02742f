//! Losses and solvers for single index models on a sampled subset of rows.
//!
//! Solvers work in the reduced coordinates `v = R w` of the orthonormal
//! reduction `X = QR`, where `||Xw|| = ||v||` and leverage scores are unchanged.

mod lip1d;
mod loss;
mod solve;

pub use lip1d::{fit_lipschitz_1d, weighted_sse};
pub use loss::{full_loss, regularized_gradient, regularized_loss, subsampled_loss, LabelOracle};
pub use solve::{
    accuracy_margin, epsilon_accuracy_check, fit_known_f, fit_subsampled, fit_unknown_f, AccuracyCheck, FitOptions,
    SimFit,
};

use crate::io::format_f64;

/// One line of the fit report.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub mode: String,
    pub m: usize,
    pub eps: f64,
    pub lipschitz: f64,
    pub c: f64,
    pub seed: u64,
    pub sub_loss: f64,
    pub full_loss: Option<f64>,
    pub reg_loss: f64,
    pub labels_used: usize,
    pub accuracy: Option<AccuracyCheck>,
}

impl FitReport {
    pub const HEADER: &'static str =
        "mode,m,eps,L,c,seed,sub_loss,full_loss,reg_loss,labels_used,accuracy_flag,margin";

    /// Missing values are written as `NA`.
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_f64);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.mode,
            self.m,
            format_f64(self.eps),
            format_f64(self.lipschitz),
            format_f64(self.c),
            self.seed,
            format_f64(self.sub_loss),
            opt(self.full_loss),
            format_f64(self.reg_loss),
            self.labels_used,
            self.accuracy.map_or("NA", |a| if a.accurate { "1" } else { "0" }),
            opt(self.accuracy.map(|a| a.margin)),
        )
    }
}

//! Likelihoods and estimators for partially classified samples.
//!
//! Three estimators are provided: the closed-form maximizer of the complete
//! data likelihood ([`fit_cc`]), EM on the likelihood that ignores the
//! missing-label mechanism ([`fit_ig`]), and direct quasi-Newton maximization
//! of the full likelihood that models it ([`fit_full`]).

mod em;
mod full;
mod init;
mod likelihood;
mod moments;
pub mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::missingness::MissingnessParams;
use crate::model::MixtureParams;

pub use em::{fit_ig, EmOptions};
pub use full::{fit_full, FullOptions};
pub use init::{align_components, best_permutation, init_strategy};
pub use likelihood::{loglik_cc, loglik_full, loglik_ig, loglik_miss};
pub use moments::fit_cc;

/// Which likelihood an estimate maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Cc,
    Ig,
    Full,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Cc, Estimator::Ig, Estimator::Full];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Cc => "cc",
            Estimator::Ig => "ig",
            Estimator::Full => "full",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cc" => Ok(Estimator::Cc),
            "ig" => Ok(Estimator::Ig),
            "full" => Ok(Estimator::Full),
            other => Err(Error::Parse(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: MixtureParams,
    /// Present only for full-likelihood fits.
    pub xi_hat: Option<MissingnessParams>,
    pub final_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

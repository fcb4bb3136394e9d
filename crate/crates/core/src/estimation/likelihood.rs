use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::missingness::{Mechanism, MissingnessParams};
use crate::model::{MixtureParams, PartialSample};

fn check(theta: &MixtureParams, sample: &PartialSample) -> Result<()> {
    if sample.n() > 0 && sample.p() != theta.p() {
        return Err(Error::Dimension { expected: theta.p(), got: sample.p() });
    }
    sample.validate_for(theta.g())
}

/// Complete-data log-likelihood `sum_j log{pi_z f(y_j; omega_z)}`.
pub fn loglik_cc(theta: &MixtureParams, sample: &PartialSample) -> Result<f64> {
    if !sample.is_fully_labeled() {
        return Err(Error::Contract("complete-data likelihood needs every label".into()));
    }
    loglik_ig(theta, sample)
}

/// Log-likelihood ignoring the missing-label mechanism: classified rows add
/// `log{pi_z f_z(y)}`, unclassified rows add the log mixture density.
pub fn loglik_ig(theta: &MixtureParams, sample: &PartialSample) -> Result<f64> {
    check(theta, sample)?;
    Ok(Terms::evaluate(theta, None, sample).ig)
}

/// Bernoulli log-likelihood of the missing-label flags.
pub fn loglik_miss(theta: &MixtureParams, xi: &MissingnessParams, sample: &PartialSample) -> Result<f64> {
    check(theta, sample)?;
    let mech = Mechanism::new(theta, *xi)?;
    Ok(Terms::evaluate(theta, Some(&mech), sample).miss)
}

/// Full log-likelihood, the sum of the ignoring and mechanism parts.
pub fn loglik_full(theta: &MixtureParams, xi: &MissingnessParams, sample: &PartialSample) -> Result<f64> {
    Ok(loglik_ig(theta, sample)? + loglik_miss(theta, xi, sample)?)
}

/// Both parts from one pass over the data. Each part is accumulated in the
/// same order as the standalone functions, so the sums agree bit for bit.
pub(crate) struct Terms {
    pub ig: f64,
    pub miss: f64,
}

impl Terms {
    pub(crate) fn evaluate(theta: &MixtureParams, mech: Option<&Mechanism<'_>>, sample: &PartialSample) -> Terms {
        let mut l = vec![0.0; theta.g()];
        let (mut ig, mut miss) = (0.0, 0.0);
        for (y, label) in sample.rows().zip(sample.labels()) {
            theta.weighted_log_densities_into(y, &mut l);
            ig += match label {
                Some(z) => l[z - 1],
                None => log_sum_exp(&l),
            };
            if let Some(m) = mech {
                let (lq, l1q) = m.log_probs_with(y, &l);
                miss += if label.is_none() { lq } else { l1q };
            }
        }
        Terms { ig, miss }
    }
}

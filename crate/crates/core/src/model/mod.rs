//! Model specification: priors, per-part likelihoods, draw storage and data partitioning.

mod beta;
mod draws;
mod logistic;
mod mvn;
mod niw;
mod partition;

use std::fmt;
use std::sync::Arc;

pub use beta::{BernoulliPart, BetaParams, BetaPrior};
pub use draws::{DrawSource, ParamDraws};
pub use logistic::{group_logistic_rows, IsoNormalPrior, LogisticPart, LogisticRow};
pub use mvn::{MvnKnownCovPart, MvnPrior};
pub use niw::{niw_param_dim, niw_split, NiwParams, NiwPart, NiwPrior};
pub use partition::{partition_data, PartRows, PartitionManifest, PartitionScheme, PartitionedData};

use crate::error::{Error, Result};

/// Prior families understood by the fractionation and analytic-truth code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    Beta,
    Mvn,
    Niw,
    MvnIid,
}

impl fmt::Display for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PriorFamily::Beta => "beta",
            PriorFamily::Mvn => "mvn",
            PriorFamily::Niw => "niw",
            PriorFamily::MvnIid => "mvn_iid",
        };
        f.write_str(s)
    }
}

/// Log prior density, possibly unnormalised. Must return `-inf` outside the support.
pub trait LogPrior: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &[f64]) -> f64;
    fn family(&self) -> PriorFamily;
}

/// Log likelihood of the data held by one part. Must return `-inf` outside the support.
pub trait PartLikelihood: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn log_lik(&self, theta: &[f64]) -> f64;
    /// Number of observations held by the part.
    fn size(&self) -> usize;
}

/// Prior plus `M` likelihood parts sharing one parameter vector.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    dim: usize,
    prior: Arc<dyn LogPrior>,
    parts: Vec<Arc<dyn PartLikelihood>>,
}

impl ModelSpec {
    pub fn new(prior: Arc<dyn LogPrior>, parts: Vec<Arc<dyn PartLikelihood>>) -> Result<Self> {
        let dim = prior.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("parameter dimension must be positive".into()));
        }
        if parts.is_empty() {
            return Err(Error::InvalidArgument("a model needs at least one part".into()));
        }
        if let Some((j, p)) = parts.iter().enumerate().find(|(_, p)| p.dim() != dim) {
            return Err(Error::InvalidArgument(format!(
                "part {j} has dimension {} but the prior has {dim}",
                p.dim()
            )));
        }
        Ok(Self { dim, prior, parts })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn prior(&self) -> &Arc<dyn LogPrior> {
        &self.prior
    }

    pub fn parts(&self) -> &[Arc<dyn PartLikelihood>] {
        &self.parts
    }

    pub fn family(&self) -> PriorFamily {
        self.prior.family()
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    pub fn log_lik_part(&self, j: usize, theta: &[f64]) -> f64 {
        self.parts[j].log_lik(theta)
    }

    pub fn log_lik_total(&self, theta: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.log_lik(theta)).sum()
    }

    /// Unnormalised log posterior from the full-data log-likelihood.
    pub fn log_unnorm_posterior(&self, loglik_total: f64, theta: &[f64]) -> Result<f64> {
        log_unnorm_posterior(self.prior.as_ref(), loglik_total, theta)
    }
}

/// `log pi(theta) + loglik_total`. NaN anywhere in the input is a contract violation.
pub fn log_unnorm_posterior(prior: &dyn LogPrior, loglik_total: f64, theta: &[f64]) -> Result<f64> {
    if loglik_total.is_nan() || theta.iter().any(|v| v.is_nan()) {
        return Err(Error::ContractViolation(
            "NaN passed to the unnormalised log posterior".into(),
        ));
    }
    if theta.len() != prior.dim() {
        return Err(Error::ContractViolation(format!(
            "parameter has length {} but the model dimension is {}",
            theta.len(),
            prior.dim()
        )));
    }
    let lp = prior.log_density(theta);
    if lp == f64::NEG_INFINITY || loglik_total == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lp + loglik_total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unnormalised_posterior_examples() {
        let prior = BetaPrior::new(BetaParams::new(2.0, 3.0).unwrap());
        let v = log_unnorm_posterior(&prior, 0.0, &[0.5]).unwrap();
        assert!((v - 0.125f64.ln()).abs() < 1e-14);
        assert_eq!(log_unnorm_posterior(&prior, 0.0, &[1.5]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(
            log_unnorm_posterior(&prior, f64::NAN, &[0.5]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn model_rejects_dimension_mismatch() {
        let prior: Arc<dyn LogPrior> = Arc::new(BetaPrior::new(BetaParams::new(1.0, 1.0).unwrap()));
        let part: Arc<dyn PartLikelihood> = Arc::new(
            MvnKnownCovPart::new(&[vec![0.0, 0.0]], nalgebra::DMatrix::identity(2, 2)).unwrap(),
        );
        assert!(ModelSpec::new(prior, vec![part]).is_err());
    }
}

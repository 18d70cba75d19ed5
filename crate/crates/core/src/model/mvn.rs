use nalgebra::{DMatrix, DVector};

use super::{LogPrior, PartLikelihood, PriorFamily};
use crate::error::{Error, Result};
use crate::linalg::{inverse_pd, scatter_rows, Mvn};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normal prior on a mean vector, or the flat prior when `cov` is `None`.
#[derive(Debug, Clone)]
pub struct MvnPrior {
    mean: DVector<f64>,
    density: Option<Mvn>,
}

impl MvnPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let density = Mvn::new(mean.clone(), cov)?;
        Ok(Self {
            mean,
            density: Some(density),
        })
    }

    pub fn flat(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            density: None,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.density.is_none()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> Option<&DMatrix<f64>> {
        self.density.as_ref().map(|d| d.cov())
    }

    /// Posterior of the mean given `n` observations with sample mean `xbar` and
    /// known covariance `sigma`. Returns the posterior mean and covariance.
    pub fn posterior(
        &self,
        sigma: &DMatrix<f64>,
        n: usize,
        xbar: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let sigma_inv = inverse_pd(sigma)?;
        match &self.density {
            None if n == 0 => Err(Error::Propriety(
                "flat prior with no observations gives an improper posterior".into(),
            )),
            None => Ok((xbar.clone(), sigma / n as f64)),
            Some(prior) => {
                let prior_prec = inverse_pd(prior.cov())?;
                let prec = &prior_prec + &sigma_inv * n as f64;
                let cov = inverse_pd(&prec)?;
                let mean = &cov * (&prior_prec * &self.mean + &sigma_inv * xbar * n as f64);
                Ok((mean, cov))
            }
        }
    }
}

impl LogPrior for MvnPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        match &self.density {
            Some(d) => d.log_density(theta),
            None if theta.iter().all(|v| v.is_finite()) => 0.0,
            None => f64::NEG_INFINITY,
        }
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::Mvn
    }
}

/// Normal observations with known covariance, summarised by count, mean and scatter.
#[derive(Debug, Clone)]
pub struct MvnKnownCovPart {
    n: usize,
    xbar: DVector<f64>,
    sigma: DMatrix<f64>,
    centred: Mvn,
    trace_term: f64,
}

impl MvnKnownCovPart {
    pub fn new(rows: &[Vec<f64>], sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument(format!(
                "observations must have length {d}"
            )));
        }
        let n = rows.len();
        let flat: Vec<f64> = rows.concat();
        let xbar = if n == 0 {
            DVector::zeros(d)
        } else {
            crate::linalg::mean_rows(&flat, d)
        };
        let scatter = scatter_rows(&flat, d, &xbar);
        let sigma_inv = inverse_pd(&sigma)?;
        let trace_term = (sigma_inv * scatter).trace();
        let centred = Mvn::new(DVector::zeros(d), sigma.clone())?;
        Ok(Self {
            n,
            xbar,
            sigma,
            centred,
            trace_term,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xbar(&self) -> &DVector<f64> {
        &self.xbar
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

impl PartLikelihood for MvnKnownCovPart {
    fn dim(&self) -> usize {
        self.xbar.len()
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let d = self.xbar.len() as f64;
        let n = self.n as f64;
        let diff: Vec<f64> = self.xbar.iter().zip(theta).map(|(x, m)| x - m).collect();
        -0.5 * n * (d * LN_2PI + self.centred.log_det_cov())
            - 0.5 * (self.trace_term + n * self.centred.mahalanobis_sq(&diff))
    }

    fn size(&self) -> usize {
        self.n
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LogPrior, PartLikelihood, PriorFamily};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_lower, inverse_pd, log_det_from_lower, mean_rows, packed_len, scatter_rows,
    symmetrize, unpack_lower, MvStudentT,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Length of the parameter vector `(mu, lower triangle of Sigma)` for data dimension `d`.
pub fn niw_param_dim(d: usize) -> usize {
    d + packed_len(d)
}

/// Split a parameter vector into the mean and the symmetric covariance.
pub fn niw_split(theta: &[f64], d: usize) -> (&[f64], DMatrix<f64>) {
    (&theta[..d], unpack_lower(&theta[d..], d))
}

/// Normal-inverse-Wishart hyperparameters: `Sigma ~ IW(psi, nu)`, `mu | Sigma ~ N(mu0, Sigma / kappa)`.
///
/// `kappa = 0`, `nu = 0`, `psi = 0` is the uninformative limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwParams {
    pub mu0: DVector<f64>,
    pub kappa: f64,
    pub psi: DMatrix<f64>,
    pub nu: f64,
}

impl NiwParams {
    pub fn uninformative(d: usize) -> Self {
        Self {
            mu0: DVector::zeros(d),
            kappa: 0.0,
            psi: DMatrix::zeros(d, d),
            nu: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    /// Conjugate update from the count, sample mean and scatter matrix of the data.
    pub fn posterior(&self, n: usize, xbar: &DVector<f64>, scatter: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim() as f64;
        let nf = n as f64;
        if !(nf + self.nu > d - 1.0) {
            return Err(Error::Propriety(format!(
                "n + nu = {} must exceed d - 1 = {}",
                nf + self.nu,
                d - 1.0
            )));
        }
        let kappa_n = self.kappa + nf;
        if !(kappa_n > 0.0) {
            return Err(Error::Propriety("kappa + n must be positive".into()));
        }
        let (mu_n, shift) = if n == 0 {
            (self.mu0.clone(), DMatrix::zeros(self.dim(), self.dim()))
        } else {
            let mu_n = (&self.mu0 * self.kappa + xbar * nf) / kappa_n;
            let dev = xbar - &self.mu0;
            (mu_n, &dev * dev.transpose() * (self.kappa * nf / kappa_n))
        };
        let psi_n = symmetrize(&(&self.psi + scatter + shift));
        if cholesky_lower(&psi_n).is_none() {
            return Err(Error::Propriety("posterior scale matrix is not positive definite".into()));
        }
        Ok(Self {
            mu0: mu_n,
            kappa: kappa_n,
            psi: psi_n,
            nu: self.nu + nf,
        })
    }

    /// Posterior from raw observations.
    pub fn posterior_from_rows(&self, rows: &[f64]) -> Result<Self> {
        let d = self.dim();
        let n = rows.len() / d;
        if n == 0 {
            return self.posterior(0, &DVector::zeros(d), &DMatrix::zeros(d, d));
        }
        let xbar = mean_rows(rows, d);
        let s = scatter_rows(rows, d, &xbar);
        self.posterior(n, &xbar, &s)
    }

    /// Marginal distribution of `mu`: multivariate t with `nu - d + 1` degrees of freedom.
    pub fn mu_marginal(&self) -> Result<MvStudentT> {
        let d = self.dim() as f64;
        let dof = self.nu - d + 1.0;
        MvStudentT::new(self.mu0.clone(), &self.psi / (self.kappa * dof), dof)
    }

    /// Unnormalised log density of the inverse-Wishart marginal of `Sigma`,
    /// `-(nu + d + 1)/2 log|Sigma| - tr(psi Sigma^-1)/2`.
    pub fn log_sigma_marginal(&self, sigma: &DMatrix<f64>) -> f64 {
        let d = self.dim() as f64;
        let Some(l) = cholesky_lower(sigma) else {
            return f64::NEG_INFINITY;
        };
        let mut s = -0.5 * (self.nu + d + 1.0) * log_det_from_lower(&l);
        if self.psi.iter().any(|&v| v != 0.0) {
            match inverse_pd(sigma) {
                Ok(inv) => s -= 0.5 * (&self.psi * inv).trace(),
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        s
    }

    /// `E[Sigma] = psi / (nu - d - 1)`, defined for `nu > d + 1`.
    pub fn sigma_mean(&self) -> Option<DMatrix<f64>> {
        let denom = self.nu - self.dim() as f64 - 1.0;
        (denom > 0.0).then(|| &self.psi / denom)
    }
}

/// Normal-inverse-Wishart prior on `(mu, Sigma)` with `Sigma` packed by its lower triangle.
/// The log density is unnormalised.
#[derive(Debug, Clone)]
pub struct NiwPrior {
    params: NiwParams,
}

impl NiwPrior {
    pub fn new(params: NiwParams) -> Result<Self> {
        let d = params.dim();
        if params.psi.nrows() != d || params.psi.ncols() != d {
            return Err(Error::InvalidArgument("psi must be d x d".into()));
        }
        // A negative nu is allowed: fractionated priors need it and stay usable
        // as long as every local posterior is proper.
        if params.kappa < 0.0 || !params.nu.is_finite() {
            return Err(Error::InvalidArgument("kappa must be non-negative and nu finite".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &NiwParams {
        &self.params
    }
}

impl LogPrior for NiwPrior {
    fn dim(&self) -> usize {
        niw_param_dim(self.params.dim())
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let d = self.params.dim();
        let (mu, sigma) = niw_split(theta, d);
        let Some(l) = cholesky_lower(&sigma) else {
            return f64::NEG_INFINITY;
        };
        let log_det = log_det_from_lower(&l);
        let mut s = -0.5 * (self.params.nu + d as f64 + 2.0) * log_det;
        let need_inverse = self.params.kappa > 0.0 || self.params.psi.iter().any(|&v| v != 0.0);
        if need_inverse {
            let Ok(inv) = inverse_pd(&sigma) else {
                return f64::NEG_INFINITY;
            };
            s -= 0.5 * (&self.params.psi * &inv).trace();
            if self.params.kappa > 0.0 {
                let dev = DVector::from_column_slice(mu) - &self.params.mu0;
                s -= 0.5 * self.params.kappa * (dev.transpose() * inv * dev)[(0, 0)];
            }
        }
        s
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::Niw
    }
}

/// Normal observations with unknown mean and covariance.
#[derive(Debug, Clone)]
pub struct NiwPart {
    d: usize,
    n: usize,
    xbar: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl NiwPart {
    pub fn new(rows: &[Vec<f64>], d: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument(format!("observations must have length {d}")));
        }
        let flat = rows.concat();
        let n = rows.len();
        let xbar = if n == 0 { DVector::zeros(d) } else { mean_rows(&flat, d) };
        let scatter = scatter_rows(&flat, d, &xbar);
        Ok(Self { d, n, xbar, scatter })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xbar(&self) -> &DVector<f64> {
        &self.xbar
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }
}

impl PartLikelihood for NiwPart {
    fn dim(&self) -> usize {
        niw_param_dim(self.d)
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let (mu, sigma) = niw_split(theta, self.d);
        let Some(chol) = sigma.cholesky() else {
            return f64::NEG_INFINITY;
        };
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let dev = &self.xbar - DVector::from_column_slice(mu);
        let quad = (dev.transpose() * &inv * &dev)[(0, 0)];
        let trace = inv.component_mul(&self.scatter).sum();
        let n = self.n as f64;
        -0.5 * n * (self.d as f64 * LN_2PI + log_det) - 0.5 * (trace + n * quad)
    }

    fn size(&self) -> usize {
        self.n
    }
}

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{BetaParams, BetaPrior, IsoNormalPrior, LogPrior, MvnPrior, NiwParams, NiwPrior, PriorFamily};

/// Prior hyperparameters for the families that can be fractionated.
#[derive(Debug, Clone)]
pub enum PriorParams {
    Beta(BetaParams),
    Mvn(MvnPrior),
    Niw(NiwParams),
    MvnIid(IsoNormalPrior),
}

impl PriorParams {
    pub fn family(&self) -> PriorFamily {
        match self {
            PriorParams::Beta(_) => PriorFamily::Beta,
            PriorParams::Mvn(_) => PriorFamily::Mvn,
            PriorParams::Niw(_) => PriorFamily::Niw,
            PriorParams::MvnIid(_) => PriorFamily::MvnIid,
        }
    }

    pub fn log_prior(&self) -> Result<Arc<dyn LogPrior>> {
        Ok(match self {
            PriorParams::Beta(p) => Arc::new(BetaPrior::new(*p)),
            PriorParams::Mvn(p) => Arc::new(p.clone()),
            PriorParams::Niw(p) => Arc::new(NiwPrior::new(p.clone())?),
            PriorParams::MvnIid(p) => Arc::new(*p),
        })
    }
}

/// A prior raised to the power `1 / parts`, reparameterised within its family.
#[derive(Debug, Clone)]
pub struct FractionatedPrior {
    pub family: PriorFamily,
    pub params: PriorParams,
    pub parts: usize,
}

/// `nu / M - (M - 1)/M d - (M - 1)/M`, chosen so that `|Sigma|^-(nu+d+1)/2`
/// raised to `1/M` keeps the inverse-Wishart form.
pub fn niw_fractionated_nu(nu: f64, d: usize, m: usize) -> f64 {
    let mf = m as f64;
    let r = (mf - 1.0) / mf;
    nu / mf - r * d as f64 - r
}

/// Fractionate `prior` for `m` parts.
///
/// Beta maps `(a, b)` to `((a - 1)/M + 1, (b - 1)/M + 1)`; normal priors scale
/// the covariance by `M` (a flat prior is unchanged); NIW replaces `nu` by
/// [`niw_fractionated_nu`] and divides `psi` and `kappa` by `M`.
pub fn fractionate_prior(prior: &PriorParams, m: usize) -> Result<FractionatedPrior> {
    if m == 0 {
        return Err(Error::InvalidArgument("number of parts must be positive".into()));
    }
    let mf = m as f64;
    if m == 1 {
        return Ok(FractionatedPrior {
            family: prior.family(),
            params: prior.clone(),
            parts: 1,
        });
    }
    let params = match prior {
        PriorParams::Beta(p) => PriorParams::Beta(BetaParams::new((p.a - 1.0) / mf + 1.0, (p.b - 1.0) / mf + 1.0)?),
        PriorParams::Mvn(p) => match p.cov() {
            None => PriorParams::Mvn(p.clone()),
            Some(cov) => PriorParams::Mvn(MvnPrior::new(p.mean().clone(), cov * mf)?),
        },
        PriorParams::Niw(p) => {
            let mut q = p.clone();
            q.nu = niw_fractionated_nu(p.nu, p.dim(), m);
            q.kappa = p.kappa / mf;
            q.psi = &p.psi / mf;
            PriorParams::Niw(q)
        }
        PriorParams::MvnIid(p) => PriorParams::MvnIid(IsoNormalPrior::new(p.dim, p.scale * mf.sqrt())?),
    };
    Ok(FractionatedPrior {
        family: prior.family(),
        params,
        parts: m,
    })
}

/// Whether every local NIW posterior under the limiting fractionated prior
/// `nu* = -d - 1` is proper when `n` observations are split evenly: `floor(n/M) > 2d`.
pub fn check_fractionated_propriety(d: usize, n: usize, m: usize) -> bool {
    m > 0 && n / m > 2 * d
}

pub fn require_fractionated_propriety(d: usize, n: usize, m: usize) -> Result<()> {
    if check_fractionated_propriety(d, n, m) {
        Ok(())
    } else {
        Err(Error::Propriety(format!(
            "floor(n / M) = {} must exceed 2d = {} for the fractionated prior",
            if m > 0 { n / m } else { 0 },
            2 * d
        )))
    }
}

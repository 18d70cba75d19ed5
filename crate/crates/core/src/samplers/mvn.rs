use rand::Rng;

use crate::error::Result;
use crate::linalg::Mvn;
use crate::model::{DrawSource, MvnKnownCovPart, MvnPrior, ParamDraws};

/// Exact conjugate draws of the mean of normal data with known covariance.
pub fn sample_mvn_known_sigma_posterior<R: Rng + ?Sized>(
    prior: &MvnPrior,
    part: &MvnKnownCovPart,
    n: usize,
    source: DrawSource,
    rng: &mut R,
) -> Result<ParamDraws> {
    let (mean, cov) = prior.posterior(part.sigma(), part.n(), part.xbar())?;
    let dist = Mvn::new(mean, cov)?;
    let mut values = Vec::with_capacity(n * dist.dim());
    for _ in 0..n {
        values.extend(dist.sample(rng));
    }
    ParamDraws::new(dist.dim(), values, source)
}

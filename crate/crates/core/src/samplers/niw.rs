use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, pack_lower};
use crate::model::{DrawSource, NiwParams, NiwPart, ParamDraws};

/// A square root `B` (with `B B^T = Sigma`) of an inverse-Wishart draw
/// `Sigma ~ IW(psi, nu)`, via the Bartlett decomposition.
///
/// With `psi = U U^T` and `A` the lower Bartlett factor, `B = U A^{-T}`.
pub fn inverse_wishart_factor<R: Rng + ?Sized>(
    psi_lower: &DMatrix<f64>,
    nu: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = psi_lower.nrows();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let dof = nu - i as f64;
        let chi = ChiSquared::new(dof)
            .map_err(|_| Error::Propriety(format!("Wishart degrees of freedom {nu} too small for d = {d}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    // B^T = A^{-1} U^T
    let bt = a
        .solve_lower_triangular(&psi_lower.transpose())
        .ok_or_else(|| Error::Decomposition("singular Bartlett factor".into()))?;
    Ok(bt.transpose())
}

/// `n` exact draws of `(mu, Sigma)` from a proper NIW distribution.
pub fn sample_niw<R: Rng + ?Sized>(
    params: &NiwParams,
    n: usize,
    source: DrawSource,
    rng: &mut R,
) -> Result<ParamDraws> {
    let d = params.dim();
    if !(params.nu > d as f64 - 1.0) {
        return Err(Error::Propriety(format!(
            "nu = {} must exceed d - 1 = {}",
            params.nu,
            d - 1
        )));
    }
    if !(params.kappa > 0.0) {
        return Err(Error::Propriety("kappa must be positive to draw mu".into()));
    }
    let u = cholesky_lower(&params.psi)
        .ok_or_else(|| Error::Propriety("scale matrix is not positive definite".into()))?;
    let scale = params.kappa.sqrt().recip();
    let mut values = Vec::with_capacity(n * (d + d * (d + 1) / 2));
    for _ in 0..n {
        let b = inverse_wishart_factor(&u, params.nu, rng)?;
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let mu = &params.mu0 + (&b * z) * scale;
        let sigma = &b * b.transpose();
        values.extend(mu.iter());
        values.extend(pack_lower(&sigma));
    }
    ParamDraws::new(d + d * (d + 1) / 2, values, source)
}

/// Draws from the NIW posterior of one part's data.
pub fn sample_niw_posterior<R: Rng + ?Sized>(
    prior: &NiwParams,
    part: &NiwPart,
    n: usize,
    source: DrawSource,
    rng: &mut R,
) -> Result<ParamDraws> {
    let post = prior.posterior(part.n(), part.xbar(), part.scatter())?;
    sample_niw(&post, n, source, rng)
}

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{covariance_rows, inverse_pd, repair_pd};
use crate::model::{DrawSource, ParamDraws};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmcVariant {
    /// Plain average across parts.
    Cmc1,
    /// Precision-weighted average.
    Cmc2,
}

/// Normal summaries of the local draw sets and their precision-weighted product.
#[derive(Debug, Clone)]
pub struct Consensus {
    pub local_means: Vec<DVector<f64>>,
    /// Local covariances after any diagonal fallback.
    pub local_covs: Vec<DMatrix<f64>>,
    pub local_precisions: Vec<DMatrix<f64>>,
    pub sigma_star: DMatrix<f64>,
    pub mu_star: DVector<f64>,
    pub fallback_used: bool,
}

/// Per-part sample means and covariances, `Sigma* = (sum S_j^-1)^-1` and
/// `mu* = Sigma* sum S_j^-1 m_j`.
pub fn consensus_moments(local: &[&ParamDraws]) -> Result<Consensus> {
    let p = check(local)?;
    let mut out = Consensus {
        local_means: Vec::with_capacity(local.len()),
        local_covs: Vec::with_capacity(local.len()),
        local_precisions: Vec::with_capacity(local.len()),
        sigma_star: DMatrix::zeros(p, p),
        mu_star: DVector::zeros(p),
        fallback_used: false,
    };
    let mut total = DMatrix::zeros(p, p);
    let mut shift = DVector::zeros(p);
    for (j, set) in local.iter().enumerate() {
        if set.len() < p + 1 {
            return Err(Error::InvalidArgument(format!("part {j} has fewer than {} draws", p + 1)));
        }
        let (m, c) = covariance_rows(set.values(), p);
        let repaired = repair_pd(&c)?;
        out.fallback_used |= repaired.diagonal_fallback;
        let prec = inverse_pd(&repaired.matrix)?;
        total += &prec;
        shift += &prec * &m;
        out.local_means.push(m);
        out.local_covs.push(repaired.matrix);
        out.local_precisions.push(prec);
    }
    out.sigma_star = inverse_pd(&total)?;
    out.mu_star = &out.sigma_star * shift;
    Ok(out)
}

fn check(local: &[&ParamDraws]) -> Result<usize> {
    let first = local
        .first()
        .ok_or_else(|| Error::InvalidArgument("no local draw sets".into()))?;
    if local.iter().any(|s| s.dim() != first.dim()) {
        return Err(Error::InvalidArgument("local draw sets have differing dimensions".into()));
    }
    Ok(first.dim())
}

/// Consensus draws `theta*_h` for `h` up to the smallest local draw count;
/// excess draws are discarded.
pub fn cmc_pool(local: &[&ParamDraws], variant: CmcVariant) -> Result<ParamDraws> {
    let p = check(local)?;
    let n_bar = local.iter().map(|s| s.len()).min().expect("non-empty");
    if local.len() == 1 {
        return Ok(local[0].truncated(n_bar)?.with_source(DrawSource::Combined));
    }
    let m = local.len() as f64;
    let values: Vec<f64> = match variant {
        CmcVariant::Cmc1 => (0..n_bar)
            .into_par_iter()
            .flat_map_iter(|h| {
                let mut acc = vec![0.0; p];
                for set in local {
                    for (a, x) in acc.iter_mut().zip(set.row(h)) {
                        *a += x;
                    }
                }
                acc.into_iter().map(move |a| a / m)
            })
            .collect(),
        CmcVariant::Cmc2 => {
            let c = consensus_moments(local)?;
            let weights: Vec<DMatrix<f64>> = c.local_precisions.iter().map(|prec| &c.sigma_star * prec).collect();
            (0..n_bar)
                .into_par_iter()
                .flat_map_iter(|h| {
                    let mut acc = DVector::zeros(p);
                    for (set, w) in local.iter().zip(&weights) {
                        acc += w * DVector::from_column_slice(set.row(h));
                    }
                    acc.data.as_vec().clone()
                })
                .collect()
        }
    };
    ParamDraws::new(p, values, DrawSource::Combined)
}

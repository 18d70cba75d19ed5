//! Comparison methods: naive pooling, consensus Monte Carlo, fractionated
//! priors and the density product estimators.

mod cmc;
mod dpe;
mod fractionation;

use std::sync::Arc;

pub use cmc::{cmc_pool, consensus_moments, Consensus, CmcVariant};
pub use dpe::{
    clamp_draws, count_out_of_support, ndpe_sample, sdpe_sample, DpeOptions, DpeOutput, DpeReport,
    NdpeVariance,
};
pub use fractionation::{
    check_fractionated_propriety, fractionate_prior, niw_fractionated_nu, require_fractionated_propriety,
    FractionatedPrior, PriorParams,
};

use crate::error::Result;
use crate::mie::{Estimate, Scheme, WeightedSampleSet};
use crate::model::{DrawSource, ParamDraws};

/// Unweighted average of `f` over all pooled local draws.
pub fn naive_estimate<F: Fn(&[f64]) -> Vec<f64>>(local: &[&ParamDraws], f: F) -> Result<Estimate> {
    let pooled = ParamDraws::concat(local, DrawSource::Pooled)?;
    let weights = WeightedSampleSet::uniform(Scheme::Naive, Arc::new(pooled));
    Ok(Estimate {
        value: weights.expectation(f),
        weights,
    })
}

//! Multiple importance estimators built from the pooled draws and the
//! log-likelihood matrix.
//!
//! Every component of the proposal mixture is either a local posterior, whose
//! unnormalised density is the prior times its part's likelihood row, or a
//! normalised density evaluated at every pooled draw (the Laplace
//! approximations). MIE1/2/3 and their Laplace-extended variants share this
//! machinery; only the set of components differs.

mod estimators;
mod kde;
mod problem;
mod weighted;

pub use estimators::{
    chat_estimates, kl_hat, mie1_estimate, mie2_estimate, mie3_estimate, snis_log_weights, Estimate,
    KlHat, Mie2Options, Normalisation, KL_FLOOR,
};
pub use kde::{silverman_bandwidth, Bandwidth, WeightedKde};
pub use problem::{Component, ComponentDensity, ImportanceProblem};
pub use weighted::{weighted_density, weighted_quantile, Kernel, Scheme, WeightedSampleSet};

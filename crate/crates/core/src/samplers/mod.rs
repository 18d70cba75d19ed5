//! Exact and MCMC samplers for local posteriors.

mod beta;
mod logistic;
mod mvn;
mod niw;
mod polya_gamma;

pub use beta::{beta_draw, sample_beta_posterior};
pub use logistic::{logistic_gibbs, LogisticGibbs, PolyaGammaState};
pub use mvn::sample_mvn_known_sigma_posterior;
pub use niw::{inverse_wishart_factor, sample_niw, sample_niw_posterior};
pub use polya_gamma::{polya_gamma_draw, polya_gamma_mean};

pub use crate::model::{BetaParams, NiwParams};

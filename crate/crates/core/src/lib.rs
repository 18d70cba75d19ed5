//! Embarrassingly parallel Bayesian inference by multiple importance estimation.
//!
//! The data are split across `M` parts. Each part samples its local posterior,
//! the master pools every draw, each part evaluates its log-likelihood at every
//! pooled draw, and the master combines the resulting log-likelihood matrix into
//! importance-weighted estimates of full-posterior expectations.

pub mod error;
pub mod experiments;
pub mod baselines;
pub mod diagnostics;
pub mod federation;
pub mod io;
pub mod laplace;
pub mod linalg;
pub mod logspace;
pub mod mie;
pub mod model;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use model::{DrawSource, ModelSpec, ParamDraws};
pub use rng::Streams;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{BetaParams, DrawSource, ParamDraws};

/// Log of a Gamma(shape, 1) draw; shapes below one use the `U^(1/shape)` boost
/// so tiny shapes do not underflow.
fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        let u: f64 = 1.0 - rng.random::<f64>();
        log_gamma_draw(shape + 1.0, rng) + u.ln() / shape
    }
}

/// One Beta draw as a ratio of Gamma draws computed in log space.
pub fn beta_draw<R: Rng + ?Sized>(p: BetaParams, rng: &mut R) -> f64 {
    let la = log_gamma_draw(p.a, rng);
    let lb = log_gamma_draw(p.b, rng);
    1.0 / (1.0 + (lb - la).exp())
}

/// `n` draws from the conjugate posterior `Beta(a + s, b + trials - s)`.
pub fn sample_beta_posterior<R: Rng + ?Sized>(
    prior: BetaParams,
    successes: u64,
    trials: u64,
    n: usize,
    source: DrawSource,
    rng: &mut R,
) -> Result<ParamDraws> {
    if successes > trials {
        return Err(Error::InvalidArgument(format!(
            "{successes} successes exceed {trials} trials"
        )));
    }
    let post = prior.posterior(successes, trials);
    let values = (0..n).map(|_| beta_draw(post, rng)).collect();
    ParamDraws::new(1, values, source)
}

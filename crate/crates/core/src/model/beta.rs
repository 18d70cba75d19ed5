use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, ContinuousCDF};
#[cfg(test)]
use statrs::distribution::Continuous;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

use super::{LogPrior, PartLikelihood, PriorFamily};
use crate::error::{Error, Result};

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Beta shapes must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    /// Conjugate update with `successes` out of `trials` Bernoulli outcomes.
    pub fn posterior(&self, successes: u64, trials: u64) -> Self {
        Self {
            a: self.a + successes as f64,
            b: self.b + (trials - successes) as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.a - 1.0) * x.ln() + (self.b - 1.0) * (-x).ln_1p() - ln_beta(self.a, self.b)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist().cdf(x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.dist().inverse_cdf(p)
    }

    pub fn entropy(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
            + (a + b - 2.0) * digamma(a + b)
    }

    fn dist(&self) -> BetaDist {
        BetaDist::new(self.a, self.b).expect("validated shapes")
    }

    #[cfg(test)]
    fn density_check(&self, x: f64) -> f64 {
        self.dist().pdf(x)
    }
}

/// Beta prior on a probability. The log density is unnormalised:
/// `(a - 1) log x + (b - 1) log(1 - x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub params: BetaParams,
}

impl BetaPrior {
    pub fn new(params: BetaParams) -> Self {
        Self { params }
    }
}

impl LogPrior for BetaPrior {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let x = theta[0];
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.params.a, self.params.b);
        let mut s = 0.0;
        if a != 1.0 {
            s += (a - 1.0) * x.ln();
        }
        if b != 1.0 {
            s += (b - 1.0) * (-x).ln_1p();
        }
        s
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::Beta
    }
}

/// Bernoulli observations summarised by their success count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BernoulliPart {
    pub successes: u64,
    pub trials: u64,
}

impl BernoulliPart {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if successes > trials {
            return Err(Error::InvalidArgument(format!(
                "{successes} successes exceed {trials} trials"
            )));
        }
        Ok(Self { successes, trials })
    }

    pub fn from_outcomes(outcomes: &[f64]) -> Result<Self> {
        let mut s = 0u64;
        for &y in outcomes {
            if y == 1.0 {
                s += 1;
            } else if y != 0.0 {
                return Err(Error::InvalidArgument(format!("Bernoulli outcome {y} is not 0 or 1")));
            }
        }
        Self::new(s, outcomes.len() as u64)
    }
}

impl PartLikelihood for BernoulliPart {
    fn dim(&self) -> usize {
        1
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        let x = theta[0];
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        let fails = self.trials - self.successes;
        let mut s = 0.0;
        if self.successes > 0 {
            s += self.successes as f64 * x.ln();
        }
        if fails > 0 {
            s += fails as f64 * (-x).ln_1p();
        }
        s
    }

    fn size(&self) -> usize {
        self.trials as usize
    }
}

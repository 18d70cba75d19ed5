use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::polya_gamma::polya_gamma_draw;
use crate::error::{Error, Result};
use crate::linalg::inverse_pd;
use crate::model::{DrawSource, LogisticRow, ParamDraws};

/// Current augmentation variables and coefficients of the Gibbs chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyaGammaState {
    pub omega: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Pólya-Gamma data-augmentation Gibbs sampler for binomial logistic regression
/// with a normal prior `N(b, B)`.
#[derive(Debug, Clone)]
pub struct LogisticGibbs {
    rows: Vec<LogisticRow>,
    dim: usize,
    prior_prec: DMatrix<f64>,
    prior_shift: DVector<f64>,
    kappa_x: DVector<f64>,
}

impl LogisticGibbs {
    pub fn new(rows: Vec<LogisticRow>, prior_mean: &DVector<f64>, prior_cov: &DMatrix<f64>) -> Result<Self> {
        let dim = prior_mean.len();
        if let Some(r) = rows.iter().find(|r| r.x.len() != dim || r.successes > r.trials) {
            return Err(Error::InvalidArgument(format!("invalid logistic row {r:?}")));
        }
        let prior_prec = inverse_pd(prior_cov)?;
        let prior_shift = &prior_prec * prior_mean;
        let mut kappa_x = DVector::zeros(dim);
        for r in &rows {
            let k = r.successes as f64 - 0.5 * r.trials as f64;
            for (a, x) in kappa_x.iter_mut().zip(&r.x) {
                *a += k * x;
            }
        }
        Ok(Self {
            rows,
            dim,
            prior_prec,
            prior_shift,
            kappa_x,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One sweep: refresh every `omega_i`, then draw `theta` from its Gaussian conditional.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut PolyaGammaState, rng: &mut R) -> Result<()> {
        state.omega.resize(self.rows.len(), 0.0);
        let mut prec = self.prior_prec.clone();
        for (r, w) in self.rows.iter().zip(state.omega.iter_mut()) {
            let eta: f64 = r.x.iter().zip(&state.theta).map(|(a, b)| a * b).sum();
            *w = polya_gamma_draw(r.trials, eta, rng);
            for a in 0..self.dim {
                let wa = *w * r.x[a];
                if wa == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    prec[(a, b)] += wa * r.x[b];
                }
            }
        }
        for a in 0..self.dim {
            for b in 0..a {
                prec[(b, a)] = prec[(a, b)];
            }
        }
        let chol = prec.cholesky().ok_or_else(|| {
            Error::Decomposition("conditional precision of the coefficients is not positive definite".into())
        })?;
        let mean = chol.solve(&(&self.kappa_x + &self.prior_shift));
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        let dev = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Decomposition("singular Cholesky factor".into()))?;
        state.theta = (mean + dev).as_slice().to_vec();
        Ok(())
    }

    /// Run `iterations` sweeps from `init`, discarding the first `burn_in`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        init: &[f64],
        iterations: usize,
        burn_in: usize,
        source: DrawSource,
        rng: &mut R,
    ) -> Result<ParamDraws> {
        if burn_in >= iterations {
            return Err(Error::InvalidArgument(format!(
                "burn-in {burn_in} leaves no draws out of {iterations}"
            )));
        }
        let mut state = PolyaGammaState {
            omega: vec![0.0; self.rows.len()],
            theta: init.to_vec(),
        };
        let mut values = Vec::with_capacity((iterations - burn_in) * self.dim);
        for it in 0..iterations {
            self.step(&mut state, rng)?;
            if it >= burn_in {
                values.extend_from_slice(&state.theta);
            }
        }
        ParamDraws::new(self.dim, values, source)
    }
}

/// Gibbs chain for logistic regression started at the prior mean.
pub fn logistic_gibbs<R: Rng + ?Sized>(
    rows: Vec<LogisticRow>,
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    iterations: usize,
    burn_in: usize,
    source: DrawSource,
    rng: &mut R,
) -> Result<ParamDraws> {
    let sampler = LogisticGibbs::new(rows, prior_mean, prior_cov)?;
    sampler.run(prior_mean.as_slice(), iterations, burn_in, source, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn symmetric_data_gives_zero_mean() {
        let rows = vec![LogisticRow { x: vec![1.0], trials: 40, successes: 20 }];
        let mut rng = Streams::new(1).stream(0, "gibbs");
        let d = logistic_gibbs(rows, &DVector::zeros(1), &DMatrix::from_element(1, 1, 6.25), 20_000, 10_000, DrawSource::Local(0), &mut rng).unwrap();
        let m = d.mean()[0];
        // posterior sd is about 2 / sqrt(40) ~ 0.32; autocorrelation is mild
        assert!(m.abs() < 0.03, "mean {m}");
    }

    #[test]
    fn separated_data_signs() {
        let rows = vec![
            LogisticRow { x: vec![1.0, 1.0], trials: 10, successes: 10 },
            LogisticRow { x: vec![1.0, -1.0], trials: 10, successes: 0 },
        ];
        let mut rng = Streams::new(1).stream(0, "gibbs");
        let d = logistic_gibbs(rows, &DVector::zeros(2), &(DMatrix::identity(2, 2) * 6.25), 4_000, 2_000, DrawSource::Local(0), &mut rng).unwrap();
        let m = d.mean();
        assert!(m[0].abs() < 0.5 && m[1] > 1.0, "mean {m:?}");
    }

    #[test]
    fn rejects_excess_successes() {
        let rows = vec![LogisticRow { x: vec![1.0], trials: 1, successes: 2 }];
        assert!(LogisticGibbs::new(rows, &DVector::zeros(1), &DMatrix::identity(1, 1)).is_err());
    }
}

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use super::config::{ModelConfig, ScenarioConfig};
use super::scenario::{logistic_chain, scenario_prior, Dataset};
use crate::baselines::PriorParams;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, log_det_from_lower, mean_rows, pack_lower, packed_len, Mvn};
use crate::model::{group_logistic_rows, BetaParams, NiwParams};
use crate::rng::Streams;
use crate::samplers::{beta_draw, sample_niw};
use crate::{DrawSource, ParamDraws};

const LN_PI: f64 = 1.144_729_885_849_400_2;

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How the truth's entropy enters a KL estimate.
#[derive(Clone)]
pub enum TruthDensity {
    Entropy(f64),
    LogDensity(LogDensityFn),
    /// No density available; densities are scored by cross entropy.
    Unknown,
}

impl std::fmt::Debug for TruthDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TruthDensity::Entropy(h) => write!(f, "Entropy({h})"),
            TruthDensity::LogDensity(_) => f.write_str("LogDensity"),
            TruthDensity::Unknown => f.write_str("Unknown"),
        }
    }
}

/// Truth summaries for one block of coordinates, e.g. `mu` or `sigma`.
#[derive(Clone)]
pub struct TargetTruth {
    pub name: String,
    pub coords: Vec<usize>,
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
    pub density: TruthDensity,
    /// Marginal quantile function per coordinate, when known in closed form.
    pub quantile: Option<Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>>,
    /// Normalised log density of the block, when known.
    pub log_pdf: Option<LogDensityFn>,
}

impl std::fmt::Debug for TargetTruth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TargetTruth")
            .field("name", &self.name)
            .field("coords", &self.coords)
            .field("mean", &self.mean)
            .field("density", &self.density)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
enum Posterior {
    Beta(BetaParams),
    Normal(Mvn),
    Niw(NiwParams),
    /// Long Gibbs chain on the full data.
    Reference { chain: ParamDraws },
}

/// The full-data posterior of a scenario.
#[derive(Debug, Clone)]
pub struct Truth {
    posterior: Posterior,
    pub targets: Vec<TargetTruth>,
    /// Draws at which approximations are scored.
    pub draws: ParamDraws,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub name: String,
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub kind: String,
    pub scoring_draws: usize,
    pub reference_draws: Option<usize>,
    pub targets: Vec<TargetSummary>,
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    // Type-7 interpolation.
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn draw_summaries(draws: &ParamDraws, coords: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut mean = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for &k in coords {
        let mut col = draws.column(k);
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        lo.push(empirical_quantile(&col, 0.025));
        hi.push(empirical_quantile(&col, 0.975));
    }
    (mean, lo, hi)
}

/// `log Gamma_d(a)`.
fn ln_multigamma(d: usize, a: f64) -> f64 {
    0.25 * (d * (d - 1)) as f64 * LN_PI + (1..=d).map(|j| ln_gamma(a + 0.5 * (1.0 - j as f64))).sum::<f64>()
}

/// Normalised inverse-Wishart log density over the packed lower triangle.
fn inverse_wishart_log_density(psi: &DMatrix<f64>, nu: f64) -> Result<LogDensityFn> {
    let d = psi.nrows();
    let l = cholesky_lower(psi).ok_or_else(|| Error::Propriety("inverse-Wishart scale is not positive definite".into()))?;
    let log_norm = 0.5 * nu * log_det_from_lower(&l) - 0.5 * nu * d as f64 * std::f64::consts::LN_2 - ln_multigamma(d, 0.5 * nu);
    let params = NiwParams {
        mu0: DVector::zeros(d),
        kappa: 1.0,
        psi: psi.clone(),
        nu,
    };
    Ok(Arc::new(move |packed: &[f64]| {
        let sigma = crate::linalg::unpack_lower(packed, d);
        log_norm + params.log_sigma_marginal(&sigma)
    }))
}

impl Truth {
    /// Closed-form posterior, or a reference chain `reference_factor` times
    /// longer than the local chains for logistic regression.
    pub fn compute(config: &ScenarioConfig, data: &Dataset, streams: &Streams) -> Result<Self> {
        let n_star = config.truth.draws;
        let mut rng = streams.stream(0, "truth");
        let prior = scenario_prior(&config.model)?;
        match (&config.model, &prior) {
            (ModelConfig::BetaBernoulli { n, .. }, PriorParams::Beta(b)) => {
                let s = data.rows.iter().filter(|r| r[0] == 1.0).count() as u64;
                let post = b.posterior(s, *n as u64);
                let draws = ParamDraws::new(1, (0..n_star).map(|_| beta_draw(post, &mut rng)).collect(), DrawSource::Truth)?;
                let q = move |_k: usize, p: f64| post.quantile(p);
                Ok(Self {
                    posterior: Posterior::Beta(post),
                    targets: vec![TargetTruth {
                        name: "theta".into(),
                        coords: vec![0],
                        mean: vec![post.mean()],
                        q025: vec![post.quantile(0.025)],
                        q975: vec![post.quantile(0.975)],
                        density: TruthDensity::Entropy(post.entropy()),
                        quantile: Some(Arc::new(q)),
                        log_pdf: Some(Arc::new(move |x: &[f64]| post.log_pdf(x[0]))),
                    }],
                    draws,
                    dim: 1,
                })
            }
            (ModelConfig::MvnKnownSigma { d, n }, _) => {
                let d = *d;
                let flat = data.rows.concat();
                let xbar = mean_rows(&flat, d);
                let var = data.sigma_diag.as_ref().expect("known covariance");
                let cov = DMatrix::from_diagonal(&DVector::from_iterator(d, var.iter().map(|v| v / *n as f64)));
                let dist = Mvn::new(xbar.clone(), cov.clone())?;
                let mut values = Vec::with_capacity(n_star * d);
                for _ in 0..n_star {
                    values.extend(dist.sample(&mut rng));
                }
                let sd: Vec<f64> = (0..d).map(|k| cov[(k, k)].sqrt()).collect();
                let mean: Vec<f64> = xbar.iter().copied().collect();
                let (m2, s2) = (mean.clone(), sd.clone());
                let q = move |k: usize, p: f64| Normal::new(m2[k], s2[k]).expect("positive sd").inverse_cdf(p);
                let q025 = (0..d).map(|k| q(k, 0.025)).collect();
                let q975 = (0..d).map(|k| q(k, 0.975)).collect();
                let entropy = dist.entropy();
                let pdf = dist.clone();
                Ok(Self {
                    posterior: Posterior::Normal(dist),
                    targets: vec![TargetTruth {
                        name: "theta".into(),
                        coords: (0..d).collect(),
                        mean,
                        q025,
                        q975,
                        density: TruthDensity::Entropy(entropy),
                        quantile: Some(Arc::new(q)),
                        log_pdf: Some(Arc::new(move |x: &[f64]| pdf.log_density(x))),
                    }],
                    draws: ParamDraws::new(d, values, DrawSource::Truth)?,
                    dim: d,
                })
            }
            (ModelConfig::MvnNiw { d, .. }, PriorParams::Niw(p0)) => {
                let d = *d;
                let post = p0.posterior_from_rows(&data.rows.concat())?;
                let draws = sample_niw(&post, n_star, DrawSource::Truth, &mut rng)?;
                let t = post.mu_marginal()?;
                let dof = t.dof();
                let loc: Vec<f64> = t.loc().iter().copied().collect();
                let scale: Vec<f64> = (0..d).map(|k| t.scale()[(k, k)].sqrt()).collect();
                let (l2, s2) = (loc.clone(), scale.clone());
                let q = move |k: usize, p: f64| {
                    StudentsT::new(l2[k], s2[k], dof).expect("valid t").inverse_cdf(p)
                };
                let t_density: LogDensityFn = Arc::new(move |x: &[f64]| t.log_density(x));
                let mu = TargetTruth {
                    name: "mu".into(),
                    coords: (0..d).collect(),
                    mean: loc,
                    q025: (0..d).map(|k| q(k, 0.025)).collect(),
                    q975: (0..d).map(|k| q(k, 0.975)).collect(),
                    density: TruthDensity::LogDensity(t_density.clone()),
                    quantile: Some(Arc::new(q)),
                    log_pdf: Some(t_density),
                };
                // Quantiles of covariance entries come from a large exact sample.
                let k = packed_len(d);
                let exact = sample_niw(&post, config.truth.quantile_draws.max(2), DrawSource::Truth, &mut streams.stream(1, "truth"))?;
                let coords: Vec<usize> = (d..d + k).collect();
                let (_, q025, q975) = draw_summaries(&exact, &coords);
                let sigma_mean = post
                    .sigma_mean()
                    .ok_or_else(|| Error::Propriety("posterior covariance mean needs nu > d + 1".into()))?;
                let iw = inverse_wishart_log_density(&post.psi, post.nu)?;
                let sigma = TargetTruth {
                    name: "sigma".into(),
                    coords,
                    mean: pack_lower(&sigma_mean),
                    q025,
                    q975,
                    density: TruthDensity::LogDensity(iw.clone()),
                    quantile: None,
                    log_pdf: Some(iw),
                };
                Ok(Self {
                    posterior: Posterior::Niw(post),
                    targets: vec![mu, sigma],
                    draws,
                    dim: d + k,
                })
            }
            (ModelConfig::Logistic { p, .. }, PriorParams::MvnIid(iso)) => {
                let len = config.truth.reference_factor.max(1) * config.draws_per_part;
                let rows = logistic_rows(data)?;
                let chain = logistic_chain(rows, iso, len, config.burn_in(), DrawSource::Truth, &mut rng)?;
                let coords: Vec<usize> = (0..*p).collect();
                let (mean, q025, q975) = draw_summaries(&chain, &coords);
                // Evenly thinned scoring draws.
                let take = n_star.min(chain.len());
                let mut values = Vec::with_capacity(take * p);
                for i in 0..take {
                    values.extend_from_slice(chain.row(i * chain.len() / take));
                }
                Ok(Self {
                    posterior: Posterior::Reference { chain },
                    targets: vec![TargetTruth {
                        name: "theta".into(),
                        coords,
                        mean,
                        q025,
                        q975,
                        density: TruthDensity::Unknown,
                        quantile: None,
                        log_pdf: None,
                    }],
                    draws: ParamDraws::new(*p, values, DrawSource::Truth)?,
                    dim: *p,
                })
            }
            _ => Err(Error::Config("model and prior do not match".into())),
        }
    }

    /// Independent draws from the true posterior (the vanilla estimator). For
    /// logistic regression this runs a fresh full-data chain.
    pub fn sample(&self, config: &ScenarioConfig, data: &Dataset, n: usize, streams: &Streams) -> Result<ParamDraws> {
        let mut rng = streams.stream(0, "vanilla");
        match &self.posterior {
            Posterior::Beta(b) => ParamDraws::new(1, (0..n).map(|_| beta_draw(*b, &mut rng)).collect(), DrawSource::Truth),
            Posterior::Normal(dist) => {
                let mut values = Vec::with_capacity(n * dist.dim());
                for _ in 0..n {
                    values.extend(dist.sample(&mut rng));
                }
                ParamDraws::new(dist.dim(), values, DrawSource::Truth)
            }
            Posterior::Niw(post) => sample_niw(post, n, DrawSource::Truth, &mut rng),
            Posterior::Reference { .. } => {
                let PriorParams::MvnIid(iso) = scenario_prior(&config.model)? else {
                    return Err(Error::Config("logistic model needs a normal prior".into()));
                };
                logistic_chain(logistic_rows(data)?, &iso, n, config.burn_in(), DrawSource::Truth, &mut rng)
            }
        }
    }

    pub fn reference_chain(&self) -> Option<&ParamDraws> {
        match &self.posterior {
            Posterior::Reference { chain } => Some(chain),
            _ => None,
        }
    }

    pub fn target(&self, name: &str) -> Option<&TargetTruth> {
        self.targets.iter().find(|t| t.name == name)
    }

    pub fn summary(&self) -> TruthSummary {
        TruthSummary {
            kind: match self.posterior {
                Posterior::Beta(_) => "beta",
                Posterior::Normal(_) => "normal",
                Posterior::Niw(_) => "normal_inverse_wishart",
                Posterior::Reference { .. } => "reference_chain",
            }
            .into(),
            scoring_draws: self.draws.len(),
            reference_draws: self.reference_chain().map(|c| c.len()),
            targets: self
                .targets
                .iter()
                .map(|t| TargetSummary {
                    name: t.name.clone(),
                    mean: t.mean.clone(),
                    q025: t.q025.clone(),
                    q975: t.q975.clone(),
                })
                .collect(),
        }
    }
}

fn logistic_rows(data: &Dataset) -> Result<Vec<crate::model::LogisticRow>> {
    let raw: Vec<(Vec<f64>, u8)> = data
        .rows
        .iter()
        .map(|r| (r[..r.len() - 1].to_vec(), r[r.len() - 1] as u8))
        .collect();
    group_logistic_rows(&raw)
}

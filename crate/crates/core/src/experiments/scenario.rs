use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BetaDesign, LogisticDesign, ModelConfig, PartitionKind, ScenarioConfig};
use crate::baselines::{fractionate_prior, PriorParams};
use crate::error::{Error, Result};
use crate::model::{
    group_logistic_rows, partition_data, BernoulliPart, BetaParams, IsoNormalPrior, LogisticPart, LogisticRow,
    MvnKnownCovPart, MvnPrior, NiwParams, NiwPart, PartLikelihood, PartitionScheme, PartitionedData,
};
use crate::rng::Streams;
use crate::samplers::{sample_beta_posterior, sample_mvn_known_sigma_posterior, sample_niw_posterior, LogisticGibbs};
use crate::{DrawSource, ModelSpec, ParamDraws};

/// Simulated observations shared by every run of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// One row per observation. Logistic rows end with the 0/1 outcome.
    pub rows: Vec<Vec<f64>>,
    /// Known covariance diagonal (normal models).
    pub sigma_diag: Option<Vec<f64>>,
    /// Parameters the data were generated from.
    pub generating: Vec<f64>,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Frequencies and effects of the binary predictors in the grouped logistic
/// design, cycled when more predictors are requested.
const GROUPED_FREQ: [f64; 5] = [0.5, 0.2, 0.05, 0.02, 0.3];
const GROUPED_EFFECT: [f64; 5] = [0.8, -0.6, 1.2, 1.5, -0.4];
const GROUPED_INTERCEPT: f64 = -3.0;

pub fn simulate_data<R: Rng + ?Sized>(model: &ModelConfig, rng: &mut R) -> Result<Dataset> {
    Ok(match *model {
        ModelConfig::BetaBernoulli { n, design, .. } => {
            let positives = match design {
                BetaDesign::SingleSuccess => 1.min(n),
                BetaDesign::HalfSplit => n / 2,
            };
            Dataset {
                rows: (0..n).map(|i| vec![if i < positives { 1.0 } else { 0.0 }]).collect(),
                sigma_diag: None,
                generating: vec![positives as f64 / n as f64],
            }
        }
        ModelConfig::MvnKnownSigma { d, n } | ModelConfig::MvnNiw { d, n } => {
            let gamma = Gamma::new(10.0, 1.0).expect("valid gamma");
            let var: Vec<f64> = (0..d).map(|_| gamma.sample(rng)).collect();
            let mu: Vec<f64> = var
                .iter()
                .map(|v| (0.5 * v).sqrt() * normal(rng))
                .collect();
            let rows = (0..n)
                .map(|_| {
                    mu.iter()
                        .zip(&var)
                        .map(|(m, v)| m + v.sqrt() * normal(rng))
                        .collect()
                })
                .collect();
            let mut generating = mu;
            generating.extend(&var);
            Dataset {
                rows,
                sigma_diag: Some(var),
                generating,
            }
        }
        ModelConfig::Logistic { design, p, n, .. } => {
            let theta: Vec<f64> = match design {
                LogisticDesign::Grouped => std::iter::once(GROUPED_INTERCEPT)
                    .chain((0..p - 1).map(|k| GROUPED_EFFECT[k % GROUPED_EFFECT.len()]))
                    .collect(),
                LogisticDesign::Gaussian => (0..p).map(|_| normal(rng)).collect(),
            };
            let rows = (0..n)
                .map(|_| {
                    let x: Vec<f64> = match design {
                        LogisticDesign::Grouped => std::iter::once(1.0)
                            .chain((0..p - 1).map(|k| {
                                let f = GROUPED_FREQ[k % GROUPED_FREQ.len()];
                                if rng.random::<f64>() < f { 1.0 } else { 0.0 }
                            }))
                            .collect(),
                        LogisticDesign::Gaussian => (0..p).map(|_| normal(rng)).collect(),
                    };
                    let eta: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
                    let y = if rng.random::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 };
                    let mut row = x;
                    row.push(y);
                    row
                })
                .collect();
            Dataset {
                rows,
                sigma_diag: None,
                generating: theta,
            }
        }
    })
}

fn split_logistic(rows: &[Vec<f64>]) -> Result<Vec<LogisticRow>> {
    let raw: Vec<(Vec<f64>, u8)> = rows
        .iter()
        .map(|r| {
            let (x, y) = r.split_at(r.len() - 1);
            (x.to_vec(), y[0] as u8)
        })
        .collect();
    group_logistic_rows(&raw)
}

/// Data held by one part, ready for likelihood evaluation and local sampling.
#[derive(Debug, Clone)]
pub enum PartData {
    Beta(BernoulliPart),
    Mvn(MvnKnownCovPart),
    Niw(NiwPart),
    Logistic(LogisticPart),
}

impl PartData {
    fn new(model: &ModelConfig, rows: &[Vec<f64>], sigma: Option<&DMatrix<f64>>) -> Result<Self> {
        Ok(match *model {
            ModelConfig::BetaBernoulli { .. } => {
                let ys: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                PartData::Beta(BernoulliPart::from_outcomes(&ys)?)
            }
            ModelConfig::MvnKnownSigma { .. } => {
                PartData::Mvn(MvnKnownCovPart::new(rows, sigma.expect("known covariance").clone())?)
            }
            ModelConfig::MvnNiw { d, .. } => PartData::Niw(NiwPart::new(rows, d)?),
            ModelConfig::Logistic { p, .. } => PartData::Logistic(LogisticPart::new(p, split_logistic(rows)?)?),
        })
    }

    pub fn likelihood(&self) -> Arc<dyn PartLikelihood> {
        match self {
            PartData::Beta(p) => Arc::new(*p),
            PartData::Mvn(p) => Arc::new(p.clone()),
            PartData::Niw(p) => Arc::new(p.clone()),
            PartData::Logistic(p) => Arc::new(p.clone()),
        }
    }

    /// `n` draws from this part's posterior under `prior`. Gibbs chains start at
    /// zero and discard `burn_in` iterations.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        prior: &PriorParams,
        n: usize,
        burn_in: usize,
        source: DrawSource,
        rng: &mut R,
    ) -> Result<ParamDraws> {
        match (self, prior) {
            (PartData::Beta(p), PriorParams::Beta(b)) => sample_beta_posterior(*b, p.successes, p.trials, n, source, rng),
            (PartData::Mvn(p), PriorParams::Mvn(m)) => sample_mvn_known_sigma_posterior(m, p, n, source, rng),
            (PartData::Niw(p), PriorParams::Niw(w)) => sample_niw_posterior(w, p, n, source, rng),
            (PartData::Logistic(p), PriorParams::MvnIid(iso)) => {
                logistic_chain(p.rows().to_vec(), iso, n, burn_in, source, rng)
            }
            _ => Err(Error::InvalidArgument("prior family does not match the part's model".into())),
        }
    }
}

pub(crate) fn logistic_chain<R: Rng + ?Sized>(
    rows: Vec<LogisticRow>,
    prior: &IsoNormalPrior,
    n: usize,
    burn_in: usize,
    source: DrawSource,
    rng: &mut R,
) -> Result<ParamDraws> {
    let p = prior.dim;
    let cov = DMatrix::identity(p, p) * prior.scale.powi(2);
    let gibbs = LogisticGibbs::new(rows, &DVector::zeros(p), &cov)?;
    gibbs.run(&vec![0.0; p], n + burn_in, burn_in, source, rng)
}

/// Prior shared by every run of a model.
pub fn scenario_prior(model: &ModelConfig) -> Result<PriorParams> {
    Ok(match *model {
        ModelConfig::BetaBernoulli { prior, .. } => PriorParams::Beta(BetaParams::new(prior[0], prior[1])?),
        ModelConfig::MvnKnownSigma { d, .. } => PriorParams::Mvn(MvnPrior::flat(d)),
        ModelConfig::MvnNiw { d, .. } => PriorParams::Niw(NiwParams::uninformative(d)),
        ModelConfig::Logistic { p, prior_scale, .. } => PriorParams::MvnIid(IsoNormalPrior::new(p, prior_scale)?),
    })
}

/// One data set split into `M` parts, with the full and fractionated priors.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub data: Arc<Dataset>,
    pub partition: PartitionedData,
    pub parts: Vec<PartData>,
    pub prior: PriorParams,
    pub fractionated: PriorParams,
    pub model: ModelSpec,
}

impl Scenario {
    pub fn build(config: &ScenarioConfig, data: Arc<Dataset>, streams: &Streams) -> Result<Self> {
        let m = config.parts;
        let scheme = match (&config.model, config.partition) {
            (ModelConfig::BetaBernoulli { design: BetaDesign::HalfSplit, .. }, _) if m > 1 => {
                let pos_parts = m / 2;
                let neg_parts = m - pos_parts;
                let (mut pi, mut ni) = (0, 0);
                let labels = data
                    .rows
                    .iter()
                    .map(|r| {
                        if r[0] == 1.0 {
                            pi += 1;
                            (pi - 1) % pos_parts
                        } else {
                            ni += 1;
                            pos_parts + (ni - 1) % neg_parts
                        }
                    })
                    .collect();
                PartitionScheme::ByLabel(labels)
            }
            (_, PartitionKind::Block) => PartitionScheme::Block,
            _ => PartitionScheme::Random,
        };
        let partition = partition_data(&data.rows, m, &scheme, &mut streams.stream(0, "partition"))?;
        let sigma = data
            .sigma_diag
            .as_ref()
            .map(|v| DMatrix::from_diagonal(&DVector::from_column_slice(v)));
        let parts = partition
            .parts
            .iter()
            .map(|rows| PartData::new(&config.model, rows, sigma.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let prior = scenario_prior(&config.model)?;
        let fractionated = match config.model {
            ModelConfig::BetaBernoulli {
                fractionated_prior: Some(p),
                ..
            } => PriorParams::Beta(BetaParams::new(p[0], p[1])?),
            _ => fractionate_prior(&prior, m)?.params,
        };
        let model = ModelSpec::new(prior.log_prior()?, parts.iter().map(|p| p.likelihood()).collect())?;
        Ok(Self {
            config: config.clone(),
            data,
            partition,
            parts,
            prior,
            fractionated,
            model,
        })
    }

    /// Local posterior draws of every part, one RNG substream per part.
    pub fn local_draws(&self, prior: &PriorParams, purpose: &str, streams: &Streams) -> Result<Vec<ParamDraws>> {
        let n = self.config.draws_per_part;
        let burn = self.config.burn_in();
        self.parts
            .par_iter()
            .enumerate()
            .map(|(j, part)| {
                let draws = part.sample(prior, n, burn, DrawSource::Local(j), &mut streams.stream(j as u64, purpose))?;
                Ok(draws.with_seed(streams.trace(j as u64, purpose)))
            })
            .collect()
    }
}

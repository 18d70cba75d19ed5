#![allow(dead_code)]

use std::sync::Arc;

use lemie_core::federation::{run_in_out_in, ProtocolOptions, ProtocolRun};
use lemie_core::model::{BernoulliPart, BetaParams, BetaPrior, LogPrior, PartLikelihood};
use lemie_core::samplers::sample_beta_posterior;
use lemie_core::{DrawSource, ModelSpec, ParamDraws, Streams};
use statrs::function::beta::ln_beta;

pub struct BetaSetup {
    pub prior: BetaParams,
    pub parts: Vec<(u64, u64)>,
    pub model: ModelSpec,
}

impl BetaSetup {
    pub fn new(a: f64, b: f64, parts: &[(u64, u64)]) -> Self {
        let prior = BetaParams::new(a, b).unwrap();
        let p: Arc<dyn LogPrior> = Arc::new(BetaPrior::new(prior));
        let likes = parts
            .iter()
            .map(|&(s, n)| Arc::new(BernoulliPart::new(s, n).unwrap()) as Arc<dyn PartLikelihood>)
            .collect();
        Self {
            prior,
            parts: parts.to_vec(),
            model: ModelSpec::new(p, likes).unwrap(),
        }
    }

    pub fn posterior(&self) -> BetaParams {
        let s: u64 = self.parts.iter().map(|p| p.0).sum();
        let n: u64 = self.parts.iter().map(|p| p.1).sum();
        self.prior.posterior(s, n)
    }

    pub fn local(&self, j: usize) -> BetaParams {
        self.prior.posterior(self.parts[j].0, self.parts[j].1)
    }

    /// log Z_pi / Z_j for the unnormalised Beta prior.
    pub fn log_chat_truth(&self, j: usize) -> f64 {
        let p = self.posterior();
        let l = self.local(j);
        ln_beta(p.a, p.b) - ln_beta(l.a, l.b)
    }

    pub fn local_draws(&self, n: usize, seed: u64) -> Vec<ParamDraws> {
        let streams = Streams::new(seed);
        (0..self.parts.len())
            .map(|j| {
                let (s, t) = self.parts[j];
                sample_beta_posterior(self.prior, s, t, n, DrawSource::Local(j), &mut streams.stream(j as u64, "local"))
                    .unwrap()
            })
            .collect()
    }

    pub fn run(&self, n: usize, seed: u64) -> ProtocolRun {
        run_in_out_in(&self.model, &self.local_draws(n, seed), ProtocolOptions::default()).unwrap()
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

pub fn identity(theta: &[f64]) -> Vec<f64> {
    theta.to_vec()
}

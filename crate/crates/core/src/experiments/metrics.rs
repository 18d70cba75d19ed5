use serde::{Deserialize, Serialize};

use super::truth::{TargetTruth, Truth, TruthDensity};
use crate::diagnostics::{cross_entropy, diagnose, kl_divergence, GpdOptions, TruthEntropy};
use crate::error::{Error, Result};
use crate::mie::{weighted_quantile, Bandwidth, WeightedKde, WeightedSampleSet};

/// Metric names a result row may carry.
pub const METRICS: [&str; 10] = [
    "err_mean",
    "err_q025",
    "err_q975",
    "kl",
    "cross_entropy",
    "ess",
    "khat",
    "acceptance_rate",
    "out_of_support",
    "failed",
];

/// One metric of one method in one run. `target` names the parameter block
/// (`theta`, or `mu` / `sigma` for the normal-inverse-Wishart model); run-wide
/// metrics use `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    #[serde(rename = "M")]
    pub parts: usize,
    pub target: String,
    pub metric: String,
    pub value: f64,
    pub se: f64,
}

/// Euclidean distance between an estimate and the truth.
pub fn error_2norm(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "estimate has length {} but the truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// A metric value before it is labelled with scenario and method.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub target: String,
    pub metric: &'static str,
    pub value: f64,
    pub se: f64,
}

impl Score {
    fn new(target: &str, metric: &'static str, value: f64, se: f64) -> Self {
        Self {
            target: target.into(),
            metric,
            value,
            se,
        }
    }
}

/// Weighted marginal quantile of every coordinate in `coords`.
pub fn marginal_quantiles(ws: &WeightedSampleSet, coords: &[usize], prob: f64) -> Result<Vec<f64>> {
    coords.iter().map(|&k| weighted_quantile(ws, k, prob)).collect()
}

/// Point-estimate errors of one target.
pub fn point_errors(ws: &WeightedSampleSet, target: &TargetTruth) -> Result<Vec<Score>> {
    let mean = ws.mean();
    let est: Vec<f64> = target.coords.iter().map(|&k| mean[k]).collect();
    let name = &target.name;
    Ok(vec![
        Score::new(name, "err_mean", error_2norm(&est, &target.mean)?, f64::NAN),
        Score::new(name, "err_q025", error_2norm(&marginal_quantiles(ws, &target.coords, 0.025)?, &target.q025)?, f64::NAN),
        Score::new(name, "err_q975", error_2norm(&marginal_quantiles(ws, &target.coords, 0.975)?, &target.q975)?, f64::NAN),
    ])
}

/// Weighted KDE of one target's coordinates.
pub fn target_kde(ws: &WeightedSampleSet, target: &TargetTruth, bandwidth: Option<&Vec<f64>>) -> Result<WeightedKde> {
    let bw = match bandwidth {
        Some(h) => Bandwidth::Fixed(h.clone()),
        None => Bandwidth::Silverman,
    };
    WeightedKde::from_weighted(ws, &target.coords, &bw)
}

/// `KL(truth || kde)` on one target, or the cross entropy when the truth has
/// no density.
pub fn density_score(kde: &WeightedKde, truth: &Truth, target: &TargetTruth) -> Result<Score> {
    let draws = truth.draws.select_columns(&target.coords)?;
    let log_q = |x: &[f64]| kde.log_density(x);
    let (metric, ce) = match &target.density {
        TruthDensity::Entropy(h) => ("kl", kl_divergence(&draws, log_q, TruthEntropy::Exact(*h))?),
        TruthDensity::LogDensity(f) => {
            let f = f.as_ref();
            ("kl", kl_divergence(&draws, log_q, TruthEntropy::LogDensity(&f))?)
        }
        TruthDensity::Unknown => ("cross_entropy", cross_entropy(&draws, log_q)?),
    };
    Ok(Score::new(&target.name, metric, ce.value, ce.se))
}

/// ESS for every method; `k^` only for importance-weighted ones.
pub fn weight_scores(ws: &WeightedSampleSet, weighted: bool) -> Vec<Score> {
    if weighted {
        let report = diagnose(ws, &GpdOptions::default());
        vec![
            Score::new("all", "ess", report.ess, f64::NAN),
            Score::new("all", "khat", report.khat, f64::NAN),
        ]
    } else {
        vec![Score::new("all", "ess", ws.ess(), f64::NAN)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_2norm_examples() {
        assert_eq!(error_2norm(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(error_2norm(&[3.0, 0.0], &[0.0, 4.0]).unwrap(), 5.0);
        assert!(error_2norm(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn metric_vocabulary_is_unique() {
        let mut v = METRICS.to_vec();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), METRICS.len());
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamDraws;

/// Monte Carlo estimate with its standard error. `infinite` marks a truth
/// draw where the scored density is zero, in which case `value` is `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropy {
    pub value: f64,
    pub se: f64,
    pub infinite: bool,
    pub n: usize,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn from_terms(terms: &[f64]) -> CrossEntropy {
    if terms.iter().any(|t| *t == f64::INFINITY) {
        return CrossEntropy {
            value: f64::INFINITY,
            se: f64::NAN,
            infinite: true,
            n: terms.len(),
        };
    }
    let (value, se) = mean_se(terms);
    CrossEntropy {
        value,
        se,
        infinite: false,
        n: terms.len(),
    }
}

fn log_q_at<F: Fn(&[f64]) -> f64 + Sync>(truth: &ParamDraws, log_q: &F) -> Result<Vec<f64>> {
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("need at least two truth draws".into()));
    }
    let vals: Vec<f64> = (0..truth.len())
        .into_par_iter()
        .with_min_len(256)
        .map(|h| log_q(truth.row(h)))
        .collect();
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::ContractViolation("density returned NaN at a truth draw".into()));
    }
    Ok(vals)
}

/// `H(pi, q) = -E_pi[log q]` from draws of `pi`.
pub fn cross_entropy<F: Fn(&[f64]) -> f64 + Sync>(truth: &ParamDraws, log_q: F) -> Result<CrossEntropy> {
    let vals = log_q_at(truth, &log_q)?;
    let terms: Vec<f64> = vals.iter().map(|v| -v).collect();
    Ok(from_terms(&terms))
}

/// Entropy of the truth, known exactly or estimated from the same draws.
pub enum TruthEntropy<'a> {
    Exact(f64),
    /// Log density of the truth; `log pi - log q` is averaged per draw so the
    /// standard error accounts for the pairing.
    LogDensity(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

/// `KL(pi || q) = H(pi, q) - H(pi)`.
pub fn kl_divergence<F: Fn(&[f64]) -> f64 + Sync>(
    truth: &ParamDraws,
    log_q: F,
    entropy: TruthEntropy<'_>,
) -> Result<CrossEntropy> {
    let vals = log_q_at(truth, &log_q)?;
    match entropy {
        TruthEntropy::Exact(h) => {
            let terms: Vec<f64> = vals.iter().map(|v| -v).collect();
            let mut ce = from_terms(&terms);
            ce.value -= h;
            Ok(ce)
        }
        TruthEntropy::LogDensity(log_pi) => {
            let terms: Vec<f64> = vals
                .par_iter()
                .enumerate()
                .map(|(h, v)| {
                    if *v == f64::NEG_INFINITY {
                        f64::INFINITY
                    } else {
                        log_pi(truth.row(h)) - v
                    }
                })
                .collect();
            Ok(from_terms(&terms))
        }
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("need two equal-length series of length at least 2".into()));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let (mx, _) = mean_se(&rx);
    let (my, _) = mean_se(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

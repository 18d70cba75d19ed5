use serde::{Deserialize, Serialize};

use crate::logspace::log_sum_exp;

/// How many of the largest weights enter the tail fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// `ceil(min(0.2 N, 3 sqrt(N)))` largest weights, measured above the next largest.
    #[default]
    Standard,
    /// Every weight, measured from zero. Suited to samples that are themselves
    /// generalised Pareto.
    Whole,
    /// A fixed fraction of the weights.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdOptions {
    pub tail: TailRule,
    /// Quadrature points for the profile-likelihood estimator.
    pub grid_points: usize,
    /// Shrink toward 0.5 with a weakly informative prior worth ten observations.
    pub weakly_informative: bool,
}

impl Default for GpdOptions {
    fn default() -> Self {
        Self {
            tail: TailRule::Standard,
            grid_points: 30,
            weakly_informative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    /// Shape estimate, NaN when no fit was possible.
    pub khat: f64,
    pub sigma_hat: f64,
    pub tail_count: usize,
    pub threshold: f64,
    pub fitted: bool,
}

impl GpdFit {
    fn none(tail_count: usize, threshold: f64) -> Self {
        Self {
            khat: f64::NAN,
            sigma_hat: f64::NAN,
            tail_count,
            threshold,
            fitted: false,
        }
    }
}

pub const MIN_SAMPLE: usize = 25;
pub const MIN_TAIL: usize = 5;

/// Fit a generalised Pareto distribution to the largest importance weights
/// (given on the log scale) with the Zhang-Stephens profile-likelihood
/// quadrature estimator.
pub fn fit_gpd_khat(log_weights: &[f64], options: &GpdOptions) -> GpdFit {
    let finite: Vec<f64> = log_weights.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    if n < MIN_SAMPLE {
        return GpdFit::none(0, f64::NAN);
    }
    let top = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = finite.iter().map(|v| (v - top).exp()).collect();
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite"));

    let (tail, threshold): (Vec<f64>, f64) = match options.tail {
        TailRule::Whole => (w.clone(), 0.0),
        rule => {
            let m = match rule {
                TailRule::Fraction(f) => (f * n as f64).ceil() as usize,
                _ => (0.2 * n as f64).min(3.0 * (n as f64).sqrt()).ceil() as usize,
            }
            .min(n - 1);
            let threshold = w[n - m - 1];
            (w[n - m..].iter().map(|x| x - threshold).collect(), threshold)
        }
    };
    let m = tail.len();
    if m < MIN_TAIL || tail.iter().all(|&x| x <= 0.0) || tail[m - 1] - tail[0] <= 0.0 {
        return GpdFit::none(m, threshold);
    }
    match zhang_stephens(&tail, options.grid_points.max(1)) {
        Some((mut k, sigma)) => {
            if options.weakly_informative {
                let a = 10.0;
                let nf = m as f64;
                k = k * nf / (nf + a) + a * 0.5 / (nf + a);
            }
            GpdFit {
                khat: k,
                sigma_hat: sigma,
                tail_count: m,
                threshold,
                fitted: true,
            }
        }
        None => GpdFit::none(m, threshold),
    }
}

/// Returns `(k, sigma)` for exceedances `x` sorted ascending, with `k > 0`
/// meaning a heavy tail.
fn zhang_stephens(x: &[f64], grid: usize) -> Option<(f64, f64)> {
    let n = x.len();
    let nf = n as f64;
    let prior = 3.0;
    let quartile = x[((nf / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let x_max = x[n - 1];
    if !(quartile > 0.0) {
        return None;
    }
    let theta: Vec<f64> = (1..=grid)
        .map(|j| 1.0 / x_max + (1.0 - (grid as f64 / (j as f64 - 0.5)).sqrt()) / prior / quartile)
        .collect();
    let profile = |t: f64| -> f64 {
        let k = -x.iter().map(|&v| (-t * v).ln_1p()).sum::<f64>() / nf;
        nf * ((t / k).ln() + k - 1.0)
    };
    let loglik: Vec<f64> = theta.iter().map(|&t| profile(t)).collect();
    let finite: Vec<(f64, f64)> = theta
        .iter()
        .zip(&loglik)
        .filter(|(_, l)| l.is_finite())
        .map(|(&t, &l)| (t, l))
        .collect();
    if finite.is_empty() {
        return None;
    }
    let ls: Vec<f64> = finite.iter().map(|p| p.1).collect();
    let norm = log_sum_exp(&ls);
    let theta_hat: f64 = finite.iter().map(|(t, l)| t * (l - norm).exp()).sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / nf;
    let sigma = -k / theta_hat;
    (k.is_finite() && sigma > 0.0).then_some((k, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_tails_give_no_fit() {
        let fit = fit_gpd_khat(&[0.0; 100], &GpdOptions::default());
        assert!(!fit.fitted && fit.khat.is_nan());
        let fit = fit_gpd_khat(&[0.0; 10], &GpdOptions::default());
        assert!(!fit.fitted);
    }

    #[test]
    fn exponential_tail_is_light() {
        // Quantiles of Exp(1) on a fine grid give a deterministic sample.
        let n = 10_000;
        let lw: Vec<f64> = (0..n)
            .map(|i| (-(1.0 - (i as f64 + 0.5) / n as f64).ln()).ln())
            .collect();
        let opts = GpdOptions {
            tail: TailRule::Whole,
            ..Default::default()
        };
        let fit = fit_gpd_khat(&lw, &opts);
        assert!(fit.khat.abs() < 0.05, "{fit:?}");
        // Weights are rescaled so the largest is one.
        let largest = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
        assert!((fit.sigma_hat * largest - 1.0).abs() < 0.05);
    }
}

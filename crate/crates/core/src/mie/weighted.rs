use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DrawSource, ParamDraws};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Mie1,
    Mie2,
    Mie3,
    Lemie1,
    Lemie2,
    Lemie3,
    /// Unweighted draws: naive pooling, consensus and density-product output,
    /// or draws from the true posterior.
    Naive,
    Cmc1,
    Cmc2,
    Ndpe,
    Sdpe,
    Vanilla,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mie1 => "mie1",
            Scheme::Mie2 => "mie2",
            Scheme::Mie3 => "mie3",
            Scheme::Lemie1 => "lemie1",
            Scheme::Lemie2 => "lemie2",
            Scheme::Lemie3 => "lemie3",
            Scheme::Naive => "naive",
            Scheme::Cmc1 => "cmc1",
            Scheme::Cmc2 => "cmc2",
            Scheme::Ndpe => "ndpe",
            Scheme::Sdpe => "sdpe",
            Scheme::Vanilla => "vanilla",
        }
    }

    pub(crate) fn with_laplace(variant: u8, laplace: bool) -> Self {
        match (variant, laplace) {
            (1, false) => Scheme::Mie1,
            (2, false) => Scheme::Mie2,
            (3, false) => Scheme::Mie3,
            (1, true) => Scheme::Lemie1,
            (2, true) => Scheme::Lemie2,
            _ => Scheme::Lemie3,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Importance-weighted draws referring back to the pooled draw table.
#[derive(Debug, Clone)]
pub struct WeightedSampleSet {
    pub scheme: Scheme,
    pub draws: Arc<ParamDraws>,
    /// Pooled column of each weighted draw. Repeats are possible after resampling.
    pub columns: Vec<usize>,
    pub sources: Vec<DrawSource>,
    /// Unnormalised log weights (finite or `-inf`).
    pub log_weights: Vec<f64>,
    /// Final normalised weights, summing to one.
    pub norm_weights: Vec<f64>,
    pub component_sources: Vec<DrawSource>,
    pub component_weights: Vec<f64>,
    pub log_chat: Vec<f64>,
}

impl WeightedSampleSet {
    /// Equal weights on every draw.
    pub fn uniform(scheme: Scheme, draws: Arc<ParamDraws>) -> Self {
        let n = draws.len();
        let source = draws.source();
        WeightedSampleSet {
            scheme,
            draws,
            columns: (0..n).collect(),
            sources: vec![source; n],
            log_weights: vec![0.0; n],
            norm_weights: vec![1.0 / n as f64; n],
            component_sources: vec![source],
            component_weights: vec![1.0],
            log_chat: vec![0.0],
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws.dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.draws.row(self.columns[i])
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.columns.iter().map(|&c| self.draws.row(c)[k]).collect()
    }

    /// `sum_h w_h f(theta_h)` with the normalised weights.
    pub fn expectation<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Vec<f64> {
        let mut acc: Option<Vec<f64>> = None;
        for (i, &w) in self.norm_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let v = f(self.row(i));
            match acc.as_mut() {
                None => acc = Some(v.into_iter().map(|x| w * x).collect()),
                Some(a) => {
                    for (s, x) in a.iter_mut().zip(v) {
                        *s += w * x;
                    }
                }
            }
        }
        acc.unwrap_or_else(|| f(self.row(0)).iter().map(|_| 0.0).collect())
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for (i, &w) in self.norm_weights.iter().enumerate() {
            for (a, x) in m.iter_mut().zip(self.row(i)) {
                *a += w * x;
            }
        }
        m
    }

    /// Effective sample size `1 / sum w^2` of the final normalised weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.norm_weights.iter().map(|w| w * w).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Box of side `bandwidth[k]` centred on each draw.
    Rect,
    /// Normal with standard deviation `bandwidth[k]` per coordinate.
    Normal,
}

/// Weighted kernel density `sum_h w_h K(theta_h, point)`.
pub fn weighted_density(ws: &WeightedSampleSet, point: &[f64], kernel: Kernel, bandwidth: &[f64]) -> Result<f64> {
    let d = ws.dim();
    if point.len() != d || bandwidth.len() != d {
        return Err(Error::InvalidArgument("point and bandwidth must match the draw dimension".into()));
    }
    if bandwidth.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    let mut total = 0.0;
    match kernel {
        Kernel::Rect => {
            let volume: f64 = bandwidth.iter().product();
            for (i, &w) in ws.norm_weights.iter().enumerate() {
                let inside = ws
                    .row(i)
                    .iter()
                    .zip(point)
                    .zip(bandwidth)
                    .all(|((x, p), b)| (x - p).abs() < 0.5 * b);
                if inside {
                    total += w;
                }
            }
            total /= volume;
        }
        Kernel::Normal => {
            let log_norm: f64 = bandwidth
                .iter()
                .map(|b| -0.5 * (2.0 * std::f64::consts::PI).ln() - b.ln())
                .sum();
            for (i, &w) in ws.norm_weights.iter().enumerate() {
                let q: f64 = ws
                    .row(i)
                    .iter()
                    .zip(point)
                    .zip(bandwidth)
                    .map(|((x, p), b)| ((x - p) / b).powi(2))
                    .sum();
                total += w * (log_norm - 0.5 * q).exp();
            }
        }
    }
    Ok(total)
}

/// Smallest value of coordinate `k` whose cumulative normalised weight reaches `prob`.
pub fn weighted_quantile(ws: &WeightedSampleSet, k: usize, prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile probability {prob} outside (0, 1)")));
    }
    if k >= ws.dim() {
        return Err(Error::InvalidArgument(format!("coordinate {k} out of range")));
    }
    let values = ws.coordinate(k);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &order {
        cum += ws.norm_weights[i];
        if cum >= prob - 1e-12 {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("non-empty set")])
}

#[cfg(test)]
pub(crate) fn uniform_set(values: &[f64], weights: &[f64]) -> WeightedSampleSet {
    let draws = ParamDraws::new(1, values.to_vec(), DrawSource::Pooled).unwrap();
    WeightedSampleSet {
        scheme: Scheme::Mie2,
        draws: Arc::new(draws),
        columns: (0..values.len()).collect(),
        sources: vec![DrawSource::Pooled; values.len()],
        log_weights: weights.iter().map(|w| w.ln()).collect(),
        norm_weights: weights.to_vec(),
        component_sources: vec![],
        component_weights: vec![],
        log_chat: vec![],
    }
}

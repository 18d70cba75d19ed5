use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weighted::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Extra reach, in bandwidths, searched beyond the nearest draw in one dimension.
const WINDOW: f64 = 10.0;

/// Mass of the smallest weights dropped before building a density.
const PRUNE_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Per-coordinate rule of thumb with the effective sample size.
    Silverman,
    /// Kernel standard deviation per coordinate.
    Fixed(Vec<f64>),
}

/// Per-coordinate `sigma_k * (4 / ((d + 2) n_eff))^(1 / (d + 4))`, where `sigma_k`
/// is the weighted standard deviation and `n_eff = 1 / sum w^2`. A coordinate
/// whose weighted spread vanishes falls back to the unweighted spread.
pub fn silverman_bandwidth(values: &[f64], dim: usize, weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let n_eff = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    let factor = (4.0 / ((dim as f64 + 2.0) * n_eff)).powf(1.0 / (dim as f64 + 4.0));
    let n = weights.len() as f64;
    (0..dim)
        .map(|k| {
            let col = values.iter().skip(k).step_by(dim);
            let (mut m, mut mu) = (0.0, 0.0);
            for (x, w) in col.clone().zip(weights) {
                m += w * x;
                mu += x;
            }
            m /= total;
            mu /= n;
            let (mut v, mut vu) = (0.0, 0.0);
            for (x, w) in col.zip(weights) {
                v += w * (x - m).powi(2);
                vu += (x - mu).powi(2);
            }
            let sd = (v / total).sqrt();
            let scale = 1e-12 * (1.0 + m.abs());
            let sd = if sd > scale {
                sd
            } else {
                let sdu = (vu / (n - 1.0).max(1.0)).sqrt();
                if sdu > scale { sdu } else { 1e-8 * (1.0 + m.abs()) }
            };
            sd * factor
        })
        .collect()
}

/// Weighted product-normal kernel density estimate.
#[derive(Debug, Clone)]
pub struct WeightedKde {
    dim: usize,
    points: Vec<f64>,
    log_weights: Vec<f64>,
    bandwidth: Vec<f64>,
    log_norm: f64,
}

impl WeightedKde {
    /// Build from row-major `values` with non-negative `weights`.
    pub fn new(values: &[f64], dim: usize, weights: &[f64], bandwidth: &Bandwidth) -> Result<Self> {
        if dim == 0 || values.len() != dim * weights.len() || weights.is_empty() {
            return Err(Error::InvalidArgument("values and weights do not match".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("kernel weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("kernel weights sum to zero".into()));
        }
        let h = match bandwidth {
            Bandwidth::Silverman => silverman_bandwidth(values, dim, weights),
            Bandwidth::Fixed(h) => {
                if h.len() != dim || h.iter().any(|&b| !(b > 0.0)) {
                    return Err(Error::InvalidArgument("bandwidth must be positive per coordinate".into()));
                }
                h.clone()
            }
        };
        // Drop the lightest draws carrying a negligible share of the mass.
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
        let mut cum = 0.0;
        let mut keep_from = 0;
        for (i, &o) in order.iter().enumerate() {
            cum += weights[o] / total;
            if cum > PRUNE_MASS {
                keep_from = i;
                break;
            }
        }
        let mut kept: Vec<usize> = order[keep_from..].to_vec();
        if dim == 1 {
            kept.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        } else {
            kept.sort_unstable();
        }
        let mut points = Vec::with_capacity(kept.len() * dim);
        let mut log_weights = Vec::with_capacity(kept.len());
        for &i in &kept {
            points.extend_from_slice(&values[i * dim..(i + 1) * dim]);
            log_weights.push((weights[i] / total).ln());
        }
        let log_norm = -0.5 * dim as f64 * LN_2PI - h.iter().map(|b| b.ln()).sum::<f64>();
        Ok(Self {
            dim,
            points,
            log_weights,
            bandwidth: h,
            log_norm,
        })
    }

    /// KDE of selected coordinates of a weighted sample set.
    pub fn from_weighted(ws: &WeightedSampleSet, coords: &[usize], bandwidth: &Bandwidth) -> Result<Self> {
        if coords.iter().any(|&k| k >= ws.dim()) {
            return Err(Error::InvalidArgument("coordinate out of range".into()));
        }
        let mut values = Vec::with_capacity(ws.len() * coords.len());
        for i in 0..ws.len() {
            let row = ws.row(i);
            values.extend(coords.iter().map(|&k| row[k]));
        }
        Self::new(&values, coords.len(), &ws.norm_weights, bandwidth)
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    fn log_term(&self, i: usize, x: &[f64]) -> f64 {
        let p = &self.points[i * self.dim..(i + 1) * self.dim];
        let q: f64 = p
            .iter()
            .zip(x)
            .zip(&self.bandwidth)
            .map(|((a, b), h)| ((a - b) / h).powi(2))
            .sum();
        self.log_weights[i] - 0.5 * q
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let terms: Vec<f64> = if self.dim == 1 {
            // Draws are sorted. Anything further than the nearest draw plus
            // WINDOW bandwidths is down by at least exp(-WINDOW^2 / 2) relative
            // to that nearest draw.
            let h = self.bandwidth[0];
            let at = self.points.partition_point(|&p| p < x[0]);
            let mut nearest = f64::INFINITY;
            if at < self.points.len() {
                nearest = self.points[at] - x[0];
            }
            if at > 0 {
                nearest = nearest.min(x[0] - self.points[at - 1]);
            }
            let reach = nearest + WINDOW * h;
            let lo = self.points.partition_point(|&p| p < x[0] - reach);
            let hi = self.points.partition_point(|&p| p <= x[0] + reach);
            (lo..hi).map(|i| self.log_term(i, x)).collect()
        } else {
            (0..self.len()).map(|i| self.log_term(i, x)).collect()
        };
        self.log_norm + log_sum_exp(&terms)
    }

    /// Log density at every row of `queries` (row-major), evaluated in parallel.
    pub fn log_density_many(&self, queries: &[f64]) -> Vec<f64> {
        queries
            .par_chunks(self.dim)
            .map(|q| self.log_density(q))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_kde_is_its_kernel() {
        let kde = WeightedKde::new(&[0.5, -1.0], 2, &[3.0], &Bandwidth::Fixed(vec![0.2, 0.4])).unwrap();
        let x = [0.6, -0.5];
        let direct = -LN_2PI - (0.2f64 * 0.4).ln() - 0.5 * ((0.1f64 / 0.2).powi(2) + (0.5f64 / 0.4).powi(2));
        assert!((kde.log_density(&x) - direct).abs() < 1e-12);
    }

    #[test]
    fn windowed_one_dimensional_matches_brute_force() {
        let vals: Vec<f64> = (0..500).map(|i| ((i * 37) % 500) as f64 / 50.0).collect();
        let w: Vec<f64> = (0..500).map(|i| 1.0 + (i % 7) as f64).collect();
        let kde = WeightedKde::new(&vals, 1, &w, &Bandwidth::Fixed(vec![0.3])).unwrap();
        let total: f64 = w.iter().sum();
        for x in [-3.0, 0.0, 4.4, 9.9, 30.0] {
            let brute: f64 = vals
                .iter()
                .zip(&w)
                .map(|(v, wi)| wi / total * (-0.5 * ((v - x) / 0.3f64).powi(2)).exp() / (0.3 * (2.0 * std::f64::consts::PI).sqrt()))
                .sum();
            let got = kde.log_density(&[x]);
            if brute > 0.0 {
                assert!((got - brute.ln()).abs() < 1e-9, "x={x}: {got} vs {}", brute.ln());
            } else {
                assert!(got.is_finite());
            }
        }
    }

    #[test]
    fn silverman_matches_formula_for_uniform_weights() {
        let vals: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = silverman_bandwidth(&vals, 1, &[1.0; 100]);
        let sd = (vals.iter().map(|v| (v - 49.5f64).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!((h[0] - sd * (4.0f64 / 300.0).powf(0.2)).abs() < 1e-12);
        // collapsed weights fall back to the unweighted spread
        let mut w = vec![0.0; 100];
        w[3] = 1.0;
        assert!(silverman_bandwidth(&vals, 1, &w)[0] > 0.0);
    }
}

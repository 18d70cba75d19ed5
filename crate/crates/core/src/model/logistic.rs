use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use super::{LogPrior, PartLikelihood, PriorFamily};
use crate::error::{Error, Result};
use crate::logspace::softplus;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Binomial logistic observation: `successes ~ Bin(trials, logistic(x . theta))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRow {
    pub x: Vec<f64>,
    pub trials: u32,
    pub successes: u32,
}

/// Collapse individual `(covariates, 0/1 outcome)` rows into one binomial row per
/// distinct covariate vector. Rows are returned in lexicographic covariate order.
pub fn group_logistic_rows(rows: &[(Vec<f64>, u8)]) -> Result<Vec<LogisticRow>> {
    let mut groups: BTreeMap<Vec<u64>, (Vec<f64>, u32, u32)> = BTreeMap::new();
    for (x, y) in rows {
        if *y > 1 {
            return Err(Error::InvalidArgument(format!("logistic outcome {y} is not 0 or 1")));
        }
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let e = groups.entry(key).or_insert_with(|| (x.clone(), 0, 0));
        e.1 += 1;
        e.2 += *y as u32;
    }
    Ok(groups
        .into_values()
        .map(|(x, trials, successes)| LogisticRow { x, trials, successes })
        .collect())
}

/// Binomial logistic likelihood over grouped rows. Includes the binomial coefficients.
#[derive(Debug, Clone)]
pub struct LogisticPart {
    dim: usize,
    rows: Vec<LogisticRow>,
    log_binom: f64,
}

impl LogisticPart {
    pub fn new(dim: usize, rows: Vec<LogisticRow>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.x.len() != dim || r.successes > r.trials) {
            return Err(Error::InvalidArgument(format!(
                "invalid logistic row {r:?} for dimension {dim}"
            )));
        }
        let log_binom = rows
            .iter()
            .map(|r| ln_binomial(r.trials as u64, r.successes as u64))
            .sum();
        Ok(Self { dim, rows, log_binom })
    }

    pub fn rows(&self) -> &[LogisticRow] {
        &self.rows
    }
}

impl PartLikelihood for LogisticPart {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_lik(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut s = self.log_binom;
        for r in &self.rows {
            let eta: f64 = r.x.iter().zip(theta).map(|(a, b)| a * b).sum();
            s += r.successes as f64 * eta - r.trials as f64 * softplus(eta);
        }
        s
    }

    fn size(&self) -> usize {
        self.rows.iter().map(|r| r.trials as usize).sum()
    }
}

/// Independent `N(0, scale^2)` prior on every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoNormalPrior {
    pub dim: usize,
    pub scale: f64,
}

impl IsoNormalPrior {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "isotropic normal prior needs dim > 0 and a positive scale, got ({dim}, {scale})"
            )));
        }
        Ok(Self { dim, scale })
    }
}

impl LogPrior for IsoNormalPrior {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let ss: f64 = theta.iter().map(|v| v * v).sum();
        let d = self.dim as f64;
        -0.5 * d * (LN_2PI + 2.0 * self.scale.ln()) - 0.5 * ss / (self.scale * self.scale)
    }

    fn family(&self) -> PriorFamily {
        PriorFamily::MvnIid
    }
}

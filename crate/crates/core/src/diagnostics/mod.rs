//! Weight diagnostics and the accuracy scores used to compare methods.

mod gpd;
mod score;

pub use gpd::{fit_gpd_khat, GpdFit, GpdOptions, TailRule};
pub use score::{cross_entropy, kl_divergence, spearman, CrossEntropy, TruthEntropy};

use serde::{Deserialize, Serialize};

use crate::mie::{Scheme, WeightedSampleSet};

pub const KHAT_GOOD: f64 = 0.5;
pub const KHAT_UNRELIABLE: f64 = 0.7;

/// `1 / sum w^2` after normalising `weights` to sum to one. Zero if every weight is zero.
pub fn ess_from_weights(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    1.0 / weights.iter().map(|w| (w / total).powi(2)).sum::<f64>()
}

/// Effective sample size of a weighted set. For MIE1 the final weights are the
/// within-block weights scaled by `N_j / N`, so the same formula applies.
pub fn ess(ws: &WeightedSampleSet) -> f64 {
    ess_from_weights(&ws.norm_weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticFlag {
    KhatAboveHalf,
    KhatUnreliable,
    NoTailFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub scheme: Scheme,
    pub ess: f64,
    pub khat: f64,
    pub flags: Vec<DiagnosticFlag>,
}

/// ESS and the tail-shape diagnostic of the positive final weights.
pub fn diagnose(ws: &WeightedSampleSet, options: &GpdOptions) -> DiagnosticsReport {
    let log_w: Vec<f64> = ws.norm_weights.iter().filter(|&&w| w > 0.0).map(|w| w.ln()).collect();
    let fit = fit_gpd_khat(&log_w, options);
    let mut flags = Vec::new();
    if !fit.fitted {
        flags.push(DiagnosticFlag::NoTailFit);
    } else {
        if fit.khat > KHAT_GOOD {
            flags.push(DiagnosticFlag::KhatAboveHalf);
        }
        if fit.khat > KHAT_UNRELIABLE {
            flags.push(DiagnosticFlag::KhatUnreliable);
        }
    }
    DiagnosticsReport {
        scheme: ws.scheme,
        ess: ess(ws),
        khat: fit.khat,
        flags,
    }
}

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::problem::{ComponentDensity, ImportanceProblem};
use super::weighted::{Scheme, WeightedSampleSet};
use crate::error::{Error, Result};
use crate::logspace::{log_mean_exp, log_sum_exp, normalise};

/// Lower bound applied to estimated KL divergences before inversion.
pub const KL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalisation {
    #[default]
    SelfNormalised,
    /// `(1/N) sum w f`, relying on the estimated normalising constants.
    Unnormalised,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mie2Options {
    /// Mixture weights per active component; defaults to `N_j / N`.
    pub q: Option<Vec<f64>>,
    pub normalisation: Normalisation,
}

/// A point estimate together with the weights that produced it.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub weights: WeightedSampleSet,
}

/// Estimated `KL(proposal || target)` for one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlHat {
    pub raw: f64,
    /// `max(raw, KL_FLOOR)`.
    pub value: f64,
    pub floored: bool,
}

/// Log importance weights `log pi~(theta) - log q_c(theta)` over component `c`'s
/// own draws. For a local posterior the prior and part `c`'s likelihood cancel,
/// leaving the sum of the other parts' log-likelihoods.
pub fn snis_log_weights(problem: &ImportanceProblem<'_>, c: usize) -> Vec<f64> {
    let comp = &problem.components()[c];
    let cols = comp.columns.clone();
    match &comp.density {
        ComponentDensity::Local { part } => {
            let ll = problem.loglik();
            let mut acc = vec![0.0; cols.len()];
            for i in (0..ll.num_rows()).filter(|i| i != part) {
                for (a, v) in acc.iter_mut().zip(&ll.row(i)[cols.clone()]) {
                    *a += v;
                }
            }
            acc.iter().map(|&a| if a.is_nan() { f64::NEG_INFINITY } else { a }).collect()
        }
        ComponentDensity::Normalised { log_density, .. } => {
            let target = problem.log_target();
            cols.map(|k| {
                if target[k] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    target[k] - log_density[k]
                }
            })
            .collect()
        }
    }
}

fn log_chat_of(problem: &ImportanceProblem<'_>, c: usize, log_w: &[f64]) -> Result<f64> {
    if log_w.is_empty() {
        return Err(Error::EmptyComponent(problem.components()[c].source.to_string()));
    }
    Ok(log_mean_exp(log_w))
}

/// `log c^_j`: log of the mean importance weight over each component's own draws.
pub fn chat_estimates(problem: &ImportanceProblem<'_>) -> Result<Vec<f64>> {
    (0..problem.components().len())
        .map(|c| log_chat_of(problem, c, &snis_log_weights(problem, c)))
        .collect()
}

fn kl_from_weights(problem: &ImportanceProblem<'_>, c: usize, log_w: &[f64], log_chat: f64) -> KlHat {
    let comp = &problem.components()[c];
    let n = log_w.len() as f64;
    let raw = match &comp.density {
        ComponentDensity::Normalised { entropy: Some(h), .. } => {
            let target = problem.log_target();
            let mean_target = comp.columns.clone().map(|k| target[k]).sum::<f64>() / n;
            -mean_target + log_chat - h
        }
        _ => -log_w.iter().sum::<f64>() / n + log_chat,
    };
    let raw = if raw.is_nan() { f64::INFINITY } else { raw };
    let floored = raw < KL_FLOOR;
    if floored {
        log::info!("estimated KL divergence {raw:e} for component {} floored at {KL_FLOOR:e}", comp.source);
    }
    KlHat {
        raw,
        value: raw.max(KL_FLOOR),
        floored,
    }
}

/// `D^_KL(q_c || pi) = -mean(log w) + log c^`; for a normalised proposal with a
/// known entropy `H`, `-mean(log pi~) + log c^ - H`.
pub fn kl_hat(problem: &ImportanceProblem<'_>, c: usize) -> Result<KlHat> {
    let log_w = snis_log_weights(problem, c);
    let log_chat = log_chat_of(problem, c, &log_w)?;
    Ok(kl_from_weights(problem, c, &log_w, log_chat))
}

fn scheme_for(problem: &ImportanceProblem<'_>, variant: u8) -> Scheme {
    Scheme::with_laplace(variant, problem.has_normalised())
}

fn weighted_sum<F: Fn(&[f64]) -> Vec<f64>>(
    problem: &ImportanceProblem<'_>,
    cols: &[usize],
    weights: &[f64],
    f: &F,
) -> Vec<f64> {
    let draws = problem.draws();
    let mut acc: Option<Vec<f64>> = None;
    for (&k, &w) in cols.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let v = f(draws.row(k));
        match acc.as_mut() {
            None => acc = Some(v.into_iter().map(|x| w * x).collect()),
            Some(a) => {
                for (s, x) in a.iter_mut().zip(v) {
                    *s += w * x;
                }
            }
        }
    }
    acc.unwrap_or_else(|| vec![0.0; f(draws.row(cols[0])).len()])
}

fn sources_of(problem: &ImportanceProblem<'_>, cols: &[usize]) -> Vec<crate::model::DrawSource> {
    let mut ranges: Vec<(usize, usize, crate::model::DrawSource)> = problem
        .components()
        .iter()
        .map(|c| (c.columns.start, c.columns.end, c.source))
        .collect();
    ranges.sort_by_key(|r| r.0);
    cols.iter()
        .map(|&k| {
            let i = ranges.partition_point(|r| r.0 <= k) - 1;
            debug_assert!(k < ranges[i].1);
            ranges[i].2
        })
        .collect()
}

/// MIE1: self-normalised importance sampling within each component, combined
/// with weights `N_j / N`.
pub fn mie1_estimate<F: Fn(&[f64]) -> Vec<f64>>(problem: &ImportanceProblem<'_>, f: F) -> Result<Estimate> {
    let comps = problem.components();
    let total: usize = comps.iter().map(|c| c.len()).sum();
    let mut cols = Vec::with_capacity(total);
    let mut sources = Vec::with_capacity(total);
    let mut log_weights = Vec::with_capacity(total);
    let mut norm_weights = Vec::with_capacity(total);
    let mut q = Vec::with_capacity(comps.len());
    let mut log_chat = Vec::with_capacity(comps.len());
    for (c, comp) in comps.iter().enumerate() {
        let lw = snis_log_weights(problem, c);
        let lc = log_chat_of(problem, c, &lw)?;
        if lc == f64::NEG_INFINITY {
            return Err(Error::DegenerateBlock { block: c });
        }
        let qc = comp.len() as f64 / total as f64;
        norm_weights.extend(normalise(&lw).into_iter().map(|w| qc * w));
        log_weights.extend(lw);
        cols.extend(comp.columns.clone());
        sources.extend(std::iter::repeat_n(comp.source, comp.len()));
        q.push(qc);
        log_chat.push(lc);
    }
    let value = weighted_sum(problem, &cols, &norm_weights, &f);
    Ok(Estimate {
        value,
        weights: WeightedSampleSet {
            scheme: scheme_for(problem, 1),
            draws: problem.draws().clone(),
            columns: cols,
            sources,
            log_weights,
            norm_weights,
            component_sources: comps.iter().map(|c| c.source).collect(),
            component_weights: q,
            log_chat,
        },
    })
}

/// Mixture weights `log pi~ - log psi~` at `cols`, with `psi~ = sum_c q_c c^_c pi~_c`.
fn mixture_log_weights(
    problem: &ImportanceProblem<'_>,
    q: &[f64],
    log_chat: &[f64],
    cols: &[usize],
) -> Result<Vec<f64>> {
    let log_coef: Vec<f64> = q
        .iter()
        .zip(log_chat)
        .map(|(&qc, &lc)| if qc > 0.0 { qc.ln() + lc } else { f64::NEG_INFINITY })
        .collect();
    let denom = problem.log_mixture(&log_coef, cols);
    let target = problem.log_target();
    let mut offenders = Vec::new();
    let lw: Vec<f64> = cols
        .iter()
        .zip(&denom)
        .map(|(&k, &d)| {
            if target[k] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else if d == f64::NEG_INFINITY {
                offenders.push(k);
                f64::NAN
            } else {
                target[k] - d
            }
        })
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Positivity { draws: offenders });
    }
    Ok(lw)
}

fn finish_mixture<F: Fn(&[f64]) -> Vec<f64>>(
    problem: &ImportanceProblem<'_>,
    variant: u8,
    cols: Vec<usize>,
    lw: Vec<f64>,
    q: Vec<f64>,
    log_chat: Vec<f64>,
    normalisation: Normalisation,
    f: &F,
) -> Result<Estimate> {
    if log_sum_exp(&lw) == f64::NEG_INFINITY {
        return Err(Error::DegenerateBlock { block: 0 });
    }
    let norm_weights = normalise(&lw);
    let value = match normalisation {
        Normalisation::SelfNormalised => weighted_sum(problem, &cols, &norm_weights, f),
        Normalisation::Unnormalised => {
            let n = cols.len() as f64;
            let raw: Vec<f64> = lw.iter().map(|&l| l.exp() / n).collect();
            weighted_sum(problem, &cols, &raw, f)
        }
    };
    let sources = sources_of(problem, &cols);
    Ok(Estimate {
        value,
        weights: WeightedSampleSet {
            scheme: scheme_for(problem, variant),
            draws: problem.draws().clone(),
            columns: cols,
            sources,
            log_weights: lw,
            norm_weights,
            component_sources: problem.components().iter().map(|c| c.source).collect(),
            component_weights: q,
            log_chat,
        },
    })
}

/// MIE2: every pooled draw weighted against the mixture of all components.
pub fn mie2_estimate<F: Fn(&[f64]) -> Vec<f64>>(
    problem: &ImportanceProblem<'_>,
    f: F,
    options: &Mie2Options,
) -> Result<Estimate> {
    let comps = problem.components();
    let total: usize = comps.iter().map(|c| c.len()).sum();
    let q = match &options.q {
        Some(q) => {
            if q.len() != comps.len() || q.iter().any(|&v| !(v >= 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(
                    "mixture weights must be non-negative, sum to one and match the components".into(),
                ));
            }
            q.clone()
        }
        None => comps.iter().map(|c| c.len() as f64 / total as f64).collect(),
    };
    let log_chat = chat_estimates(problem)?;
    let cols = problem.active_columns();
    let lw = mixture_log_weights(problem, &q, &log_chat, &cols)?;
    finish_mixture(problem, 2, cols, lw, q, log_chat, options.normalisation, &f)
}

/// MIE3: mixture weights proportional to `1 / D^_KL`, applied to a resample of
/// `min_j N_j` pooled draws, keeping the original `c^_j`.
pub fn mie3_estimate<F: Fn(&[f64]) -> Vec<f64>, R: Rng + ?Sized>(
    problem: &ImportanceProblem<'_>,
    f: F,
    normalisation: Normalisation,
    rng: &mut R,
) -> Result<Estimate> {
    let comps = problem.components();
    let mut log_chat = Vec::with_capacity(comps.len());
    let mut inv_kl = Vec::with_capacity(comps.len());
    for c in 0..comps.len() {
        let lw = snis_log_weights(problem, c);
        let lc = log_chat_of(problem, c, &lw)?;
        let kl = kl_from_weights(problem, c, &lw, lc);
        log_chat.push(lc);
        inv_kl.push(if kl.value.is_finite() { 1.0 / kl.value } else { 0.0 });
    }
    let z: f64 = inv_kl.iter().sum();
    if !(z > 0.0) {
        return Err(Error::DegenerateBlock { block: 0 });
    }
    let q: Vec<f64> = inv_kl.iter().map(|v| v / z).collect();
    let n_bar = comps.iter().map(|c| c.len()).min().expect("at least one component");

    let mut counts = vec![0usize; comps.len()];
    for _ in 0..n_bar {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut pick = comps.len() - 1;
        for (c, &qc) in q.iter().enumerate() {
            cum += qc;
            if u < cum {
                pick = c;
                break;
            }
        }
        while q[pick] == 0.0 {
            pick -= 1;
        }
        counts[pick] += 1;
    }
    let mut cols = Vec::with_capacity(n_bar);
    for (c, comp) in comps.iter().enumerate() {
        let (n_c, len) = (counts[c], comp.len());
        if n_c == 0 {
            continue;
        }
        let start = comp.columns.start;
        if q[c] * n_bar as f64 <= len as f64 && n_c <= len {
            cols.extend(index::sample(rng, len, n_c).into_iter().map(|i| start + i));
        } else {
            cols.extend((0..n_c).map(|_| start + rng.random_range(0..len)));
        }
    }
    let lw = mixture_log_weights(problem, &q, &log_chat, &cols)?;
    finish_mixture(problem, 3, cols, lw, q, log_chat, normalisation, &f)
}

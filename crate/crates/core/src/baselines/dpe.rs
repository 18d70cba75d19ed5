use nalgebra::{DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cmc::consensus_moments;
use crate::error::{Error, Result};
use crate::linalg::Mvn;
use crate::model::{DrawSource, LogPrior, ParamDraws};
use crate::rng::{Streams, StreamRng};

/// Covariance of the NDPE mixture component given the indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NdpeVariance {
    /// `b^2 I`, the kernel variance itself.
    Bandwidth,
    /// `b^2 / M I`, the exact variance of the product of `M` kernels.
    #[default]
    BandwidthOverParts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpeOptions {
    /// Number of retained draws; defaults to the smallest local draw count.
    pub iterations: Option<usize>,
    /// Combine parts pairwise and recurse on the outputs.
    pub recursive: bool,
    pub ndpe_variance: NdpeVariance,
    /// SDPE kernel variance is `b^exponent`.
    pub sdpe_exponent: f64,
    /// Clamp every coordinate of the output into `[lo, hi]`.
    pub clamp: Option<(f64, f64)>,
}

impl Default for DpeOptions {
    fn default() -> Self {
        Self {
            iterations: None,
            recursive: false,
            ndpe_variance: NdpeVariance::default(),
            sdpe_exponent: 1.0,
            clamp: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DpeReport {
    pub method: String,
    pub proposals: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    /// Number of parts combined at each stage, in order.
    pub stage_parts: Vec<usize>,
    pub out_of_support: usize,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct DpeOutput {
    pub draws: ParamDraws,
    pub report: DpeReport,
}

#[derive(Clone, Copy)]
enum Method {
    Ndpe,
    Sdpe,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Ndpe => "ndpe",
            Method::Sdpe => "sdpe",
        }
    }
}

struct Chain {
    draws: ParamDraws,
    proposals: u64,
    accepted: u64,
}

/// Nonparametric density product estimator: Metropolis-within-Gibbs over the
/// mixture indices with bandwidth `b = i^(-1/(p+4))` at iteration `i`.
pub fn ndpe_sample(local: &[&ParamDraws], options: &DpeOptions, streams: &Streams) -> Result<DpeOutput> {
    run(Method::Ndpe, local, options, streams)
}

/// Semiparametric density product estimator: the same sampler over the
/// product of kernel estimates of each local posterior's correction to its
/// normal approximation.
pub fn sdpe_sample(local: &[&ParamDraws], options: &DpeOptions, streams: &Streams) -> Result<DpeOutput> {
    run(Method::Sdpe, local, options, streams)
}

fn run(method: Method, local: &[&ParamDraws], options: &DpeOptions, streams: &Streams) -> Result<DpeOutput> {
    let first = local
        .first()
        .ok_or_else(|| Error::InvalidArgument("no local draw sets".into()))?;
    if local.iter().any(|s| s.dim() != first.dim()) {
        return Err(Error::InvalidArgument("local draw sets have differing dimensions".into()));
    }
    let n_bar = local.iter().map(|s| s.len()).min().expect("non-empty");
    let iterations = options.iterations.unwrap_or(n_bar);
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be positive".into()));
    }
    let mut report = DpeReport {
        method: method.name().into(),
        ..Default::default()
    };

    let mut draws = if options.recursive && local.len() > 2 {
        let mut sets: Vec<ParamDraws> = local.iter().map(|s| (*s).clone()).collect();
        let mut stage = 0;
        while sets.len() > 1 {
            let stage_streams = streams.child(&format!("stage{stage}"));
            let chunks: Vec<Vec<ParamDraws>> = {
                let mut it = sets.into_iter();
                let mut out = Vec::new();
                while let Some(a) = it.next() {
                    match it.next() {
                        Some(b) => out.push(vec![a, b]),
                        None => out.push(vec![a]),
                    }
                }
                out
            };
            report.stage_parts.push(2);
            let results: Vec<Result<Chain>> = chunks
                .into_par_iter()
                .enumerate()
                .map(|(k, group)| {
                    if group.len() == 1 {
                        let d = group.into_iter().next().expect("one set");
                        return Ok(Chain {
                            draws: d,
                            proposals: 0,
                            accepted: 0,
                        });
                    }
                    let refs: Vec<&ParamDraws> = group.iter().collect();
                    let mut rng = stage_streams.stream(k as u64, method.name());
                    chain(method, &refs, iterations, options, &mut rng)
                })
                .collect();
            sets = Vec::with_capacity(results.len());
            for r in results {
                let c = r?;
                report.proposals += c.proposals;
                report.accepted += c.accepted;
                sets.push(c.draws);
            }
            stage += 1;
        }
        sets.pop().expect("one set remains")
    } else {
        report.stage_parts.push(local.len());
        let c = chain(method, local, iterations, options, &mut streams.stream(0, method.name()))?;
        report.proposals = c.proposals;
        report.accepted = c.accepted;
        c.draws
    };
    report.acceptance_rate = if report.proposals == 0 {
        1.0
    } else {
        report.accepted as f64 / report.proposals as f64
    };
    if let Some((lo, hi)) = options.clamp {
        draws = clamp_draws(&draws, lo, hi)?;
        report.clamped = true;
    }
    Ok(DpeOutput {
        draws: draws.with_source(DrawSource::Combined),
        report,
    })
}

/// Count draws with zero prior density.
pub fn count_out_of_support(draws: &ParamDraws, prior: &dyn LogPrior) -> usize {
    draws.rows().filter(|r| prior.log_density(r) == f64::NEG_INFINITY).count()
}

pub fn clamp_draws(draws: &ParamDraws, lo: f64, hi: f64) -> Result<ParamDraws> {
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!("empty clamp interval [{lo}, {hi}]")));
    }
    let values = draws.values().iter().map(|v| v.clamp(lo, hi)).collect();
    ParamDraws::new(draws.dim(), values, draws.source())
}

/// Draws of one part expressed in a rotated basis, with squared norms cached.
struct PartTable {
    rows: Vec<f64>,
    norms: Vec<f64>,
    /// SDPE only: `-log N(theta | m_j, S_j)` per draw.
    penalty: Vec<f64>,
}

fn chain(
    method: Method,
    local: &[&ParamDraws],
    iterations: usize,
    options: &DpeOptions,
    rng: &mut StreamRng,
) -> Result<Chain> {
    let p = local[0].dim();
    let m = local.len();
    let mf = m as f64;
    let n_bar = local.iter().map(|s| s.len()).min().expect("non-empty");

    // SDPE works in the eigenbasis of Sigma*, where every Gaussian it needs is diagonal.
    let (basis, star_vals, mu_star_rot) = match method {
        Method::Ndpe => (None, vec![], vec![]),
        Method::Sdpe => {
            let c = consensus_moments(local)?;
            let eig = SymmetricEigen::new(c.sigma_star.clone());
            let v = eig.eigenvectors;
            let mu = v.transpose() * &c.mu_star;
            let vals: Vec<f64> = eig.eigenvalues.iter().map(|&s| s.max(f64::MIN_POSITIVE)).collect();
            let normals: Vec<Mvn> = c
                .local_means
                .iter()
                .zip(&c.local_covs)
                .map(|(mean, cov)| Mvn::new(mean.clone(), cov.clone()))
                .collect::<Result<_>>()?;
            (Some((v, normals)), vals, mu.as_slice().to_vec())
        }
    };

    let tables: Vec<PartTable> = local
        .iter()
        .enumerate()
        .map(|(j, set)| {
            let mut rows = Vec::with_capacity(n_bar * p);
            let mut norms = Vec::with_capacity(n_bar);
            let mut penalty = Vec::new();
            for h in 0..n_bar {
                let r = set.row(h);
                match &basis {
                    None => rows.extend_from_slice(r),
                    Some((v, normals)) => {
                        let z = v.transpose() * DVector::from_column_slice(r);
                        rows.extend(z.iter());
                        penalty.push(-normals[j].log_density(r));
                    }
                }
                let start = h * p;
                norms.push(rows[start..start + p].iter().map(|x| x * x).sum());
            }
            PartTable { rows, norms, penalty }
        })
        .collect();

    let row = |j: usize, h: usize| &tables[j].rows[h * p..(h + 1) * p];

    let mut idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n_bar)).collect();
    let mut sum = vec![0.0; p];
    let mut sumsq = 0.0;
    let mut penalty = 0.0;
    for (j, &h) in idx.iter().enumerate() {
        for (s, x) in sum.iter_mut().zip(row(j, h)) {
            *s += x;
        }
        sumsq += tables[j].norms[h];
        if !tables[j].penalty.is_empty() {
            penalty += tables[j].penalty[h];
        }
    }

    // log of the unnormalised index weight at kernel variance `v`.
    let log_weight = |sum: &[f64], sumsq: f64, penalty: f64, v: f64| -> f64 {
        let mean_sq: f64 = sum.iter().map(|s| s * s).sum::<f64>() / mf;
        let spread = (sumsq - mean_sq).max(0.0);
        let mut lw = -0.5 * spread / v;
        if let Method::Sdpe = method {
            let shrink = v / mf;
            for k in 0..p {
                let dev = sum[k] / mf - mu_star_rot[k];
                lw -= 0.5 * dev * dev / (star_vals[k] + shrink);
            }
            lw += penalty;
        }
        lw
    };

    let mut out = Vec::with_capacity(iterations * p);
    let mut proposals = 0u64;
    let mut accepted = 0u64;
    let mut cand = vec![0.0; p];
    for i in 1..=iterations {
        let b = (i as f64).powf(-1.0 / (p as f64 + 4.0));
        let v = match method {
            Method::Ndpe => b * b,
            Method::Sdpe => b.powf(options.sdpe_exponent),
        };
        let mut current = log_weight(&sum, sumsq, penalty, v);
        for j in 0..m {
            let h_new = rng.random_range(0..n_bar);
            proposals += 1;
            let h_old = idx[j];
            if h_new == h_old {
                accepted += 1;
                continue;
            }
            for k in 0..p {
                cand[k] = sum[k] - row(j, h_old)[k] + row(j, h_new)[k];
            }
            let cand_sq = sumsq - tables[j].norms[h_old] + tables[j].norms[h_new];
            let cand_pen = if tables[j].penalty.is_empty() {
                penalty
            } else {
                penalty - tables[j].penalty[h_old] + tables[j].penalty[h_new]
            };
            let proposed = log_weight(&cand, cand_sq, cand_pen, v);
            let log_u: f64 = rng.random::<f64>().ln();
            if log_u < proposed - current {
                idx[j] = h_new;
                sum.copy_from_slice(&cand);
                sumsq = cand_sq;
                penalty = cand_pen;
                current = proposed;
                accepted += 1;
            }
        }
        match (&basis, method) {
            (None, _) => {
                let var = match options.ndpe_variance {
                    NdpeVariance::Bandwidth => v,
                    NdpeVariance::BandwidthOverParts => v / mf,
                };
                let sd = var.sqrt();
                for s in &sum {
                    let z: f64 = rng.sample(StandardNormal);
                    out.push(s / mf + sd * z);
                }
            }
            (Some((basis, _)), _) => {
                let c = mf / v;
                let mut z = DVector::zeros(p);
                for k in 0..p {
                    let prec = c + 1.0 / star_vals[k];
                    let mean = (c * sum[k] / mf + mu_star_rot[k] / star_vals[k]) / prec;
                    let e: f64 = rng.sample(StandardNormal);
                    z[k] = mean + e / prec.sqrt();
                }
                out.extend((basis * z).iter());
            }
        }
    }
    Ok(Chain {
        draws: ParamDraws::new(p, out, DrawSource::Combined)?,
        proposals,
        accepted,
    })
}

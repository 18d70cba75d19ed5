//! Config-driven simulation studies: simulate data, split it, run every
//! requested estimator and score it against the full-data posterior.

mod config;
mod metrics;
mod output;
mod scenario;
mod truth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

pub use config::{
    lemie_variants, BetaDesign, LaplaceConfig, LogisticDesign, Method, ModelConfig, PartitionKind, ScenarioConfig,
    SweepConfig, TruthConfig,
};
pub use metrics::{
    density_score, error_2norm, marginal_quantiles, point_errors, target_kde, weight_scores, ResultRow, Score, METRICS,
};
pub use output::{
    contour_grid, density_curve, git_describe, qq_points, qq_probs, sweep_curves, truth_curve, write_output,
    write_plots, write_results_csv, write_summary_csv, Failure, Manifest, PlotData, ScenarioOutput, Seeds,
};
pub use scenario::{scenario_prior, simulate_data, Dataset, PartData, Scenario};
pub use truth::{LogDensityFn, TargetSummary, TargetTruth, Truth, TruthDensity, TruthSummary};

use crate::baselines::{cmc_pool, CmcVariant, naive_estimate, ndpe_sample, sdpe_sample, DpeReport};
use crate::error::{Error, Result};
use crate::federation::{Federation, ProtocolOptions};
use crate::laplace::{attach_laplace, build_laplace, lemie_estimate, sample_laplace_draws, LaplaceApprox, LaplaceKind};
use crate::mie::{mie1_estimate, mie2_estimate, mie3_estimate, ImportanceProblem, Mie2Options, Normalisation, Scheme, WeightedSampleSet};
use crate::rng::Streams;
use crate::{DrawSource, ParamDraws};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every method's final weighted sample in the output.
    pub keep_weights: bool,
}

fn identity(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Simulated data of a scenario; depends only on the data seed and the model.
pub fn scenario_data(config: &ScenarioConfig) -> Result<Dataset> {
    simulate_data(&config.model, &mut Streams::new(config.data_seed()).stream(0, "data"))
}

fn truth_streams(config: &ScenarioConfig) -> Streams {
    Streams::new(config.seed).child(&format!("{}/truth/N{}", config.id, config.draws_per_part))
}

fn run_streams(config: &ScenarioConfig) -> Streams {
    Streams::new(config.seed).child(&format!("{}/M{}/N{}", config.id, config.parts, config.draws_per_part))
}

/// Full-data posterior of a scenario.
pub fn scenario_truth(config: &ScenarioConfig, data: &Dataset) -> Result<Truth> {
    Truth::compute(config, data, &truth_streams(config))
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    run_scenario_with(config, &RunOptions::default())
}

pub fn run_scenario_with(config: &ScenarioConfig, options: &RunOptions) -> Result<ScenarioOutput> {
    config.validate()?;
    let data = Arc::new(scenario_data(config)?);
    let truth = scenario_truth(config, &data)?;
    run_with_truth(config, data, &truth, options)
}

/// A method's weighted sample plus any method-specific scores.
struct Fitted {
    ws: WeightedSampleSet,
    weighted: bool,
    extra: Vec<Score>,
}

fn uniform(scheme: Scheme, draws: ParamDraws) -> Fitted {
    Fitted {
        ws: WeightedSampleSet::uniform(scheme, Arc::new(draws)),
        weighted: false,
        extra: Vec::new(),
    }
}

fn dpe_fitted(scheme: Scheme, draws: ParamDraws, report: &DpeReport) -> Fitted {
    let mut f = uniform(scheme, draws);
    f.extra = vec![
        Score {
            target: "all".into(),
            metric: "acceptance_rate",
            value: report.acceptance_rate,
            se: f64::NAN,
        },
        Score {
            target: "all".into(),
            metric: "out_of_support",
            value: report.out_of_support as f64,
            se: f64::NAN,
        },
    ];
    f
}

struct Scored {
    scores: Vec<Score>,
    plots: Vec<PlotData>,
}

fn score(config: &ScenarioConfig, name: &str, fitted: &Fitted, truth: &Truth) -> Result<Scored> {
    let ws = &fitted.ws;
    let mut scores = weight_scores(ws, fitted.weighted);
    scores.extend(fitted.extra.iter().cloned());
    let mut plots = Vec::new();
    for target in &truth.targets {
        scores.extend(point_errors(ws, target)?);
        let wants_kl = config.kl_targets.as_ref().is_none_or(|t| t.contains(&target.name));
        let wants_plot = config.plots && target.coords.len() <= 2;
        if !wants_kl && !wants_plot {
            continue;
        }
        let kde = target_kde(ws, target, config.kde_bandwidth.get(&target.name))?;
        if wants_kl {
            scores.push(density_score(&kde, truth, target)?);
        }
        if config.plots {
            let t = &target.name;
            match target.coords.len() {
                1 => plots.push(density_curve(format!("density_{t}_{name}"), &kde, truth, target)),
                2 => plots.push(contour_grid(format!("contour_{t}_{name}"), &|x| kde.log_density(x), truth, target)),
                _ => {}
            }
            plots.push(qq_points(format!("qq_{t}_{name}"), ws, truth, target)?);
        }
    }
    Ok(Scored { scores, plots })
}

fn truth_plots(truth: &Truth) -> Vec<PlotData> {
    let mut out = Vec::new();
    for target in &truth.targets {
        let t = &target.name;
        match (target.coords.len(), &target.log_pdf) {
            (1, Some(_)) => out.extend(truth_curve(format!("density_{t}_truth"), truth, target)),
            (2, Some(f)) => out.push(contour_grid(format!("contour_{t}_truth"), f.as_ref(), truth, target)),
            _ => {}
        }
    }
    out
}

/// Sources kept for a protocol method.
fn keeps(method: &Method, configured: &[LaplaceKind]) -> impl Fn(DrawSource) -> bool {
    let tags: Vec<u8> = method.laplace_kinds(configured).iter().map(|k| k.tag()).collect();
    move |s| match s {
        DrawSource::Local(_) => true,
        DrawSource::Laplace(t) => tags.contains(&t),
        _ => false,
    }
}

fn fit_protocol(
    method: &Method,
    base: &ImportanceProblem<'_>,
    configured: &[LaplaceKind],
    streams: &Streams,
) -> Result<Fitted> {
    let problem = base.select(keeps(method, configured))?;
    let mut rng = streams.stream(0, &method.to_string());
    let est = match *method {
        Method::Mie(1) => mie1_estimate(&problem, identity)?,
        Method::Mie(2) => mie2_estimate(&problem, identity, &Mie2Options::default())?,
        Method::Mie(3) => mie3_estimate(&problem, identity, Normalisation::SelfNormalised, &mut rng)?,
        Method::Lemie { variant, .. } => {
            lemie_estimate(variant, &problem, identity, Normalisation::SelfNormalised, &mut rng)?
        }
        _ => return Err(Error::InvalidArgument(format!("{method} does not use the protocol"))),
    };
    Ok(Fitted {
        ws: est.weights,
        weighted: true,
        extra: Vec::new(),
    })
}

/// Run one scenario against a precomputed truth (shared across a sweep).
pub fn run_with_truth(config: &ScenarioConfig, data: Arc<Dataset>, truth: &Truth, options: &RunOptions) -> Result<ScenarioOutput> {
    config.validate()?;
    let streams = run_streams(config);
    let scenario = Scenario::build(config, data, &streams)?;
    let configured = config.laplace.kinds()?;
    let methods = &config.methods;
    let mut fitted: Vec<Option<Result<Fitted>>> = methods.iter().map(|_| None).collect();

    let needs_local = methods.iter().any(|m| m.uses_protocol() || *m == Method::Naive);
    let local = if needs_local {
        Some(scenario.local_draws(&scenario.prior, "local", &streams)?)
    } else {
        None
    };

    let mut communication = None;
    let mut laplace_records = Vec::new();
    if let Some(local) = local.as_ref().filter(|_| methods.iter().any(Method::uses_protocol)) {
        let wanted: BTreeSet<LaplaceKind> = methods.iter().flat_map(|m| m.laplace_kinds(&configured)).collect();
        let refs: Vec<&ParamDraws> = local.iter().collect();
        let mut approxes: Vec<LaplaceApprox> = Vec::new();
        let mut laplace_errors: BTreeMap<LaplaceKind, String> = BTreeMap::new();
        for &kind in &wanted {
            match build_laplace(kind, &refs) {
                Ok(a) => approxes.push(a),
                Err(e) => {
                    laplace_errors.insert(kind, e.to_string());
                }
            }
        }
        laplace_records = approxes.iter().map(LaplaceApprox::to_record).collect();

        let mut protocol = ProtocolOptions::default();
        if let Some(c) = config.chunk_size {
            protocol.chunk_size = c;
        }
        let federation = Federation::new(scenario.model.clone(), protocol);
        let mut run = federation.run_in_out_in(local)?;
        if config.laplace.count > 0 && !approxes.is_empty() {
            let extra = sample_laplace_draws(&approxes, config.laplace.count, &streams)?;
            federation.extend_with_proposal_draws(&mut run, &extra)?;
        }
        communication = Some(run.communication());

        let mut base = ImportanceProblem::new(scenario.model.prior().as_ref(), &run.pooled, &run.loglik)?;
        for a in &approxes {
            base = attach_laplace(base, a)?;
        }
        for (i, m) in methods.iter().enumerate().filter(|(_, m)| m.uses_protocol()) {
            let missing = m.laplace_kinds(&configured).into_iter().find_map(|k| laplace_errors.get(&k));
            fitted[i] = Some(match missing {
                Some(e) => Err(Error::InvalidArgument(format!("Laplace approximation failed: {e}"))),
                None => fit_protocol(m, &base, &configured, &streams),
            });
        }
    }

    if let Some(local) = &local {
        let refs: Vec<&ParamDraws> = local.iter().collect();
        for i in (0..methods.len()).filter(|&i| methods[i] == Method::Naive) {
            fitted[i] = Some(naive_estimate(&refs, identity).map(|e| Fitted {
                ws: e.weights,
                weighted: false,
                extra: Vec::new(),
            }));
        }
    }
    drop(local);

    let mut dpe_reports = Vec::new();
    if methods.iter().any(Method::fractionated) {
        let frac = scenario.local_draws(&scenario.fractionated, "local_frac", &streams)?;
        let refs: Vec<&ParamDraws> = frac.iter().collect();
        for (i, m) in methods.iter().enumerate() {
            let f = match m {
                Method::Cmc(v) => {
                    let scheme = match v {
                        CmcVariant::Cmc1 => Scheme::Cmc1,
                        CmcVariant::Cmc2 => Scheme::Cmc2,
                    };
                    cmc_pool(&refs, *v).map(|d| uniform(scheme, d))
                }
                Method::Ndpe | Method::Sdpe => {
                    let child = streams.child(&m.to_string());
                    let (out, scheme) = if *m == Method::Ndpe {
                        (ndpe_sample(&refs, &config.dpe, &child), Scheme::Ndpe)
                    } else {
                        (sdpe_sample(&refs, &config.dpe, &child), Scheme::Sdpe)
                    };
                    out.map(|o| {
                        dpe_reports.push(o.report.clone());
                        dpe_fitted(scheme, o.draws, &o.report)
                    })
                }
                _ => continue,
            };
            fitted[i] = Some(f);
        }
    }

    if let Some(i) = methods.iter().position(|m| *m == Method::Vanilla) {
        let draws = truth.sample(config, &scenario.data, config.vanilla_draws(), &streams);
        fitted[i] = Some(draws.map(|d| uniform(Scheme::Vanilla, d)));
    }

    let mut rows = Vec::new();
    let mut plots = if config.plots && !methods.is_empty() { truth_plots(truth) } else { Vec::new() };
    let mut failures = Vec::new();
    let mut weights = Vec::new();
    let row = |method: &str, target: &str, metric: &str, value: f64, se: f64| ResultRow {
        scenario: config.id.clone(),
        method: method.into(),
        parts: config.parts,
        target: target.into(),
        metric: metric.into(),
        value,
        se,
    };
    for (m, f) in methods.iter().zip(fitted) {
        let name = m.to_string();
        let outcome = f
            .unwrap_or_else(|| Err(Error::InvalidArgument(format!("{name} was not run"))))
            .and_then(|f| score(config, &name, &f, truth).map(|s| (f, s)));
        match outcome {
            Ok((f, s)) => {
                rows.extend(s.scores.iter().map(|sc| row(&name, &sc.target, sc.metric, sc.value, sc.se)));
                plots.extend(s.plots);
                if options.keep_weights {
                    weights.push((name, f.ws));
                }
            }
            Err(e) => {
                log::warn!("{}: {name} failed: {e}", config.id);
                rows.push(row(&name, "all", "failed", f64::NAN, f64::NAN));
                failures.push(Failure {
                    method: name,
                    error: e.to_string(),
                });
            }
        }
    }

    let manifest = Manifest {
        scenario: config.id.clone(),
        model: config.model.name().into(),
        parts: config.parts,
        draws_per_part: config.draws_per_part,
        config_sha256: config.sha256(),
        git_describe: git_describe(),
        seeds: Seeds {
            seed: config.seed,
            data_seed: config.data_seed(),
        },
        part_sizes: scenario.partition.parts.iter().map(Vec::len).collect(),
        methods: methods.iter().map(ToString::to_string).collect(),
        communication,
        laplace: laplace_records,
        dpe: dpe_reports,
        truth: truth.summary(),
        failures,
        rows: rows.len(),
        config: config.clone(),
    };
    Ok(ScenarioOutput {
        rows,
        manifest,
        plots,
        weights,
    })
}

/// Runs of one scenario over a grid of part counts or draw counts.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<ScenarioOutput>,
    pub rows: Vec<ResultRow>,
    /// Metric-versus-`M` curves per method.
    pub curves: Vec<PlotData>,
}

impl SweepOutput {
    pub fn has_failures(&self) -> bool {
        self.runs.iter().any(ScenarioOutput::has_failures)
    }
}

/// Run every config in turn. The data set and truth are shared by runs that
/// differ only in the number of parts. Runs are sequential to bound memory:
/// a single run already holds an `M x N` log-likelihood matrix.
pub fn sweep(configs: &[ScenarioConfig], options: &RunOptions) -> Result<SweepOutput> {
    if let Some(first) = configs.first() {
        if configs.iter().any(|c| c.id != first.id) {
            return Err(Error::Config("sweep configs must share a scenario id".into()));
        }
    }
    let mut cache: BTreeMap<String, (Arc<Dataset>, Arc<Truth>)> = BTreeMap::new();
    let mut runs = Vec::with_capacity(configs.len());
    for c in configs {
        c.validate()?;
        let key = serde_json::to_string(&(&c.model, &c.truth, c.draws_per_part, c.burn_in(), c.seed, c.data_seed()))?;
        let (data, truth) = match cache.get(&key) {
            Some(hit) => hit.clone(),
            None => {
                let data = Arc::new(scenario_data(c)?);
                let truth = Arc::new(scenario_truth(c, &data)?);
                cache.insert(key, (data.clone(), truth.clone()));
                (data, truth)
            }
        };
        log::info!("{}: M = {}, N = {}", c.id, c.parts, c.draws_per_part);
        runs.push(run_with_truth(c, data, &truth, options)?);
    }
    let rows: Vec<ResultRow> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let curves = sweep_curves(&rows);
    Ok(SweepOutput { runs, rows, curves })
}

/// Combined `results.csv` and `summary.csv`, one directory per run and the
/// curves under `plots/`.
pub fn write_sweep(dir: &Path, out: &SweepOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results_csv(&dir.join("results.csv"), &out.rows)?;
    write_summary_csv(&dir.join("summary.csv"), &out.rows)?;
    write_plots(&dir.join("plots"), &out.curves)?;
    for run in &out.runs {
        let m = &run.manifest;
        write_output(&dir.join(format!("M{}_N{}", m.parts, m.draws_per_part)), run)?;
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{marginal_quantiles, ResultRow};
use super::truth::{TargetTruth, Truth};
use crate::baselines::DpeReport;
use crate::error::Result;
use crate::federation::CommunicationReport;
use crate::io::{write_json, write_weights};
use crate::laplace::LaplaceRecord;
use crate::mie::{WeightedKde, WeightedSampleSet};

use super::config::ScenarioConfig;
use super::truth::TruthSummary;

/// Columns of numbers written as whitespace-separated text with a `#` header.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn new(name: String, columns: &[&str]) -> Self {
        Self {
            name,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join(format!("{}.txt", self.name)))?);
        writeln!(w, "# {}", self.columns.join(" "))?;
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub seed: u64,
    pub data_seed: u64,
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub model: String,
    #[serde(rename = "M")]
    pub parts: usize,
    pub draws_per_part: usize,
    pub config_sha256: String,
    pub git_describe: String,
    pub seeds: Seeds,
    pub part_sizes: Vec<usize>,
    pub methods: Vec<String>,
    pub communication: Option<CommunicationReport>,
    pub laplace: Vec<LaplaceRecord>,
    pub dpe: Vec<DpeReport>,
    pub truth: TruthSummary,
    pub failures: Vec<Failure>,
    pub rows: usize,
    pub config: ScenarioConfig,
}

/// Result of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
    pub plots: Vec<PlotData>,
    /// Final weights per method, kept when requested.
    pub weights: Vec<(String, WeightedSampleSet)>,
}

impl ScenarioOutput {
    pub fn has_failures(&self) -> bool {
        !self.manifest.failures.is_empty()
    }

    /// Value of one metric, if present.
    pub fn value(&self, method: &str, target: &str, metric: &str) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.target == target && r.metric == metric)
            .map(|r| (r.value, r.se))
    }

    pub fn plot(&self, name: &str) -> Option<&PlotData> {
        self.plots.iter().find(|p| p.name == name)
    }
}

/// `git describe` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn bounds(truth: &Truth, target: &TargetTruth, k: usize, lo: f64, hi: f64) -> (f64, f64) {
    match &target.quantile {
        Some(q) => (q(k, lo), q(k, hi)),
        None => {
            let mut col = truth.draws.column(target.coords[k]);
            col.sort_by(f64::total_cmp);
            let at = |p: f64| col[((col.len() - 1) as f64 * p).round() as usize];
            (at(lo), at(hi))
        }
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let pad = 0.1 * (hi - lo);
    let (a, b) = (lo - pad, hi + pad);
    (0..n).map(move |i| a + (b - a) * i as f64 / (n - 1) as f64)
}

/// Density curve of a one-coordinate target.
pub fn density_curve(name: String, kde: &WeightedKde, truth: &Truth, target: &TargetTruth) -> PlotData {
    let (lo, hi) = bounds(truth, target, 0, 0.0005, 0.9995);
    let mut p = PlotData::new(name, &["x", "density"]);
    for x in grid(lo, hi, 400) {
        p.rows.push(vec![x, kde.log_density(&[x]).exp()]);
    }
    p
}

/// Truth density curve of a one-coordinate target.
pub fn truth_curve(name: String, truth: &Truth, target: &TargetTruth) -> Option<PlotData> {
    let f = target.log_pdf.as_ref()?;
    let (lo, hi) = bounds(truth, target, 0, 0.0005, 0.9995);
    let mut p = PlotData::new(name, &["x", "density"]);
    for x in grid(lo, hi, 400) {
        p.rows.push(vec![x, f(&[x]).exp()]);
    }
    Some(p)
}

/// Density on a grid over a two-coordinate target.
pub fn contour_grid(name: String, log_density: &dyn Fn(&[f64]) -> f64, truth: &Truth, target: &TargetTruth) -> PlotData {
    let (x0, x1) = bounds(truth, target, 0, 0.001, 0.999);
    let (y0, y1) = bounds(truth, target, 1, 0.001, 0.999);
    let mut p = PlotData::new(name, &["x", "y", "density"]);
    for x in grid(x0, x1, 60) {
        for y in grid(y0, y1, 60) {
            p.rows.push(vec![x, y, log_density(&[x, y]).exp()]);
        }
    }
    p
}

/// Probabilities used in quantile-quantile files.
pub fn qq_probs() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Truth versus estimated marginal quantiles of the first coordinate of `target`.
pub fn qq_points(name: String, ws: &WeightedSampleSet, truth: &Truth, target: &TargetTruth) -> Result<PlotData> {
    let mut p = PlotData::new(name, &["prob", "truth", "estimate"]);
    let coord = target.coords[0];
    let mut sorted = truth.draws.column(coord);
    sorted.sort_by(f64::total_cmp);
    for prob in qq_probs() {
        let t = match &target.quantile {
            Some(q) => q(0, prob),
            None => sorted[((sorted.len() - 1) as f64 * prob).round() as usize],
        };
        let e = marginal_quantiles(ws, &[coord], prob)?[0];
        p.rows.push(vec![prob, t, e]);
    }
    Ok(p)
}

/// Per-method curves of every metric against `M`, one file per
/// (target, metric, method) with columns `M value se`.
pub fn sweep_curves(rows: &[ResultRow]) -> Vec<PlotData> {
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric != "failed") {
        groups
            .entry((r.target.clone(), r.metric.clone(), r.method.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((target, metric, method), mut rs)| {
            rs.sort_by_key(|r| r.parts);
            let mut p = PlotData::new(format!("curve_{target}_{metric}_{method}"), &["M", "value", "se"]);
            p.rows = rs.iter().map(|r| vec![r.parts as f64, r.value, r.se]).collect();
            p
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    scenario: &'a str,
    method: &'a str,
    #[serde(rename = "M")]
    parts: usize,
    target: &'a str,
    ess: Option<f64>,
    khat: Option<f64>,
    kl: Option<f64>,
    kl_se: Option<f64>,
    err_mean: Option<f64>,
    err_q025: Option<f64>,
    err_q975: Option<f64>,
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (scenario, method, M, target) with the main metrics side by side.
/// Weight metrics (`target = all`) are repeated on every target row.
pub fn write_summary_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut keys: Vec<(&str, &str, usize, &str)> = Vec::new();
    for r in rows.iter().filter(|r| r.target != "all") {
        let k = (r.scenario.as_str(), r.method.as_str(), r.parts, r.target.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let find = |s: &str, m: &str, parts: usize, t: &str, metric: &str| {
        rows.iter()
            .find(|r| r.scenario == s && r.method == m && r.parts == parts && r.target == t && r.metric == metric)
    };
    let mut w = csv::Writer::from_path(path)?;
    for (s, m, parts, t) in keys {
        let kl = find(s, m, parts, t, "kl");
        w.serialize(SummaryRow {
            scenario: s,
            method: m,
            parts,
            target: t,
            ess: find(s, m, parts, "all", "ess").map(|r| r.value),
            khat: find(s, m, parts, "all", "khat").map(|r| r.value),
            kl: kl.map(|r| r.value),
            kl_se: kl.map(|r| r.se),
            err_mean: find(s, m, parts, t, "err_mean").map(|r| r.value),
            err_q025: find(s, m, parts, t, "err_q025").map(|r| r.value),
            err_q975: find(s, m, parts, t, "err_q975").map(|r| r.value),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Write `results.csv`, `summary.csv`, `manifest.json`, the plot files under
/// `plots/` and any kept weights under `weights/`.
pub fn write_output(dir: &Path, out: &ScenarioOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_results_csv(&dir.join("results.csv"), &out.rows)?;
    write_summary_csv(&dir.join("summary.csv"), &out.rows)?;
    write_json(&dir.join("manifest.json"), &out.manifest)?;
    write_plots(&dir.join("plots"), &out.plots)?;
    if !out.weights.is_empty() {
        let wdir = dir.join("weights");
        fs::create_dir_all(&wdir)?;
        for (method, ws) in &out.weights {
            write_weights(&wdir.join(format!("{method}.csv")), ws)?;
        }
    }
    Ok(())
}

pub fn write_plots(dir: &Path, plots: &[PlotData]) -> Result<()> {
    if plots.is_empty() {
        return Ok(());
    }
    fs::create_dir_all(dir)?;
    for p in plots {
        p.write(dir)?;
    }
    Ok(())
}

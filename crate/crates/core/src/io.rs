//! CSV and JSON persistence for observations, draws, weights and run records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mie::WeightedSampleSet;
use crate::model::{DrawSource, ParamDraws};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `<stem>.json` next to a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Observation rows under a header of column names.
pub fn write_observations_csv<W: Write>(out: W, columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns)?;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != columns.len() {
            return Err(Error::InvalidArgument(format!("row {i} has {} values, expected {}", r.len(), columns.len())));
        }
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("not a number: {v:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

fn theta_header(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("theta_{k}")).collect()
}

/// Metadata stored beside a draw-set CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsSidecar {
    pub model: String,
    pub part_id: Option<usize>,
    pub source: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: Option<crate::rng::SeedTrace>,
    pub burnin: usize,
}

/// One CSV row per draw with columns `theta_0..theta_{d-1}`, plus a JSON sidecar.
pub fn write_draws(path: &Path, draws: &ParamDraws, model: &str, burnin: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(theta_header(draws.dim()))?;
    for r in draws.rows() {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    let sidecar = DrawsSidecar {
        model: model.to_string(),
        part_id: match draws.source() {
            DrawSource::Local(j) => Some(j),
            _ => None,
        },
        source: draws.source().to_string(),
        n: draws.len(),
        seed: draws.seed().cloned(),
        burnin,
    };
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_draws(path: &Path) -> Result<ParamDraws> {
    let (cols, rows) = read_observations_csv(File::open(path)?)?;
    let sidecar: Option<DrawsSidecar> = sidecar_path(path).exists().then(|| read_json(&sidecar_path(path))).transpose()?;
    let source = match &sidecar {
        Some(s) => s.source.parse()?,
        None => DrawSource::Pooled,
    };
    let mut values = Vec::with_capacity(rows.len() * cols.len());
    for r in rows {
        values.extend(r);
    }
    let mut d = ParamDraws::new(cols.len(), values, source)?;
    if let Some(seed) = sidecar.and_then(|s| s.seed) {
        d = d.with_seed(seed);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub scheme: String,
    pub component_sources: Vec<String>,
    pub q: Vec<f64>,
    pub log_chat: Vec<f64>,
    pub ess: f64,
}

/// Coordinates, log weight, normalised weight and source per weighted draw.
pub fn write_weights(path: &Path, ws: &WeightedSampleSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = theta_header(ws.dim());
    header.extend(["log_weight", "norm_weight", "source"].map(String::from));
    w.write_record(&header)?;
    for i in 0..ws.len() {
        let mut rec: Vec<String> = ws.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ws.log_weights[i].to_string());
        rec.push(ws.norm_weights[i].to_string());
        rec.push(ws.sources[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    let sidecar = WeightsSidecar {
        scheme: ws.scheme.to_string(),
        component_sources: ws.component_sources.iter().map(|s| s.to_string()).collect(),
        q: ws.component_weights.clone(),
        log_chat: ws.log_chat.clone(),
        ess: ws.ess(),
    };
    write_json(&sidecar_path(path), &sidecar)
}

/// Weights read back from [`write_weights`] output.
#[derive(Debug, Clone)]
pub struct WeightsTable {
    pub draws: ParamDraws,
    pub log_weights: Vec<f64>,
    pub norm_weights: Vec<f64>,
    pub sources: Vec<DrawSource>,
}

pub fn read_weights(path: &Path) -> Result<WeightsTable> {
    read_weights_from(File::open(path)?)
}

pub fn read_weights_from<R: Read>(input: R) -> Result<WeightsTable> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let dim = header.iter().filter(|h| h.starts_with("theta_")).count();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("weights file has no {name} column")))
    };
    let (lw_col, nw_col, src_col) = (col("log_weight")?, col("norm_weight")?, col("source")?);
    let num = |v: &str| -> Result<f64> {
        match v.trim() {
            "-inf" => Ok(f64::NEG_INFINITY),
            t => t.parse().map_err(|_| Error::InvalidArgument(format!("not a number: {v:?}"))),
        }
    };
    let mut out = WeightsTable {
        draws: ParamDraws::new(dim.max(1), vec![0.0; dim.max(1)], DrawSource::Pooled)?,
        log_weights: vec![],
        norm_weights: vec![],
        sources: vec![],
    };
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for k in 0..dim {
            values.push(num(&rec[k])?);
        }
        out.log_weights.push(num(&rec[lw_col])?);
        out.norm_weights.push(num(&rec[nw_col])?);
        out.sources.push(rec[src_col].parse()?);
    }
    if out.log_weights.is_empty() {
        return Err(Error::InvalidArgument("weights file has no rows".into()));
    }
    out.draws = ParamDraws::new(dim, values, DrawSource::Pooled)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_round_trip() {
        let cols = vec!["x".to_string(), "y".to_string()];
        let rows = vec![vec![1.0, 0.5], vec![-2.0, 3.25]];
        let mut buf = Vec::new();
        write_observations_csv(&mut buf, &cols, &rows).unwrap();
        let (c, r) = read_observations_csv(buf.as_slice()).unwrap();
        assert_eq!((c, r), (cols, rows));
    }

    #[test]
    fn source_labels_parse() {
        for s in [DrawSource::Local(12), DrawSource::Laplace(3), DrawSource::Pooled, DrawSource::Combined] {
            assert_eq!(s.to_string().parse::<DrawSource>().unwrap(), s);
        }
        assert!("nowhere".parse::<DrawSource>().is_err());
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedTrace;

/// Where a block of draws came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawSource {
    /// Local posterior of part `j` (0-based).
    Local(usize),
    /// Laplace approximation of the given type (1, 2 or 3).
    Laplace(u8),
    Pooled,
    Truth,
    Combined,
}

impl fmt::Display for DrawSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrawSource::Local(j) => write!(f, "local{j}"),
            DrawSource::Laplace(t) => write!(f, "laplace{t}"),
            DrawSource::Pooled => f.write_str("pooled"),
            DrawSource::Truth => f.write_str("truth"),
            DrawSource::Combined => f.write_str("combined"),
        }
    }
}

impl std::str::FromStr for DrawSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown draw source {s:?}"));
        Ok(match s {
            "pooled" => DrawSource::Pooled,
            "truth" => DrawSource::Truth,
            "combined" => DrawSource::Combined,
            _ => {
                if let Some(j) = s.strip_prefix("local") {
                    DrawSource::Local(j.parse().map_err(|_| bad())?)
                } else if let Some(t) = s.strip_prefix("laplace") {
                    DrawSource::Laplace(t.parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

/// `N x d` table of finite parameter draws stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDraws {
    dim: usize,
    values: Vec<f64>,
    source: DrawSource,
    seed: Option<SeedTrace>,
}

impl ParamDraws {
    pub fn new(dim: usize, values: Vec<f64>, source: DrawSource) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("draw dimension must be positive".into()));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form a non-empty table with {dim} columns",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "draw {} coordinate {} is not finite",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            dim,
            values,
            source,
            seed: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: DrawSource) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("rows have differing lengths".into()));
        }
        Self::new(dim, rows.concat(), source)
    }

    pub fn with_seed(mut self, seed: SeedTrace) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_source(mut self, source: DrawSource) -> Self {
        self.source = source;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source(&self) -> DrawSource {
        self.source
    }

    pub fn seed(&self) -> Option<&SeedTrace> {
        self.seed.as_ref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// Values of coordinate `k` across all draws.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        crate::linalg::mean_rows(&self.values, self.dim).as_slice().to_vec()
    }

    /// Keep only the first `n` draws.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {} draws to {n}",
                self.len()
            )));
        }
        Ok(Self {
            dim: self.dim,
            values: self.values[..n * self.dim].to_vec(),
            source: self.source,
            seed: self.seed.clone(),
        })
    }

    /// Keep only the listed coordinates.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.iter().any(|&c| c >= self.dim) {
            return Err(Error::InvalidArgument("column index out of range".into()));
        }
        let mut v = Vec::with_capacity(self.len() * cols.len());
        for r in self.rows() {
            v.extend(cols.iter().map(|&c| r[c]));
        }
        Ok(Self {
            dim: cols.len(),
            values: v,
            source: self.source,
            seed: self.seed.clone(),
        })
    }

    /// Stack draw sets with equal dimension.
    pub fn concat(sets: &[&ParamDraws], source: DrawSource) -> Result<Self> {
        let dim = sets
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?
            .dim;
        if sets.iter().any(|s| s.dim != dim) {
            return Err(Error::InvalidArgument("draw sets have differing dimensions".into()));
        }
        let mut v = Vec::with_capacity(sets.iter().map(|s| s.values.len()).sum());
        for s in sets {
            v.extend_from_slice(&s.values);
        }
        Ok(Self {
            dim,
            values: v,
            source,
            seed: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_ragged_input() {
        assert!(ParamDraws::new(2, vec![1.0, f64::NAN], DrawSource::Pooled).is_err());
        assert!(ParamDraws::new(2, vec![1.0, 2.0, 3.0], DrawSource::Pooled).is_err());
        assert!(ParamDraws::new(2, vec![], DrawSource::Pooled).is_err());
        let d = ParamDraws::new(2, vec![1.0, 2.0, 3.0, 4.0], DrawSource::Local(0)).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.column(0), vec![1.0, 3.0]);
        assert_eq!(d.mean(), vec![2.0, 3.0]);
    }
}

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{DrawSource, ParamDraws};

/// A contiguous run of pooled columns sharing one origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawBlock {
    pub source: DrawSource,
    pub columns: Range<usize>,
}

/// All draws known to the master, with the origin of each block retained.
#[derive(Debug, Clone)]
pub struct PooledDraws {
    draws: Arc<ParamDraws>,
    blocks: Vec<DrawBlock>,
}

impl PooledDraws {
    pub fn from_blocks(sets: &[&ParamDraws]) -> Result<Self> {
        let draws = ParamDraws::concat(sets, DrawSource::Pooled)?;
        let mut blocks = Vec::with_capacity(sets.len());
        let mut start = 0;
        for s in sets {
            blocks.push(DrawBlock {
                source: s.source(),
                columns: start..start + s.len(),
            });
            start += s.len();
        }
        Ok(Self {
            draws: Arc::new(draws),
            blocks,
        })
    }

    pub fn draws(&self) -> &Arc<ParamDraws> {
        &self.draws
    }

    pub fn blocks(&self) -> &[DrawBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws.dim()
    }

    pub fn block(&self, source: DrawSource) -> Option<&DrawBlock> {
        self.blocks.iter().find(|b| b.source == source)
    }

    pub fn column_sources(&self) -> Vec<DrawSource> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.blocks {
            out.extend(std::iter::repeat_n(b.source, b.columns.len()));
        }
        out
    }

    pub(crate) fn append(&mut self, extra: &[ParamDraws]) -> Result<()> {
        let mut sets: Vec<&ParamDraws> = vec![self.draws.as_ref()];
        sets.extend(extra.iter());
        let draws = ParamDraws::concat(&sets, DrawSource::Pooled)?;
        let mut start = self.len();
        for e in extra {
            self.blocks.push(DrawBlock {
                source: e.source(),
                columns: start..start + e.len(),
            });
            start += e.len();
        }
        self.draws = Arc::new(draws);
        Ok(())
    }
}

/// `M x N` matrix of per-part log-likelihoods at every pooled draw, one row per part.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikMatrix {
    rows: Vec<Vec<f64>>,
    column_source: Vec<DrawSource>,
}

impl LogLikMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, column_source: Vec<DrawSource>) -> Result<Self> {
        let cols = column_source.len();
        if rows.is_empty() {
            return Err(Error::InvalidArgument("log-likelihood matrix needs at least one row".into()));
        }
        if let Some((j, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::InvalidArgument(format!(
                "row {j} has {} entries but there are {cols} columns",
                r.len()
            )));
        }
        Ok(Self { rows, column_source })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.column_source.len()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.rows[j][k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    pub fn column_source(&self) -> &[DrawSource] {
        &self.column_source
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    /// Full-data log-likelihood at every pooled draw.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.num_cols()];
        for r in &self.rows {
            for (acc, v) in s.iter_mut().zip(r) {
                *acc += v;
            }
        }
        s
    }

    pub(crate) fn append_columns(&mut self, new_rows: Vec<Vec<f64>>, sources: Vec<DrawSource>) -> Result<()> {
        let extra = sources.len();
        if new_rows.len() != self.rows.len() || new_rows.iter().any(|r| r.len() != extra) {
            return Err(Error::Protocol("extension rows do not match the matrix shape".into()));
        }
        for (row, new) in self.rows.iter_mut().zip(new_rows) {
            row.extend(new);
        }
        self.column_source.extend(sources);
        Ok(())
    }
}

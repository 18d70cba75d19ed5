use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::federation::{LogLikMatrix, PooledDraws};
use crate::model::{DrawSource, LogPrior, ParamDraws};

/// Columns processed per parallel task.
pub(crate) const COLUMN_CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub enum ComponentDensity {
    /// Local posterior of part `part`: prior times that part's likelihood.
    Local { part: usize },
    /// A normalised density evaluated at every pooled draw.
    Normalised {
        log_density: Arc<Vec<f64>>,
        entropy: Option<f64>,
    },
}

/// One proposal of the mixture together with the pooled columns drawn from it.
#[derive(Debug, Clone)]
pub struct Component {
    pub source: DrawSource,
    pub columns: Range<usize>,
    pub density: ComponentDensity,
}

impl Component {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Master-side view of a finished protocol run, ready for weighting.
#[derive(Debug, Clone)]
pub struct ImportanceProblem<'a> {
    pooled: &'a PooledDraws,
    loglik: &'a LogLikMatrix,
    log_prior: Arc<Vec<f64>>,
    log_target: Arc<Vec<f64>>,
    components: Vec<Component>,
}

impl<'a> ImportanceProblem<'a> {
    /// Components are the local-posterior blocks of `pooled`; other blocks are
    /// ignored until a density is attached with [`with_normalised`](Self::with_normalised).
    pub fn new(prior: &dyn LogPrior, pooled: &'a PooledDraws, loglik: &'a LogLikMatrix) -> Result<Self> {
        if loglik.num_cols() != pooled.len() {
            return Err(Error::InvalidArgument(format!(
                "log-likelihood matrix has {} columns for {} pooled draws",
                loglik.num_cols(),
                pooled.len()
            )));
        }
        let draws = pooled.draws();
        let log_prior: Vec<f64> = (0..draws.len())
            .into_par_iter()
            .with_min_len(COLUMN_CHUNK)
            .map(|k| prior.log_density(draws.row(k)))
            .collect();
        let sums = loglik.column_sums();
        let log_target = log_prior
            .iter()
            .zip(&sums)
            .map(|(&p, &l)| if p == f64::NEG_INFINITY || l == f64::NEG_INFINITY { f64::NEG_INFINITY } else { p + l })
            .collect();
        let mut components = Vec::new();
        for b in pooled.blocks() {
            if let DrawSource::Local(j) = b.source {
                if j >= loglik.num_rows() {
                    return Err(Error::InvalidArgument(format!("block from part {j} has no likelihood row")));
                }
                components.push(Component {
                    source: b.source,
                    columns: b.columns.clone(),
                    density: ComponentDensity::Local { part: j },
                });
            }
        }
        Ok(Self {
            pooled,
            loglik,
            log_prior: Arc::new(log_prior),
            log_target: Arc::new(log_target),
            components,
        })
    }

    /// Attach a normalised proposal for the pooled block labelled `source`.
    /// `log_density` must cover every pooled column.
    pub fn with_normalised(mut self, source: DrawSource, log_density: Vec<f64>, entropy: Option<f64>) -> Result<Self> {
        if log_density.len() != self.pooled.len() {
            return Err(Error::InvalidArgument(format!(
                "density evaluated at {} draws, expected {}",
                log_density.len(),
                self.pooled.len()
            )));
        }
        let block = self
            .pooled
            .block(source)
            .ok_or_else(|| Error::EmptyComponent(source.to_string()))?;
        self.components.retain(|c| c.source != source);
        self.components.push(Component {
            source,
            columns: block.columns.clone(),
            density: ComponentDensity::Normalised {
                log_density: Arc::new(log_density),
                entropy,
            },
        });
        Ok(self)
    }

    /// Restrict to the components accepted by `keep`.
    pub fn select(&self, keep: impl Fn(DrawSource) -> bool) -> Result<Self> {
        let mut out = self.clone();
        out.components.retain(|c| keep(c.source));
        if out.components.is_empty() {
            return Err(Error::InvalidArgument("no proposal components selected".into()));
        }
        Ok(out)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn has_normalised(&self) -> bool {
        self.components
            .iter()
            .any(|c| matches!(c.density, ComponentDensity::Normalised { .. }))
    }

    pub fn draws(&self) -> &Arc<ParamDraws> {
        self.pooled.draws()
    }

    pub fn pooled(&self) -> &PooledDraws {
        self.pooled
    }

    pub fn loglik(&self) -> &LogLikMatrix {
        self.loglik
    }

    /// `log pi(theta) + sum_j log L_j(theta)` at every pooled column.
    pub fn log_target(&self) -> &[f64] {
        &self.log_target
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    /// Columns of every active component, in component order.
    pub fn active_columns(&self) -> Vec<usize> {
        self.components.iter().flat_map(|c| c.columns.clone()).collect()
    }

    /// Log density (unnormalised for local posteriors) of component `c` at `cols`.
    pub(crate) fn component_log_density(&self, c: usize, cols: &[usize], out: &mut [f64]) {
        match &self.components[c].density {
            ComponentDensity::Local { part } => {
                let row = self.loglik.row(*part);
                for (o, &k) in out.iter_mut().zip(cols) {
                    let p = self.log_prior[k];
                    *o = if p == f64::NEG_INFINITY || row[k] == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        p + row[k]
                    };
                }
            }
            ComponentDensity::Normalised { log_density, .. } => {
                for (o, &k) in out.iter_mut().zip(cols) {
                    *o = log_density[k];
                }
            }
        }
    }

    /// `log sum_c exp(log_coef[c] + log density_c)` at each column, computed
    /// component-outer with max subtraction. Components with `-inf` coefficients
    /// are skipped.
    pub(crate) fn log_mixture(&self, log_coef: &[f64], cols: &[usize]) -> Vec<f64> {
        let active: Vec<usize> = (0..self.components.len())
            .filter(|&c| log_coef[c] > f64::NEG_INFINITY)
            .collect();
        let mut out = vec![f64::NEG_INFINITY; cols.len()];
        out.par_chunks_mut(COLUMN_CHUNK)
            .zip(cols.par_chunks(COLUMN_CHUNK))
            .for_each(|(out, cols)| {
                let n = cols.len();
                let mut terms = vec![0.0; active.len() * n];
                for (t, &c) in terms.chunks_exact_mut(n).zip(&active) {
                    self.component_log_density(c, cols, t);
                    for v in t.iter_mut() {
                        *v += log_coef[c];
                    }
                }
                let mut max = vec![f64::NEG_INFINITY; n];
                for t in terms.chunks_exact(n) {
                    for (m, &v) in max.iter_mut().zip(t) {
                        if v > *m {
                            *m = v;
                        }
                    }
                }
                let mut sum = vec![0.0; n];
                for t in terms.chunks_exact(n) {
                    for ((s, &v), &m) in sum.iter_mut().zip(t).zip(&max) {
                        if m > f64::NEG_INFINITY {
                            *s += (v - m).exp();
                        }
                    }
                }
                for ((o, s), m) in out.iter_mut().zip(sum).zip(max) {
                    *o = if m == f64::NEG_INFINITY { m } else { m + s.ln() };
                }
            });
        out
    }
}

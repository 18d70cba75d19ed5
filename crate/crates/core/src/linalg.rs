//! Dense linear algebra helpers built on nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor, or `None` when the matrix is not positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    m.clone().cholesky().map(|c| c.l())
}

/// Outcome of [`repair_pd`].
#[derive(Debug, Clone)]
pub struct PdRepair {
    pub matrix: DMatrix<f64>,
    pub diagonal_fallback: bool,
}

/// Symmetrise and, if still not positive definite, fall back to the diagonal.
/// No jitter is ever added.
pub fn repair_pd(m: &DMatrix<f64>) -> Result<PdRepair> {
    let sym = symmetrize(m);
    if cholesky_lower(&sym).is_some() {
        return Ok(PdRepair {
            matrix: sym,
            diagonal_fallback: false,
        });
    }
    let diag = DMatrix::from_diagonal(&sym.diagonal());
    if diag.diagonal().iter().all(|&v| v.is_finite() && v > 0.0) {
        log::warn!("matrix not positive definite after symmetrisation; using its diagonal");
        Ok(PdRepair {
            matrix: diag,
            diagonal_fallback: true,
        })
    } else {
        Err(Error::Decomposition(
            "matrix is not positive definite and its diagonal is not positive".into(),
        ))
    }
}

/// Inverse of a positive definite matrix.
pub fn inverse_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = symmetrize(m)
        .cholesky()
        .ok_or_else(|| Error::Decomposition("inverse of a non positive definite matrix".into()))?;
    Ok(symmetrize(&c.inverse()))
}

pub fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Solve `L z = b` in place for lower triangular `L` stored row-major.
fn forward_solve(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let row = &l[i * d..i * d + i];
        let s: f64 = row.iter().zip(b.iter()).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l[i * d + i];
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Multivariate normal with precomputed Cholesky factor.
#[derive(Debug, Clone)]
pub struct Mvn {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    lower: DMatrix<f64>,
    lower_rm: Vec<f64>,
    log_norm: f64,
}

impl Mvn {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "mean has length {d} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let cov = symmetrize(&cov);
        let lower = cholesky_lower(&cov)
            .ok_or_else(|| Error::Decomposition("covariance is not positive definite".into()))?;
        let log_norm = -0.5 * d as f64 * LN_2PI - 0.5 * log_det_from_lower(&lower);
        Ok(Self {
            lower_rm: row_major(&lower),
            mean,
            cov,
            lower,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det_cov(&self) -> f64 {
        log_det_from_lower(&self.lower)
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut z: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, m)| a - m).collect();
        forward_solve(&self.lower_rm, d, &mut z);
        z.iter().map(|v| v * v).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        self.log_norm - 0.5 * self.mahalanobis_sq(x)
    }

    pub fn entropy(&self) -> f64 {
        0.5 * self.dim() as f64 * (1.0 + LN_2PI) + 0.5 * self.log_det_cov()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d)
            .map(|i| {
                self.mean[i]
                    + (0..=i)
                        .map(|j| self.lower_rm[i * d + j] * z[j])
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Multivariate Student t with location, scale matrix and degrees of freedom.
#[derive(Debug, Clone)]
pub struct MvStudentT {
    scale: Mvn,
    dof: f64,
    log_norm: f64,
}

impl MvStudentT {
    pub fn new(loc: DVector<f64>, scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(Error::InvalidArgument(format!("t degrees of freedom {dof} must be positive")));
        }
        let scale = Mvn::new(loc, scale)?;
        let d = scale.dim() as f64;
        let log_norm = ln_gamma(0.5 * (dof + d))
            - ln_gamma(0.5 * dof)
            - 0.5 * d * (dof * std::f64::consts::PI).ln()
            - 0.5 * scale.log_det_cov();
        Ok(Self { scale, dof, log_norm })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn loc(&self) -> &DVector<f64> {
        self.scale.mean()
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        self.scale.cov()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let d = self.scale.dim() as f64;
        self.log_norm - 0.5 * (self.dof + d) * (self.scale.mahalanobis_sq(x) / self.dof).ln_1p()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let g: f64 = ChiSquared::new(self.dof).expect("positive dof").sample(rng);
        let k = (self.dof / g).sqrt();
        let z = self.scale.sample(rng);
        z.iter()
            .zip(self.scale.mean().iter())
            .map(|(v, m)| m + k * (v - m))
            .collect()
    }
}

/// Pack the lower triangle of a square matrix row by row:
/// `(0,0), (1,0), (1,1), (2,0), ...`.
pub fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`pack_lower`], returning the symmetric matrix.
pub fn unpack_lower(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

pub fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Column means of a row-major `n x dim` table.
pub fn mean_rows(values: &[f64], dim: usize) -> DVector<f64> {
    let n = values.len() / dim;
    let mut m = DVector::zeros(dim);
    for row in values.chunks_exact(dim) {
        for (k, v) in row.iter().enumerate() {
            m[k] += v;
        }
    }
    m / n as f64
}

/// Scatter matrix `sum (x - centre)(x - centre)^T` of a row-major table.
pub fn scatter_rows(values: &[f64], dim: usize, centre: &DVector<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(dim, dim);
    let mut diff = vec![0.0; dim];
    for row in values.chunks_exact(dim) {
        for k in 0..dim {
            diff[k] = row[k] - centre[k];
        }
        for a in 0..dim {
            for b in 0..=a {
                s[(a, b)] += diff[a] * diff[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            s[(b, a)] = s[(a, b)];
        }
    }
    s
}

/// Sample covariance with the `n - 1` denominator.
pub fn covariance_rows(values: &[f64], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = values.len() / dim;
    let mean = mean_rows(values, dim);
    let s = scatter_rows(values, dim, &mean);
    let denom = (n.max(2) - 1) as f64;
    (mean, s / denom)
}

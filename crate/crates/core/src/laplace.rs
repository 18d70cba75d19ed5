//! Moment-based multivariate normal approximations of the full posterior built
//! from local draws, used as extra importance proposals.
//!
//! * Type 1 combines the per-part means and covariances by precision weighting,
//!   which is exact when every local posterior is normal.
//! * Type 2 is the mean and covariance of all pooled draws.
//! * Type 3 keeps the pooled mean but estimates the covariance from draws
//!   centred on their own part's mean, regularised by an inverse-Wishart prior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_pd, mean_rows, repair_pd, scatter_rows, Mvn};
use crate::mie::{
    mie1_estimate, mie2_estimate, mie3_estimate, Estimate, ImportanceProblem, Mie2Options, Normalisation,
};
use crate::model::{DrawSource, ParamDraws};
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LaplaceKind {
    #[serde(rename = "1")]
    Precision,
    #[serde(rename = "2")]
    Pooled,
    #[serde(rename = "3")]
    InverseWishart,
}

impl LaplaceKind {
    pub const ALL: [LaplaceKind; 3] = [LaplaceKind::Precision, LaplaceKind::Pooled, LaplaceKind::InverseWishart];

    pub fn tag(self) -> u8 {
        match self {
            LaplaceKind::Precision => 1,
            LaplaceKind::Pooled => 2,
            LaplaceKind::InverseWishart => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(LaplaceKind::Precision),
            2 => Ok(LaplaceKind::Pooled),
            3 => Ok(LaplaceKind::InverseWishart),
            _ => Err(Error::InvalidArgument(format!("Laplace type {tag} is not 1, 2 or 3"))),
        }
    }

    pub fn source(self) -> DrawSource {
        DrawSource::Laplace(self.tag())
    }
}

/// A normal approximation `N(mu, sigma)` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct LaplaceApprox {
    kind: LaplaceKind,
    density: Mvn,
    fallback_used: bool,
}

/// Serialised form of a [`LaplaceApprox`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRecord {
    #[serde(rename = "type")]
    pub type_tag: u8,
    pub mu: Vec<f64>,
    /// Row-major `p x p`.
    pub sigma: Vec<f64>,
    pub fallback_used: bool,
}

impl LaplaceApprox {
    /// Repair `sigma` if needed (symmetrise, then diagonal) and factorise.
    pub fn new(kind: LaplaceKind, mu: DVector<f64>, sigma: &DMatrix<f64>, mut fallback_used: bool) -> Result<Self> {
        let repaired = repair_pd(sigma)?;
        fallback_used |= repaired.diagonal_fallback;
        let density = Mvn::new(mu, repaired.matrix)?;
        Ok(Self {
            kind,
            density,
            fallback_used,
        })
    }

    pub fn kind(&self) -> LaplaceKind {
        self.kind
    }

    pub fn mu(&self) -> &DVector<f64> {
        self.density.mean()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        self.density.cov()
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        self.density.lower()
    }

    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.density.log_density(theta)
    }

    /// `0.5 log det(2 pi e Sigma)`.
    pub fn entropy(&self) -> f64 {
        self.density.entropy()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<ParamDraws> {
        let mut values = Vec::with_capacity(n * self.dim());
        for _ in 0..n {
            values.extend(self.density.sample(rng));
        }
        ParamDraws::new(self.dim(), values, self.kind.source())
    }

    pub fn to_record(&self) -> LaplaceRecord {
        let p = self.dim();
        let s = self.sigma();
        LaplaceRecord {
            type_tag: self.kind.tag(),
            mu: self.mu().as_slice().to_vec(),
            sigma: (0..p).flat_map(|i| (0..p).map(move |j| s[(i, j)])).collect(),
            fallback_used: self.fallback_used,
        }
    }

    pub fn from_record(r: &LaplaceRecord) -> Result<Self> {
        let p = r.mu.len();
        if r.sigma.len() != p * p {
            return Err(Error::InvalidArgument("sigma must have p * p entries".into()));
        }
        Self::new(
            LaplaceKind::from_tag(r.type_tag)?,
            DVector::from_column_slice(&r.mu),
            &DMatrix::from_row_slice(p, p, &r.sigma),
            r.fallback_used,
        )
    }
}

fn check_sets(local: &[&ParamDraws], min_each: usize) -> Result<usize> {
    let first = local
        .first()
        .ok_or_else(|| Error::InvalidArgument("no draws supplied".into()))?;
    let p = first.dim();
    if local.iter().any(|s| s.dim() != p) {
        return Err(Error::InvalidArgument("draw sets have differing dimensions".into()));
    }
    if let Some((j, s)) = local.iter().enumerate().find(|(_, s)| s.len() < min_each) {
        return Err(Error::InvalidArgument(format!(
            "draw set {j} has {} draws, need at least {min_each}",
            s.len()
        )));
    }
    Ok(p)
}

/// Per-part mean and sample covariance (`n - 1` denominator).
fn local_moments(set: &ParamDraws) -> (DVector<f64>, DMatrix<f64>) {
    crate::linalg::covariance_rows(set.values(), set.dim())
}

/// Precision-weighted combination plus the per-part precisions used.
struct Type1Parts {
    approx: LaplaceApprox,
    precisions: Vec<DMatrix<f64>>,
}

fn type1_parts(local: &[&ParamDraws]) -> Result<Type1Parts> {
    let p = check_sets(local, 0)?;
    check_sets(local, p + 1)?;
    let mut fallback = false;
    let mut total_prec = DMatrix::zeros(p, p);
    let mut shift = DVector::zeros(p);
    let mut precisions = Vec::with_capacity(local.len());
    for set in local {
        let (mean, cov) = local_moments(set);
        let repaired = repair_pd(&cov)?;
        fallback |= repaired.diagonal_fallback;
        let prec = inverse_pd(&repaired.matrix)?;
        total_prec += &prec;
        shift += &prec * mean;
        precisions.push(prec);
    }
    let sigma = inverse_pd(&total_prec)?;
    let mu = &sigma * shift;
    Ok(Type1Parts {
        approx: LaplaceApprox::new(LaplaceKind::Precision, mu, &sigma, fallback)?,
        precisions,
    })
}

/// Type 1: `Sigma = (sum_j S_j^-1)^-1`, `mu = Sigma sum_j S_j^-1 m_j` from the
/// per-part sample means `m_j` and covariances `S_j`. A singular `S_j` is
/// replaced by its diagonal.
pub fn laplace_type1(local: &[&ParamDraws]) -> Result<LaplaceApprox> {
    Ok(type1_parts(local)?.approx)
}

/// Type 1 together with the pooled draws `Sigma sum_j S_j^-1 theta_{j,h}` for
/// `h` up to the smallest local draw count.
pub fn laplace_type1_with_pooled(local: &[&ParamDraws]) -> Result<(LaplaceApprox, ParamDraws)> {
    let parts = type1_parts(local)?;
    let p = parts.approx.dim();
    let n_bar = local.iter().map(|s| s.len()).min().expect("non-empty");
    let weights: Vec<DMatrix<f64>> = parts
        .precisions
        .iter()
        .map(|prec| parts.approx.sigma() * prec)
        .collect();
    let mut values = Vec::with_capacity(n_bar * p);
    for h in 0..n_bar {
        let mut acc = DVector::zeros(p);
        for (set, w) in local.iter().zip(&weights) {
            acc += w * DVector::from_column_slice(set.row(h));
        }
        values.extend(acc.iter());
    }
    let pooled = ParamDraws::new(p, values, LaplaceKind::Precision.source())?;
    Ok((parts.approx, pooled))
}

/// Type 2: mean and covariance of all pooled draws.
pub fn laplace_type2(local: &[&ParamDraws]) -> Result<LaplaceApprox> {
    let p = check_sets(local, 1)?;
    let all = ParamDraws::concat(local, DrawSource::Pooled)?;
    if all.len() < p + 1 {
        return Err(Error::InvalidArgument(format!("need at least {} pooled draws", p + 1)));
    }
    let (mean, cov) = crate::linalg::covariance_rows(all.values(), p);
    LaplaceApprox::new(LaplaceKind::Pooled, mean, &cov, false)
}

/// Type 3: pooled mean with covariance
/// `(sum_j sum_h (theta_{j,h} - m_j)(theta_{j,h} - m_j)^T + psi) / (N + nu - p - 1)`.
/// Defaults: `psi = I`, `nu = p + 2`.
pub fn laplace_type3(local: &[&ParamDraws], psi: Option<&DMatrix<f64>>, nu: Option<f64>) -> Result<LaplaceApprox> {
    let p = check_sets(local, 1)?;
    let nu = nu.unwrap_or(p as f64 + 2.0);
    let n: usize = local.iter().map(|s| s.len()).sum();
    let denom = n as f64 + nu - p as f64 - 1.0;
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument(format!("N + nu - p - 1 = {denom} must be positive")));
    }
    let mut scatter = match psi {
        Some(m) if m.nrows() == p && m.ncols() == p => m.clone(),
        Some(_) => return Err(Error::InvalidArgument("psi must be p x p".into())),
        None => DMatrix::identity(p, p),
    };
    for set in local {
        let m = mean_rows(set.values(), p);
        scatter += scatter_rows(set.values(), p, &m);
    }
    let all = ParamDraws::concat(local, DrawSource::Pooled)?;
    let mean = mean_rows(all.values(), p);
    LaplaceApprox::new(LaplaceKind::InverseWishart, mean, &(scatter / denom), false)
}

/// Build the requested approximation with default hyperparameters.
pub fn build_laplace(kind: LaplaceKind, local: &[&ParamDraws]) -> Result<LaplaceApprox> {
    match kind {
        LaplaceKind::Precision => laplace_type1(local),
        LaplaceKind::Pooled => laplace_type2(local),
        LaplaceKind::InverseWishart => laplace_type3(local, None, None),
    }
}

/// Draw `n` points from each approximation in parallel, one RNG substream per type.
pub fn sample_laplace_draws(approxes: &[LaplaceApprox], n: usize, streams: &Streams) -> Result<Vec<ParamDraws>> {
    use rayon::prelude::*;
    approxes
        .par_iter()
        .map(|a| {
            let worker = a.kind().tag() as u64;
            let draws = a.sample(n, &mut streams.stream(worker, "laplace"))?;
            Ok(draws.with_seed(streams.trace(worker, "laplace")))
        })
        .collect()
}

/// Register `approx` as a normalised proposal for its block of pooled draws.
/// Returns the problem unchanged when no draws from it were pooled.
pub fn attach_laplace<'a>(problem: ImportanceProblem<'a>, approx: &LaplaceApprox) -> Result<ImportanceProblem<'a>> {
    let source = approx.kind().source();
    if problem.pooled().block(source).is_none() {
        return Ok(problem);
    }
    let draws = problem.draws().clone();
    let log_density: Vec<f64> = {
        use rayon::prelude::*;
        (0..draws.len())
            .into_par_iter()
            .with_min_len(1024)
            .map(|k| approx.log_density(draws.row(k)))
            .collect()
    };
    problem.with_normalised(source, log_density, Some(approx.entropy()))
}

/// LEMIE1/2/3: the MIE estimators over a problem whose components include
/// Laplace proposals (weighted `N_j / N` like every other component).
pub fn lemie_estimate<F: Fn(&[f64]) -> Vec<f64>, R: Rng + ?Sized>(
    variant: u8,
    problem: &ImportanceProblem<'_>,
    f: F,
    normalisation: Normalisation,
    rng: &mut R,
) -> Result<Estimate> {
    match variant {
        1 => mie1_estimate(problem, f),
        2 => mie2_estimate(
            problem,
            f,
            &Mie2Options {
                q: None,
                normalisation,
            },
        ),
        3 => mie3_estimate(problem, f, normalisation, rng),
        _ => Err(Error::InvalidArgument(format!("LEMIE variant {variant} is not 1, 2 or 3"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::covariance_rows;

    fn set(rows: &[[f64; 2]], j: usize) -> ParamDraws {
        ParamDraws::new(2, rows.concat(), DrawSource::Local(j)).unwrap()
    }

    #[test]
    fn single_part_type1_is_sample_moments_and_equals_type2() {
        let a = set(&[[0.0, 1.0], [1.0, 0.5], [2.0, 2.5], [0.5, -1.0]], 0);
        let t1 = laplace_type1(&[&a]).unwrap();
        let t2 = laplace_type2(&[&a]).unwrap();
        let (m, c) = covariance_rows(a.values(), 2);
        assert!((t1.mu() - &m).norm() < 1e-12);
        assert!((t1.sigma() - &c).norm() < 1e-12);
        assert!((t2.mu() - t1.mu()).norm() < 1e-12);
        assert!((t2.sigma() - t1.sigma()).norm() < 1e-12);
        let l = t1.chol();
        assert!((l * l.transpose() - t1.sigma()).norm() < 1e-8);
    }

    #[test]
    fn equal_covariances_halve() {
        let a = set(&[[0.0, 1.0], [1.0, 0.5], [2.0, 2.5], [0.5, -1.0]], 0);
        let shifted: Vec<[f64; 2]> = a.rows().map(|r| [r[0] + 3.0, r[1] - 1.0]).collect();
        let b = set(&shifted, 1);
        let t1 = laplace_type1(&[&a, &b]).unwrap();
        let (m, c) = covariance_rows(a.values(), 2);
        assert!((t1.sigma() - &c / 2.0).norm() < 1e-12);
        assert!((t1.mu()[0] - (m[0] + 1.5)).abs() < 1e-12);
        assert!((t1.mu()[1] - (m[1] - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn identical_draws_are_rejected() {
        let a = set(&[[1.0, 1.0]; 5], 0);
        assert!(laplace_type2(&[&a]).is_err());
        assert!(laplace_type1(&[&a]).is_err());
    }

    #[test]
    fn collinear_local_draws_fall_back_to_diagonal() {
        let a = set(&[[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], 0);
        let t1 = laplace_type1(&[&a]).unwrap();
        assert!(t1.fallback_used());
        assert_eq!(t1.sigma()[(0, 1)], 0.0);
    }

    #[test]
    fn symmetric_clusters() {
        let a = set(&[[-2.0, 0.0], [-2.0, 0.0], [2.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, -1.0]], 0);
        let t2 = laplace_type2(&[&a]).unwrap();
        assert!(t2.mu().norm() < 1e-15);
        assert!((t2.sigma()[(0, 0)] - 16.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn type3_formulas() {
        let a = set(&[[0.0, 1.0], [1.0, 0.5], [2.0, 2.5], [0.5, -1.0], [1.5, 0.0]], 0);
        let t3 = laplace_type3(&[&a], Some(&DMatrix::zeros(2, 2)), Some(4.0)).unwrap();
        let (_, c) = covariance_rows(a.values(), 2);
        assert!((t3.sigma() - &c * (4.0 / 6.0)).norm() < 1e-12);
        let big = DMatrix::identity(2, 2) * 1e9;
        let t3 = laplace_type3(&[&a], Some(&big), None).unwrap();
        assert!((t3.sigma()[(0, 0)] / (1e9 / 6.0) - 1.0).abs() < 1e-6);
        assert!(laplace_type3(&[&a], None, Some(-10.0)).is_err());
    }

    #[test]
    fn per_part_centering_removes_between_part_spread() {
        let a = set(&[[0.0, 0.0], [1.0, 0.5], [0.5, 1.0], [0.2, 0.1]], 0);
        let shifted: Vec<[f64; 2]> = a.rows().map(|r| [r[0] + 10.0, r[1] + 10.0]).collect();
        let b = set(&shifted, 1);
        let t2 = laplace_type2(&[&a, &b]).unwrap();
        let t3 = laplace_type3(&[&a, &b], None, None).unwrap();
        assert!(t3.sigma()[(0, 0)] < t2.sigma()[(0, 0)] / 10.0);
    }

    #[test]
    fn density_matches_quadratic_form() {
        let a = set(&[[0.0, 1.0], [1.0, 0.5], [2.0, 2.5], [0.5, -1.0]], 0);
        let t = laplace_type1(&[&a]).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.9]);
        let dev = &x - t.mu();
        let inv = t.sigma().clone().try_inverse().unwrap();
        let q = (dev.transpose() * inv * &dev)[(0, 0)];
        let direct = -(2.0 * std::f64::consts::PI).ln() - 0.5 * t.sigma().determinant().ln() - 0.5 * q;
        assert!((t.log_density(x.as_slice()) - direct).abs() < 1e-8);
        let rec = t.to_record();
        let back = LaplaceApprox::from_record(&rec).unwrap();
        assert!((back.log_density(x.as_slice()) - direct).abs() < 1e-8);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"type\":1"));
    }
}

mod common;

use common::{identity, BetaSetup};
use lemie_core::baselines::{
    cmc_pool, count_out_of_support, fractionate_prior, naive_estimate, ndpe_sample, niw_fractionated_nu,
    sdpe_sample, CmcVariant, DpeOptions, PriorParams,
};
use lemie_core::linalg::covariance_rows;
use lemie_core::model::{BetaParams, BetaPrior, IsoNormalPrior, MvnKnownCovPart, MvnPrior, NiwParams};
use lemie_core::samplers::{sample_beta_posterior, sample_mvn_known_sigma_posterior};
use lemie_core::{DrawSource, ParamDraws, Streams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

struct NormalStudy {
    parts: Vec<MvnKnownCovPart>,
    sigma: DMatrix<f64>,
}

impl NormalStudy {
    fn new(m: usize, per_part: usize, seed: u64) -> Self {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.5]);
        let chol = sigma.clone().cholesky().unwrap().l();
        let mut rng = Streams::new(seed).stream(0, "data");
        let parts = (0..m)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..per_part)
                    .map(|_| {
                        let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
                        (&chol * z).as_slice().iter().zip([2.0, -1.0]).map(|(a, b)| a + b).collect()
                    })
                    .collect();
                MvnKnownCovPart::new(&rows, sigma.clone()).unwrap()
            })
            .collect();
        Self { parts, sigma }
    }

    fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n: usize = self.parts.iter().map(|p| p.n()).sum();
        let xbar = self.parts.iter().fold(DVector::zeros(2), |a, p| a + p.xbar() * p.n() as f64) / n as f64;
        (xbar, &self.sigma / n as f64)
    }

    fn local(&self, n: usize, seed: u64) -> Vec<ParamDraws> {
        let streams = Streams::new(seed);
        self.parts
            .iter()
            .enumerate()
            .map(|(j, p)| {
                sample_mvn_known_sigma_posterior(&MvnPrior::flat(2), p, n, DrawSource::Local(j), &mut streams.stream(j as u64, "local"))
                    .unwrap()
            })
            .collect()
    }
}

#[test]
fn cmc2_is_exact_for_normal_posteriors() {
    let study = NormalStudy::new(4, 50, 1);
    let local = study.local(40_000, 2);
    let refs: Vec<&ParamDraws> = local.iter().collect();
    let pooled = cmc_pool(&refs, CmcVariant::Cmc2).unwrap();
    let (mu, cov) = study.posterior();
    let (m, c) = covariance_rows(pooled.values(), 2);
    let n = pooled.len() as f64;
    for i in 0..2 {
        assert!((m[i] - mu[i]).abs() < 4.0 * (cov[(i, i)] / n).sqrt());
        for j in 0..2 {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
            assert!((c[(i, j)] - cov[(i, j)]).abs() < 4.0 * se, "cov[{i},{j}] {} vs {}", c[(i, j)], cov[(i, j)]);
        }
    }
}

#[test]
fn sdpe_is_comparable_to_cmc2_on_normal_posteriors() {
    let study = NormalStudy::new(4, 50, 3);
    let local = study.local(5_000, 4);
    let refs: Vec<&ParamDraws> = local.iter().collect();
    let (mu, cov) = study.posterior();
    let cmc = cmc_pool(&refs, CmcVariant::Cmc2).unwrap();
    let sdpe = sdpe_sample(&refs, &DpeOptions::default(), &Streams::new(5)).unwrap();
    let err = |d: &ParamDraws| (DVector::from_vec(d.mean()) - &mu).norm();
    let scale = cov.trace().sqrt();
    assert!(err(&cmc) < 0.1 * scale);
    assert!(err(&sdpe.draws) < 0.5 * scale, "sdpe error {} vs scale {scale}", err(&sdpe.draws));
    assert!(sdpe.report.acceptance_rate > 0.0);
}

#[test]
fn naive_pooling_matches_part_mean_for_identical_parts() {
    let a = ParamDraws::new(1, vec![0.2, 0.4, 0.9], DrawSource::Local(0)).unwrap();
    let b = a.clone().with_source(DrawSource::Local(1));
    let e = naive_estimate(&[&a, &b], identity).unwrap();
    assert!((e.value[0] - 0.5).abs() < 1e-15);
    assert_eq!(e.weights.len(), 6);
}

#[test]
fn density_product_draws_outside_the_unit_interval_are_counted() {
    let setup = BetaSetup::new(1.0, 1.0, &[(0, 10), (1, 10), (0, 10), (0, 10)]);
    let frac = fractionate_prior(&PriorParams::Beta(BetaParams::new(0.01, 0.01).unwrap()), 4).unwrap();
    let PriorParams::Beta(fp) = frac.params else { unreachable!() };
    let streams = Streams::new(6);
    let local: Vec<ParamDraws> = setup
        .parts
        .iter()
        .enumerate()
        .map(|(j, &(s, n))| sample_beta_posterior(fp, s, n, 2_000, DrawSource::Local(j), &mut streams.stream(j as u64, "l")).unwrap())
        .collect();
    let refs: Vec<&ParamDraws> = local.iter().collect();
    let out = ndpe_sample(&refs, &DpeOptions::default(), &Streams::new(7)).unwrap();
    let outside = count_out_of_support(&out.draws, &BetaPrior::new(setup.prior));
    assert!(outside > 0 && outside < out.draws.len());
}

#[test]
fn niw_nu_grid_matches_formula() {
    for d in [1usize, 2, 3, 5, 8] {
        for m in [1usize, 2, 16, 64] {
            let mf = m as f64;
            let expected = -(mf - 1.0) / mf * d as f64 - (mf - 1.0) / mf;
            assert_eq!(niw_fractionated_nu(0.0, d, m), expected);
        }
    }
}

fn pairwise_constant(a: &[f64], b: &[f64]) -> bool {
    // (1/M) log pi - log pi_frac must not depend on theta.
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    diffs.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-10 * (1.0 + w[0].abs()))
}

proptest! {
    #[test]
    fn fractionated_beta_is_a_power(a in 0.05f64..5.0, b in 0.05f64..5.0, m in 1usize..100, xs in prop::collection::vec(0.001f64..0.999, 2..100)) {
        let prior = BetaParams::new(a, b).unwrap();
        let frac = fractionate_prior(&PriorParams::Beta(prior), m).unwrap();
        let lp = PriorParams::Beta(prior).log_prior().unwrap();
        let lf = frac.params.log_prior().unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| lp.log_density(&[*x]) / m as f64).collect();
        let frac_vals: Vec<f64> = xs.iter().map(|x| lf.log_density(&[*x])).collect();
        prop_assert!(pairwise_constant(&scaled, &frac_vals));
    }

    #[test]
    fn fractionated_normals_are_powers(m in 1usize..50, scale in 0.1f64..10.0, xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..100)) {
        let iso = IsoNormalPrior::new(2, scale).unwrap();
        let mvn = MvnPrior::new(DVector::from_vec(vec![0.5, -0.5]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        for prior in [PriorParams::MvnIid(iso), PriorParams::Mvn(mvn)] {
            let frac = fractionate_prior(&prior, m).unwrap();
            let lp = prior.log_prior().unwrap();
            let lf = frac.params.log_prior().unwrap();
            let scaled: Vec<f64> = xs.iter().map(|(a, b)| lp.log_density(&[*a, *b]) / m as f64).collect();
            let frac_vals: Vec<f64> = xs.iter().map(|(a, b)| lf.log_density(&[*a, *b])).collect();
            prop_assert!(pairwise_constant(&scaled, &frac_vals));
        }
    }

    #[test]
    fn fractionated_inverse_wishart_marginal_is_a_power(m in 1usize..70, nu in 0.0f64..10.0, diag in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0, -0.9f64..0.9), 2..60)) {
        let mut p = NiwParams::uninformative(2);
        p.nu = nu;
        p.psi = DMatrix::identity(2, 2) * 0.7;
        let frac = fractionate_prior(&PriorParams::Niw(p.clone()), m).unwrap();
        let PriorParams::Niw(q) = frac.params else { unreachable!() };
        let sigmas: Vec<DMatrix<f64>> = diag
            .iter()
            .map(|&(a, b, r)| {
                let c = r * (a * b).sqrt();
                DMatrix::from_row_slice(2, 2, &[a, c, c, b])
            })
            .collect();
        let scaled: Vec<f64> = sigmas.iter().map(|s| p.log_sigma_marginal(s) / m as f64).collect();
        let frac_vals: Vec<f64> = sigmas.iter().map(|s| q.log_sigma_marginal(s)).collect();
        prop_assert!(pairwise_constant(&scaled, &frac_vals));
    }
}

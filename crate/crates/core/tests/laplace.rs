mod common;

use std::sync::Arc;

use common::{identity, BetaSetup};
use lemie_core::federation::{run_in_out_in, Federation, ProtocolOptions};
use lemie_core::laplace::{
    attach_laplace, laplace_type1, laplace_type1_with_pooled, laplace_type2, lemie_estimate,
    sample_laplace_draws, LaplaceApprox, LaplaceKind,
};
use lemie_core::mie::{kl_hat, ImportanceProblem, Normalisation, Scheme};
use lemie_core::model::{LogPrior, MvnKnownCovPart, MvnPrior, PartLikelihood};
use lemie_core::samplers::sample_mvn_known_sigma_posterior;
use lemie_core::{DrawSource, Error, ModelSpec, ParamDraws, Streams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn normal_parts(m: usize, per_part: usize, seed: u64) -> (MvnPrior, Vec<MvnKnownCovPart>, DMatrix<f64>) {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
    let chol = sigma.clone().cholesky().unwrap().l();
    let mut rng = Streams::new(seed).stream(0, "data");
    let parts = (0..m)
        .map(|j| {
            let rows: Vec<Vec<f64>> = (0..per_part)
                .map(|_| {
                    let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let x = &chol * z + DVector::from_vec(vec![1.0 + j as f64 * 0.1, -0.5]);
                    x.as_slice().to_vec()
                })
                .collect();
            MvnKnownCovPart::new(&rows, sigma.clone()).unwrap()
        })
        .collect();
    (MvnPrior::flat(2), parts, sigma)
}

#[test]
fn type1_pooled_draws_match_normal_posterior() {
    let (prior, parts, sigma) = normal_parts(4, 30, 11);
    let streams = Streams::new(12);
    let local: Vec<ParamDraws> = parts
        .iter()
        .enumerate()
        .map(|(j, p)| {
            sample_mvn_known_sigma_posterior(&prior, p, 20_000, DrawSource::Local(j), &mut streams.stream(j as u64, "local"))
                .unwrap()
        })
        .collect();
    let refs: Vec<&ParamDraws> = local.iter().collect();
    let (approx, pooled) = laplace_type1_with_pooled(&refs).unwrap();

    let n: usize = parts.iter().map(|p| p.n()).sum();
    let xbar = parts.iter().fold(DVector::zeros(2), |acc, p| acc + p.xbar() * p.n() as f64) / n as f64;
    let post_cov = &sigma / n as f64;
    let (m, c) = lemie_core::linalg::covariance_rows(pooled.values(), 2);
    for k in 0..2 {
        let se = (post_cov[(k, k)] / pooled.len() as f64).sqrt();
        assert!((m[k] - xbar[k]).abs() < 4.0 * se);
        assert!((approx.mu()[k] - xbar[k]).abs() < 4.0 * se);
        assert!((c[(k, k)] / post_cov[(k, k)] - 1.0).abs() < 0.05);
        assert!((approx.sigma()[(k, k)] / post_cov[(k, k)] - 1.0).abs() < 0.05);
    }
}

#[test]
fn sampled_moments_recover_the_approximation() {
    let mu = DVector::from_vec(vec![0.5, -1.0, 2.0]);
    let sigma = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.5]);
    let approx = LaplaceApprox::new(LaplaceKind::Pooled, mu.clone(), &sigma, false).unwrap();
    let n = 40_000;
    let draws = approx.sample(n, &mut Streams::new(5).stream(0, "t")).unwrap();
    let refit = laplace_type2(&[&draws]).unwrap();
    for i in 0..3 {
        let se_mean = (sigma[(i, i)] / n as f64).sqrt();
        assert!((refit.mu()[i] - mu[i]).abs() < 4.0 * se_mean);
        for j in 0..3 {
            let se_cov = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64).sqrt();
            assert!((refit.sigma()[(i, j)] - sigma[(i, j)]).abs() < 4.0 * se_cov);
        }
    }
}

#[test]
fn draws_use_distinct_reproducible_substreams() {
    let a = LaplaceApprox::new(LaplaceKind::Precision, DVector::zeros(2), &DMatrix::identity(2, 2), false).unwrap();
    let b = LaplaceApprox::new(LaplaceKind::Pooled, DVector::zeros(2), &DMatrix::identity(2, 2), false).unwrap();
    let streams = Streams::new(3);
    let first = sample_laplace_draws(&[a.clone(), b.clone()], 10, &streams).unwrap();
    let again = sample_laplace_draws(&[a, b], 10, &streams).unwrap();
    assert_eq!(first[0].values(), again[0].values());
    assert_ne!(first[0].values(), first[1].values());
    assert_eq!(first[1].source(), DrawSource::Laplace(2));
}

#[test]
fn absent_laplace_draws_change_nothing() {
    let setup = BetaSetup::new(1.0, 1.0, &[(5, 40), (12, 40)]);
    let local = setup.local_draws(2_000, 4);
    let run = run_in_out_in(&setup.model, &local, ProtocolOptions::default()).unwrap();
    let refs: Vec<&ParamDraws> = local.iter().collect();
    let approx = laplace_type1(&refs).unwrap();
    let plain = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let with = attach_laplace(plain.clone(), &approx).unwrap();
    assert!(!with.has_normalised());
    for v in 1..=3u8 {
        let a = lemie_estimate(v, &plain, identity, Normalisation::SelfNormalised, &mut Streams::new(1).stream(0, "m")).unwrap();
        let b = lemie_estimate(v, &with, identity, Normalisation::SelfNormalised, &mut Streams::new(1).stream(0, "m")).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.weights.norm_weights, b.weights.norm_weights);
    }
}

#[test]
fn lemie_recovers_beta_mean_and_uses_closed_form_entropy() {
    let setup = BetaSetup::new(1.0, 1.0, &[(20, 100), (30, 100), (25, 100)]);
    let local = setup.local_draws(4_000, 7);
    let refs: Vec<&ParamDraws> = local.iter().collect();
    let approxes: Vec<LaplaceApprox> = LaplaceKind::ALL
        .iter()
        .map(|&k| lemie_core::laplace::build_laplace(k, &refs).unwrap())
        .collect();
    let fed = Federation::new(setup.model.clone(), ProtocolOptions::default());
    let mut run = fed.run_in_out_in(&local).unwrap();
    let extra = sample_laplace_draws(&approxes, 1_000, &Streams::new(8)).unwrap();
    fed.extend_with_proposal_draws(&mut run, &extra).unwrap();
    assert_eq!(run.pooled.len(), 15_000);

    let mut problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    for a in &approxes {
        problem = attach_laplace(problem, a).unwrap();
    }
    assert_eq!(problem.components().len(), 6);
    let truth = setup.posterior().mean();
    for v in 1..=3u8 {
        let e = lemie_estimate(v, &problem, identity, Normalisation::SelfNormalised, &mut Streams::new(9).stream(0, "m")).unwrap();
        assert!((e.value[0] - truth).abs() < 0.005, "variant {v}: {} vs {truth}", e.value[0]);
        assert!(matches!(e.weights.scheme, Scheme::Lemie1 | Scheme::Lemie2 | Scheme::Lemie3));
    }
    // Type 1 is close to the true normal-ish posterior, so its KL should be small.
    let k = kl_hat(&problem, 3).unwrap();
    assert!(k.value < 0.05, "{:?}", k);
}

#[derive(Debug)]
struct HalfLine;

impl PartLikelihood for HalfLine {
    fn dim(&self) -> usize {
        1
    }
    fn log_lik(&self, theta: &[f64]) -> f64 {
        if theta[0] > 0.0 {
            -0.5 * (theta[0] - 1.0).powi(2)
        } else {
            f64::NEG_INFINITY
        }
    }
    fn size(&self) -> usize {
        1
    }
}

#[test]
fn positivity_failure_when_only_laplace_covers_the_target() {
    let prior: Arc<dyn LogPrior> = Arc::new(MvnPrior::flat(1));
    let model = ModelSpec::new(prior, vec![Arc::new(HalfLine) as Arc<dyn PartLikelihood>]).unwrap();
    let local = vec![ParamDraws::new(1, vec![0.5, 1.0, 1.5, 2.0], DrawSource::Local(0)).unwrap()];
    let fed = Federation::new(model.clone(), ProtocolOptions::default());
    let mut run = fed.run_in_out_in(&local).unwrap();
    let approx = LaplaceApprox::new(LaplaceKind::Pooled, DVector::from_vec(vec![1.0]), &DMatrix::identity(1, 1), false).unwrap();
    let extra = vec![ParamDraws::new(1, vec![1.2, -1.0], DrawSource::Laplace(2)).unwrap()];
    fed.extend_with_proposal_draws(&mut run, &extra).unwrap();
    let problem = ImportanceProblem::new(model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let problem = attach_laplace(problem, &approx).unwrap();
    let only_laplace = problem.select(|s| matches!(s, DrawSource::Laplace(_))).unwrap();
    let e = lemie_estimate(2, &only_laplace, identity, Normalisation::SelfNormalised, &mut Streams::new(1).stream(0, "m")).unwrap();
    assert!((e.value[0] - 1.2).abs() < 1e-12);
    // A proposal with zero density where the target is positive.
    let lp: Vec<f64> = (0..run.pooled.len()).map(|_| f64::NEG_INFINITY).collect();
    let broken = ImportanceProblem::new(model.prior().as_ref(), &run.pooled, &run.loglik)
        .unwrap()
        .with_normalised(DrawSource::Laplace(2), lp, Some(1.0))
        .and_then(|p| p.select(|s| matches!(s, DrawSource::Laplace(_))));
    let err = broken.and_then(|p| lemie_estimate(2, &p, identity, Normalisation::SelfNormalised, &mut Streams::new(1).stream(0, "m")));
    assert!(matches!(err, Err(Error::Positivity { .. })), "{err:?}");
}

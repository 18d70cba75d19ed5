mod common;

use common::{identity, mean_sd, BetaSetup};
use lemie_core::federation::{LogLikMatrix, PooledDraws};
use lemie_core::mie::{
    chat_estimates, kl_hat, mie1_estimate, mie2_estimate, mie3_estimate, snis_log_weights,
    weighted_quantile, ImportanceProblem, Mie2Options, Normalisation, Scheme, KL_FLOOR,
};
use lemie_core::model::{BetaParams, BetaPrior};
use lemie_core::{DrawSource, Error, ParamDraws, Streams};

#[test]
fn single_part_weights_are_uniform() {
    let setup = BetaSetup::new(1.0, 1.0, &[(3, 20)]);
    let run = setup.run(500, 1);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    assert!(snis_log_weights(&problem, 0).iter().all(|&w| w == 0.0));
    assert_eq!(chat_estimates(&problem).unwrap(), vec![0.0]);
    assert_eq!(kl_hat(&problem, 0).unwrap().raw, 0.0);
    let plain = run.pooled.draws().mean()[0];
    let e1 = mie1_estimate(&problem, identity).unwrap();
    let e2 = mie2_estimate(&problem, identity, &Mie2Options::default()).unwrap();
    let e3 = mie3_estimate(&problem, identity, Normalisation::SelfNormalised, &mut Streams::new(1).stream(0, "mie3")).unwrap();
    for e in [&e1, &e2, &e3] {
        assert!((e.value[0] - plain).abs() < 1e-10);
        assert!(e.weights.norm_weights.iter().all(|&w| (w - 1.0 / 500.0).abs() < 1e-15));
    }
    assert_eq!(e3.weights.len(), 500);
}

#[test]
fn local_weights_equal_density_ratio() {
    let setup = BetaSetup::new(2.0, 3.0, &[(4, 30), (9, 25)]);
    let run = setup.run(200, 2);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let lw = snis_log_weights(&problem, 0);
    let post = setup.posterior();
    let local = setup.local(0);
    for (h, theta) in run.pooled.draws().rows().take(200).enumerate() {
        let x = theta[0];
        let ratio = (post.a - local.a) * x.ln() + (post.b - local.b) * (1.0 - x).ln();
        assert!((lw[h] - ratio).abs() < 1e-10);
    }
}

#[test]
fn normalising_constant_estimates_match_beta_function_ratio() {
    let setup = BetaSetup::new(1.0, 1.0, &[(12, 50), (30, 50)]);
    let run = setup.run(100_000, 3);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let log_chat = chat_estimates(&problem).unwrap();
    for j in 0..2 {
        let w: Vec<f64> = snis_log_weights(&problem, j).iter().map(|l| l.exp()).collect();
        let (m, sd) = mean_sd(&w);
        let se = sd / (w.len() as f64).sqrt();
        let truth = setup.log_chat_truth(j).exp();
        assert!((log_chat[j].exp() - m).abs() < 1e-12 * m);
        assert!((m - truth).abs() < 3.0 * se, "part {j}: {m} vs {truth} (se {se})");
    }
}

#[test]
fn estimators_recover_conjugate_mean() {
    let setup = BetaSetup::new(1.0, 1.0, &[(12, 50), (18, 50)]);
    let run = setup.run(20_000, 4);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let truth = setup.posterior().mean();
    let post = setup.posterior();
    let sd = (post.a * post.b / ((post.a + post.b).powi(2) * (post.a + post.b + 1.0))).sqrt();
    let e1 = mie1_estimate(&problem, identity).unwrap();
    let e2 = mie2_estimate(&problem, identity, &Mie2Options::default()).unwrap();
    let e3 = mie3_estimate(&problem, identity, Normalisation::SelfNormalised, &mut Streams::new(4).stream(0, "m3")).unwrap();
    for e in [&e1, &e2, &e3] {
        let se = sd / e.weights.ess().sqrt();
        assert!((e.value[0] - truth).abs() < 3.0 * se, "{}: {} vs {truth}", e.weights.scheme, e.value[0]);
        let s: f64 = e.weights.norm_weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(e.weights.log_weights.iter().all(|w| !w.is_nan()));
    }
    assert_eq!(e1.weights.scheme, Scheme::Mie1);
    assert_eq!(e2.weights.scheme, Scheme::Mie2);
    let unnorm = mie2_estimate(&problem, identity, &Mie2Options { q: None, normalisation: Normalisation::Unnormalised }).unwrap();
    assert!((unnorm.value[0] - truth).abs() < 0.01);
}

#[test]
fn identical_blocks_reduce_to_single_snis() {
    let setup = BetaSetup::new(1.0, 1.0, &[(5, 40), (5, 40)]);
    let draws = setup.local_draws(300, 5);
    let same = vec![draws[0].clone(), draws[0].clone().with_source(DrawSource::Local(1))];
    let run = lemie_core::federation::run_in_out_in(&setup.model, &same, Default::default()).unwrap();
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let e1 = mie1_estimate(&problem, identity).unwrap();
    let single = problem.select(|s| s == DrawSource::Local(0)).unwrap();
    let e_single = mie1_estimate(&single, identity).unwrap();
    assert!((e1.value[0] - e_single.value[0]).abs() < 1e-12);
    let k0 = kl_hat(&problem, 0).unwrap().raw;
    let k1 = kl_hat(&problem, 1).unwrap().raw;
    assert!((k0 - k1).abs() < 1e-12);
}

fn quadrature_kl(p: BetaParams, q: BetaParams) -> f64 {
    // midpoint rule on a fine grid; both densities are smooth and bounded here
    let n = 2_000_000;
    let h = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            let lp = p.log_pdf(x);
            lp.exp() * (lp - q.log_pdf(x)) * h
        })
        .sum()
}

#[test]
fn kl_estimate_matches_quadrature() {
    let setup = BetaSetup::new(1.0, 1.0, &[(6, 20), (14, 30)]);
    let run = setup.run(100_000, 6);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let log_chat = chat_estimates(&problem).unwrap();
    for j in 0..2 {
        let est = kl_hat(&problem, j).unwrap();
        let truth = quadrature_kl(setup.local(j), setup.posterior());
        let lw = snis_log_weights(&problem, j);
        let chat = log_chat[j].exp();
        let infl: Vec<f64> = lw.iter().map(|l| -l + l.exp() / chat).collect();
        let se = mean_sd(&infl).1 / (lw.len() as f64).sqrt();
        assert!((est.raw - truth).abs() < 3.0 * se, "part {j}: {} vs {truth} (se {se})", est.raw);
    }
}

#[test]
fn mie3_concentrates_on_exact_component() {
    // Part 1 holds no data, so the first local posterior is the target itself.
    let setup = BetaSetup::new(1.0, 1.0, &[(7, 30), (0, 0)]);
    let run = setup.run(5_000, 7);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let k0 = kl_hat(&problem, 0).unwrap();
    assert!(k0.floored && k0.value == KL_FLOOR);
    let e3 = mie3_estimate(&problem, identity, Normalisation::SelfNormalised, &mut Streams::new(7).stream(0, "m3")).unwrap();
    assert!(e3.weights.component_weights[0] > 0.999_999);
    let from_first = e3.weights.sources.iter().filter(|&&s| s == DrawSource::Local(0)).count();
    assert!(from_first >= 4_999);
}

#[test]
fn row_shifts_leave_estimates_unchanged() {
    let setup = BetaSetup::new(1.0, 1.0, &[(3, 30), (5, 30), (9, 30)]);
    let run = setup.run(2_000, 8);
    let shifted_rows: Vec<Vec<f64>> = (0..3)
        .map(|j| run.loglik.row(j).iter().map(|v| v + if j == 1 { 37.5 } else { 0.0 }).collect())
        .collect();
    let shifted = LogLikMatrix::from_rows(shifted_rows, run.loglik.column_source().to_vec()).unwrap();
    let prior = setup.model.prior().as_ref();
    let a = ImportanceProblem::new(prior, &run.pooled, &run.loglik).unwrap();
    let b = ImportanceProblem::new(prior, &run.pooled, &shifted).unwrap();
    let pairs = [
        (mie1_estimate(&a, identity).unwrap(), mie1_estimate(&b, identity).unwrap()),
        (
            mie2_estimate(&a, identity, &Mie2Options::default()).unwrap(),
            mie2_estimate(&b, identity, &Mie2Options::default()).unwrap(),
        ),
        (
            mie3_estimate(&a, identity, Normalisation::SelfNormalised, &mut Streams::new(8).stream(0, "m3")).unwrap(),
            mie3_estimate(&b, identity, Normalisation::SelfNormalised, &mut Streams::new(8).stream(0, "m3")).unwrap(),
        ),
    ];
    for (x, y) in &pairs {
        assert!((x.value[0] - y.value[0]).abs() < 1e-10);
        for (u, v) in x.weights.norm_weights.iter().zip(&y.weights.norm_weights) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}

#[test]
fn error_shrinks_as_draws_quadruple() {
    let setup = BetaSetup::new(1.0, 1.0, &[(20, 100), (30, 100)]);
    let truth = setup.posterior().mean();
    let rmse = |n: usize, scheme: u8| {
        let mut sq = 0.0;
        for r in 0..40 {
            let run = setup.run(n, 1000 + r);
            let p = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
            let e = if scheme == 1 {
                mie1_estimate(&p, identity).unwrap()
            } else {
                mie2_estimate(&p, identity, &Mie2Options::default()).unwrap()
            };
            sq += (e.value[0] - truth).powi(2);
        }
        (sq / 40.0).sqrt()
    };
    for scheme in [1, 2] {
        let ratio = rmse(500, scheme) / rmse(2_000, scheme);
        assert!(ratio > 1.4 && ratio < 2.9, "scheme {scheme}: error ratio {ratio}");
    }
}

#[test]
fn mixture_positivity_is_weaker_than_per_block() {
    // The first draw of block 1 has zero likelihood under part 0, so the target
    // vanishes there: block 1 gives it zero weight and MIE2 does the same
    // without tripping the mixture positivity check.
    let d0 = ParamDraws::new(1, vec![0.2, 0.3], DrawSource::Local(0)).unwrap();
    let d1 = ParamDraws::new(1, vec![0.4, 0.5], DrawSource::Local(1)).unwrap();
    let pooled = PooledDraws::from_blocks(&[&d0, &d1]).unwrap();
    let rows = vec![vec![-1.0, -1.3, f64::NEG_INFINITY, -1.1], vec![-2.0, -2.1, -0.5, -0.4]];
    let ll = LogLikMatrix::from_rows(rows, pooled.column_sources()).unwrap();
    let prior = BetaPrior::new(BetaParams::new(1.0, 1.0).unwrap());
    let problem = ImportanceProblem::new(&prior, &pooled, &ll).unwrap();
    assert_eq!(snis_log_weights(&problem, 1)[0], f64::NEG_INFINITY);
    let e1 = mie1_estimate(&problem, identity).unwrap();
    let e2 = mie2_estimate(&problem, identity, &Mie2Options::default()).unwrap();
    assert_eq!(e2.weights.norm_weights[2], 0.0);
    assert!(e1.value[0].is_finite() && e2.value[0].is_finite());

    // A block whose weights all vanish is rejected by MIE1 ...
    let rows = vec![vec![-1.0, -1.0, -1.2, -1.1], vec![f64::NEG_INFINITY, f64::NEG_INFINITY, -0.5, -0.4]];
    let ll = LogLikMatrix::from_rows(rows, pooled.column_sources()).unwrap();
    let problem = ImportanceProblem::new(&prior, &pooled, &ll).unwrap();
    assert!(matches!(mie1_estimate(&problem, identity), Err(Error::DegenerateBlock { block: 0 })));
    // ... while MIE2 still produces an estimate from the other block.
    let e2 = mie2_estimate(&problem, identity, &Mie2Options::default()).unwrap();
    assert!((e2.value[0] - 0.45).abs() < 0.05 + 1e-12);
}

#[test]
fn weighted_quantile_matches_incomplete_beta_inverse() {
    let setup = BetaSetup::new(1.0, 1.0, &[(1, 1000)]);
    let run = setup.run(200_000, 9);
    let problem = ImportanceProblem::new(setup.model.prior().as_ref(), &run.pooled, &run.loglik).unwrap();
    let e = mie2_estimate(&problem, identity, &Mie2Options::default()).unwrap();
    let post = setup.posterior();
    for p in [0.025, 0.5, 0.975] {
        let q = weighted_quantile(&e.weights, 0, p).unwrap();
        let truth = post.quantile(p);
        let se = (p * (1.0 - p) / 200_000.0).sqrt() / post.pdf(truth);
        assert!((q - truth).abs() < 4.0 * se, "p={p}: {q} vs {truth}");
    }
}

use lemie_core::diagnostics::{
    cross_entropy, ess_from_weights, fit_gpd_khat, kl_divergence, GpdOptions, TailRule, TruthEntropy,
};
use lemie_core::linalg::Mvn;
use lemie_core::mie::{Bandwidth, WeightedKde};
use lemie_core::{DrawSource, ParamDraws, Streams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn gpd_log_sample(k: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Streams::new(seed).stream(0, "gpd");
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let x = if k == 0.0 { -(1.0 - u).ln() } else { ((1.0 - u).powf(-k) - 1.0) / k };
            x.ln()
        })
        .collect()
}

fn whole() -> GpdOptions {
    GpdOptions {
        tail: TailRule::Whole,
        ..Default::default()
    }
}

#[test]
fn khat_recovers_synthetic_shapes() {
    for (i, k) in [0.0, 0.3, 0.5, 0.7].into_iter().enumerate() {
        let fit = fit_gpd_khat(&gpd_log_sample(k, 10_000, 40 + i as u64), &whole());
        assert!((fit.khat - k).abs() < 0.05, "k = {k}: {fit:?}");
    }
}

#[test]
fn standard_tail_rule_sees_heavy_tails() {
    let light = fit_gpd_khat(&gpd_log_sample(0.0, 10_000, 1), &GpdOptions::default());
    let heavy = fit_gpd_khat(&gpd_log_sample(0.9, 10_000, 2), &GpdOptions::default());
    assert_eq!(light.tail_count, 300);
    assert!(light.khat < 0.5 && heavy.khat > 0.7, "{light:?} {heavy:?}");
}

fn normal_draws(mean: f64, n: usize, seed: u64) -> ParamDraws {
    let d = Mvn::new(DVector::from_element(1, mean), DMatrix::identity(1, 1)).unwrap();
    let mut rng = Streams::new(seed).stream(0, "truth");
    let v: Vec<f64> = (0..n).flat_map(|_| d.sample(&mut rng)).collect();
    ParamDraws::new(1, v, DrawSource::Truth).unwrap()
}

#[test]
fn gaussian_cross_entropy_and_kl() {
    let truth = normal_draws(0.0, 20_000, 3);
    let std = Mvn::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
    let shifted = Mvn::new(DVector::from_element(1, 1.0), DMatrix::identity(1, 1)).unwrap();
    let h = cross_entropy(&truth, |t| std.log_density(t)).unwrap();
    let exact = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    assert!((h.value - exact).abs() < 3.0 * h.se);
    let kl = kl_divergence(&truth, |t| shifted.log_density(t), TruthEntropy::Exact(exact)).unwrap();
    assert!((kl.value - 0.5).abs() < 3.0 * kl.se, "{kl:?}");
    let log_pi = |t: &[f64]| std.log_density(t);
    let paired = kl_divergence(&truth, |t| shifted.log_density(t), TruthEntropy::LogDensity(&log_pi)).unwrap();
    assert!((paired.value - 0.5).abs() < 3.0 * paired.se);
    let zero = kl_divergence(&truth, |t| std.log_density(t), TruthEntropy::LogDensity(&log_pi)).unwrap();
    assert_eq!(zero.value, 0.0);
}

#[test]
fn narrow_kde_far_away_is_huge() {
    let truth = normal_draws(0.0, 2_000, 4);
    let kde = WeightedKde::new(&[50.0, 50.1], 1, &[0.5, 0.5], &Bandwidth::Fixed(vec![0.01])).unwrap();
    let ce = cross_entropy(&truth, |t| kde.log_density(t)).unwrap();
    assert!(ce.infinite || ce.value > 1e4, "{ce:?}");
}

#[test]
fn kde_of_truth_scored_on_fresh_truth_is_nonnegative() {
    let fit = normal_draws(0.0, 5_000, 5);
    let fresh = normal_draws(0.0, 5_000, 6);
    let kde = WeightedKde::new(fit.values(), 1, &vec![1.0; 5_000], &Bandwidth::Silverman).unwrap();
    let std = Mvn::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
    let log_pi = |t: &[f64]| std.log_density(t);
    let kl = kl_divergence(&fresh, |t| kde.log_density(t), TruthEntropy::LogDensity(&log_pi)).unwrap();
    assert!(kl.value > -3.0 * kl.se);
    assert!(kl.value < 0.02);
}

proptest! {
    #[test]
    fn ess_is_scale_free_and_bounded(w in prop::collection::vec(1e-6f64..1e3, 1..60), c in 1e-3f64..1e3) {
        let e = ess_from_weights(&w);
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        prop_assert!((e - ess_from_weights(&scaled)).abs() < 1e-9 * e);
        prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn khat_ignores_log_weight_shifts(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let lw = gpd_log_sample(0.4, 400, seed);
        let moved: Vec<f64> = lw.iter().map(|v| v + shift).collect();
        let a = fit_gpd_khat(&lw, &GpdOptions::default());
        let b = fit_gpd_khat(&moved, &GpdOptions::default());
        prop_assert!((a.khat - b.khat).abs() < 1e-6);
    }
}

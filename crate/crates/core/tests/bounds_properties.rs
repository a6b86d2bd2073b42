use msmd::bounds::{
    bound_a, deviation_bound, deviation_probability, deviation_threshold_constant, oracle_bound,
    rate_euclid, rate_l1l2, rate_weighted, sqrt_prior_sum, weighted_parameters, BoundInputs,
    ClassPrior,
};
use msmd::smd::constant_step;
use msmd::synth::power_law_prior;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn oracle_bound_at_constant_step(u in 0.01f64..100.0, g in 0.01f64..100.0, n in 1usize..100_000) {
        let s = constant_step(u, g, n).unwrap();
        let closed = 2f64.sqrt() * u * g / (n as f64).sqrt();
        let b = oracle_bound(u, g, &s).unwrap();
        prop_assert!((b - closed).abs() <= 1e-12 * closed);
    }

    #[test]
    fn deviation_threshold_constant_matches_general_form(
        u in 0.1f64..10.0, g in 0.1f64..10.0, n in 1usize..10_000, sigma2 in 0.1f64..10.0, theta in 0.0f64..10.0
    ) {
        let s = constant_step(u, g, n).unwrap();
        let inp = BoundInputs::new(1.0, 1.0, 1.0, 2, n).unwrap().with_deviation(sigma2, theta, g);
        let general = deviation_bound(&inp, u, &s).unwrap().threshold;
        let closed = deviation_threshold_constant(u, g, n, sigma2, theta);
        prop_assert!((general - closed).abs() <= 1e-10 * closed);
    }
}

#[test]
fn rates_are_monotone() {
    let ks = [2, 3, 5, 10, 50, 100, 1000];
    let ns = [1, 10, 100, 1000, 10_000];
    for (omega, x, rho) in [(1.0, 1.0, 1.0), (2.5, 0.3, 0.7)] {
        for &n in &ns {
            let mut prev = (0.0, 0.0, 0.0);
            for &k in &ks {
                let inp = BoundInputs::new(omega, x, rho, k, n).unwrap();
                let uniform = ClassPrior::uniform(k).unwrap();
                let r = (
                    rate_euclid(&inp),
                    rate_l1l2(&inp).unwrap(),
                    rate_weighted(&inp, &uniform),
                );
                assert!(r.0 >= prev.0 && r.1 >= prev.1 && r.2 >= prev.2 * (1.0 - 1e-12));
                prev = r;
            }
        }
        for &k in &ks {
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for &n in &ns {
                let inp = BoundInputs::new(omega, x, rho, k, n).unwrap();
                let r = (rate_euclid(&inp), rate_l1l2(&inp).unwrap());
                assert!(r.0 <= prev.0 && r.1 <= prev.1);
                prev = r;
            }
        }
    }
}

#[test]
fn sqrt_prior_sum_is_dominated_by_sqrt_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let k = rng.random_range(1..200);
        let raw: Vec<f64> = (0..k)
            .map(|_| rng.random::<f64>().powi(rng.random_range(1..6)))
            .collect();
        let s: f64 = raw.iter().sum();
        if s == 0.0 {
            continue;
        }
        let prior = ClassPrior::new(raw.iter().map(|v| v / s).collect()).unwrap();
        assert!(sqrt_prior_sum(&prior) <= (k as f64).sqrt() * (1.0 + 1e-12));
    }
}

#[test]
fn power_law_sum_saturates() {
    let b = |k| sqrt_prior_sum(&power_law_prior(k, 3.0).unwrap());
    let (b2, b3) = (b(100), b(1000));
    assert!(b3 > b2);
    // The tail sum_{i>100} i^(-3/2) ~ 2 / sqrt(100) is not small next to
    // B(100) ~ 2.2: going to k = 1000 adds about 5.6%, and the limit
    // zeta(3/2) / sqrt(zeta(3)) ~ 2.383 is about 8% above B(100).
    let growth = b3 / b2 - 1.0;
    let tail: f64 = (101..=1000).map(|i| (i as f64).powf(-1.5)).sum();
    let norm3: f64 = (1..=1000).map(|i| (i as f64).powi(-3)).sum::<f64>().sqrt();
    let norm2: f64 = (1..=100).map(|i| (i as f64).powi(-3)).sum::<f64>().sqrt();
    let head: f64 = (1..=100).map(|i| (i as f64).powf(-1.5)).sum();
    let expect = ((head + tail) / norm3) / (head / norm2) - 1.0;
    assert!((growth - expect).abs() < 1e-12, "{growth} vs {expect}");
    assert!(growth > 0.05 && growth < 0.06, "{growth}");
    assert!(b(100_000) < 2.39);
    // Partial sums of i^(-3/2) over the normalizer sqrt(zeta(3)).
    let zeta3: f64 = (1..200_000).map(|i| (i as f64).powi(-3)).sum();
    let partial: f64 = (1..=100).map(|i| (i as f64).powf(-1.5)).sum();
    let norm: f64 = (1..=100).map(|i| (i as f64).powi(-3)).sum::<f64>().sqrt();
    assert!((b2 - partial / norm).abs() < 1e-12);
    assert!((norm - zeta3.sqrt()).abs() < 1e-3);
}

#[test]
fn deviation_probability_range() {
    // At theta = 0 the expression is e + 1, and it drops below e at theta ~ 0.43.
    let mut prev = f64::INFINITY;
    for i in 0..=2000 {
        let theta = i as f64 * 0.01;
        let p = deviation_probability(theta);
        assert!(p <= std::f64::consts::E + 1.0 + 1e-15);
        assert!(p < prev);
        prev = p;
        if theta >= 0.44 {
            assert!(p <= std::f64::consts::E);
        }
        if theta >= 5.1 {
            assert!(p <= 0.05, "theta {theta}: {p}");
        }
    }
    assert!(deviation_probability(0.0) > 1.0);
}

#[test]
fn weighted_choice_attains_the_closed_form_variance_bound() {
    // With b = sqrt(p) and c proportional to p^(1/4), A = 2 sum sqrt(p).
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let k = rng.random_range(2..50);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let prior = ClassPrior::new(raw.iter().map(|v| v / s).collect()).unwrap();
        let wp = weighted_parameters(&prior);
        let a = bound_a(&prior, &wp.b, &wp.c).unwrap();
        assert!((a - 2.0 * sqrt_prior_sum(&prior)).abs() < 1e-10 * a);
    }
}

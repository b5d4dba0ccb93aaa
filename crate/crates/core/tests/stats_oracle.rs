mod common;

use cfbd::stats::{beta_cdf, beta_tail, log_gamma};
use cfbd::BetaParams;
use common::{binomial_beta_cdf, quad_beta_cdf, TestRng};
use proptest::prelude::*;

fn bp(a: f64, b: f64) -> BetaParams {
    BetaParams::new(a, b).unwrap()
}

#[test]
fn cdf_matches_quadrature_on_random_parameters() {
    let mut rng = TestRng::new(11);
    for _ in 0..400 {
        let a = rng.range(0.1, 50.0);
        let b = rng.range(0.1, 50.0);
        let x = (1 + rng.below(99)) as f64 / 100.0;
        let got = beta_cdf(x, bp(a, b)).unwrap();
        let want = quad_beta_cdf(x, a, b);
        assert!((got - want).abs() <= 1e-9, "I_{x}({a}, {b}) = {got}, quadrature {want}");
    }
}

#[test]
fn cdf_matches_binomial_sums_for_integer_parameters() {
    for a in 1..=20u32 {
        for b in 1..=20u32 {
            for k in 1..20 {
                let x = f64::from(k) / 20.0;
                let got = beta_cdf(x, bp(f64::from(a), f64::from(b))).unwrap();
                let want = binomial_beta_cdf(x, a, b);
                assert!((got - want).abs() <= 1e-12, "I_{x}({a}, {b}): {got} vs {want}");
            }
        }
    }
    assert!((binomial_beta_cdf(0.3, 2, 5) - 0.579_825).abs() < 1e-15);
}

#[test]
fn log_gamma_large_arguments() {
    // Stirling with four correction terms is exact to double precision here
    for &x in &[50.0_f64, 1e3, 1e5, 1e6] {
        let stirling = (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5));
        let got = log_gamma(x).unwrap();
        assert!((got - stirling).abs() <= 1e-14 * stirling.abs(), "x = {x}");
    }
}

proptest! {
    #[test]
    fn reflection_identity(a in 0.1f64..50.0, b in 0.1f64..50.0, x in 0.0f64..=1.0) {
        let lhs = beta_cdf(x, bp(a, b)).unwrap() + beta_cdf(1.0 - x, bp(b, a)).unwrap();
        prop_assert!((lhs - 1.0).abs() <= 1e-12, "{}", lhs);
    }

    #[test]
    fn cdf_is_monotone(a in 0.1f64..50.0, b in 0.1f64..50.0, x in 0.0f64..0.99, dx in 0.0f64..0.01) {
        let p = bp(a, b);
        prop_assert!(beta_cdf(x, p).unwrap() <= beta_cdf(x + dx, p).unwrap() + 1e-15);
    }

    #[test]
    fn tail_complements_cdf(a in 0.1f64..50.0, b in 0.1f64..50.0, x in 0.0f64..=1.0) {
        let p = bp(a, b);
        let s = beta_cdf(x, p).unwrap() + beta_tail(x, p).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-15);
    }
}

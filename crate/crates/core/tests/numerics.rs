//! Normal CDF/quantile and z-test power checked against independent oracles:
//! Simpson integration of the density and bisection on that integral.

use alpha_ledger_core::{
    power_one_sided, sample_size_for_power, std_normal_cdf, std_normal_quantile,
    z_test_one_sided, Error, PowerQuery,
};
use proptest::prelude::*;

/// Φ(x) = 1/2 + ∫₀ˣ φ(t) dt by composite Simpson with 20 000 panels.
fn cdf_oracle(x: f64) -> f64 {
    let panels = 20_000;
    let h = x / panels as f64;
    let dens = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = dens(0.0) + dens(x);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * dens(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

fn quantile_oracle(p: f64) -> f64 {
    let (mut lo, mut hi) = (-9.0, 9.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn cdf_matches_integration_oracle() {
    for i in -80..=80 {
        let x = i as f64 * 0.1;
        let got = std_normal_cdf(x).unwrap();
        assert!((got - cdf_oracle(x)).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn cdf_is_symmetric_monotone_and_bounded() {
    let mut prev = 0.0;
    for i in -800..=800 {
        let x = i as f64 * 0.01;
        let c = std_normal_cdf(x).unwrap();
        assert!((0.0..=1.0).contains(&c));
        assert!(c >= prev);
        prev = c;
        assert!((c + std_normal_cdf(-x).unwrap() - 1.0).abs() <= 1e-12);
    }
    assert!(std_normal_cdf(f64::NAN).is_err());
}

#[test]
fn quantile_examples() {
    assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    let z95 = std_normal_quantile(0.95).unwrap();
    assert!((z95 - quantile_oracle(0.95)).abs() < 1e-8);
    assert!((z95 - 1.644_853_6).abs() < 1e-7);
    for p in [1e-9, 1e-4, 0.01, 0.2, 0.37] {
        let a = std_normal_quantile(p).unwrap();
        // The oracle's absolute CDF error is about 1e-13; divide by the slope.
        let pdf = (-0.5 * a * a).exp() / 2.5066;
        assert!((a - quantile_oracle(p)).abs() < 1e-12 / pdf, "p = {p}");
        // 1 − p is itself rounded; allow for that rounding through the slope.
        let b = std_normal_quantile(1.0 - p).unwrap();
        let slack = f64::EPSILON / (-0.5 * a * a).exp() * 2.6;
        assert!((a + b).abs() < 1e-10 + slack, "p = {p}");
    }
    for bad in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(std_normal_quantile(bad), Err(Error::Domain(_))));
    }
}

#[test]
fn power_examples() {
    let zero = PowerQuery::new(0.05, 0.0, 1.0, 25.0).unwrap();
    assert!((power_one_sided(&zero).unwrap() - 0.05).abs() < 1e-15);

    let q = PowerQuery::new(0.05, 2.0, 1.0, 4.0).unwrap();
    let expect = 1.0 - cdf_oracle(quantile_oracle(0.95) - 4.0);
    assert!((power_one_sided(&q).unwrap() - expect).abs() < 1e-9);

    let mut prev = 0.0;
    for k in 1..60 {
        let p = power_one_sided(&PowerQuery::new(0.05, 2.0, 1.0, k as f64 * 0.1).unwrap()).unwrap();
        assert!(p > prev && p < 1.0);
        prev = p;
    }
}

#[test]
fn sample_size_examples() {
    assert!(matches!(
        sample_size_for_power(0.05, 0.05, 2.0, 1.0),
        Err(Error::Infeasible(_))
    ));
    assert!(matches!(
        sample_size_for_power(0.05, 0.9, 0.0, 1.0),
        Err(Error::Infeasible(_))
    ));
    let n = sample_size_for_power(0.05, 0.9, 2.0, 1.0).unwrap();
    let closed = ((quantile_oracle(0.95) + quantile_oracle(0.9)) / 2.0).powi(2);
    assert!((n - closed).abs() < 1e-7);
    // Grid search on the power curve for the first n reaching 0.9.
    let grid_n = (1..400_000)
        .map(|k| k as f64 * 1e-5)
        .find(|&m| power_one_sided(&PowerQuery::new(0.05, 2.0, 1.0, m).unwrap()).unwrap() >= 0.9)
        .unwrap();
    assert!((grid_n - n).abs() <= 1e-5);
}

#[test]
fn z_test_examples() {
    let t = z_test_one_sided(&[1.5; 7], 1.5, 2.0).unwrap();
    assert_eq!((t.z, t.p), (0.0, 0.5));
    let t = z_test_one_sided(&[2.0; 4], 0.0, 1.0).unwrap();
    assert!((t.z - 4.0).abs() < 1e-15);
    assert!((t.p - (1.0 - cdf_oracle(4.0))).abs() < 1e-12);
    let a = z_test_one_sided(&[0.3; 8], 0.0, 1.0).unwrap();
    let b = z_test_one_sided(&[0.3; 16], 0.0, 1.0).unwrap();
    assert!((b.z / a.z - 2f64.sqrt()).abs() < 1e-12);
    assert!(z_test_one_sided(&[], 0.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn quantile_of_cdf_round_trips(x in -6.0f64..6.0) {
        // Below zero Φ(x) carries full relative precision.
        let lower = -x.abs();
        let back = std_normal_quantile(std_normal_cdf(lower).unwrap()).unwrap();
        prop_assert!((back - lower).abs() <= 1e-10, "x = {lower}, back = {back}");
        // Above zero Φ(x) is a double near 1 whose spacing ε, divided by the
        // density, bounds what any quantile can recover.
        let back = std_normal_quantile(std_normal_cdf(x).unwrap()).unwrap();
        let slack = f64::EPSILON / (-0.5 * x * x).exp() * 2.6;
        prop_assert!((back - x).abs() <= 1e-10 + slack, "x = {x}, back = {back}");
    }

    #[test]
    fn cdf_of_quantile_round_trips(u in 0.0f64..1.0) {
        let p = 1e-9 + u * (1.0 - 2e-9);
        let back = std_normal_cdf(std_normal_quantile(p).unwrap()).unwrap();
        prop_assert!((back - p).abs() <= 1e-10);
    }

    #[test]
    fn power_is_monotone_in_n(
        alpha in 1e-6f64..0.5,
        theta in 0.05f64..3.0,
        sigma in 0.2f64..5.0,
    ) {
        let mut prev = 0.0;
        for k in 1..=100 {
            let n = k as f64 * 0.5;
            let p = power_one_sided(&PowerQuery::new(alpha, theta, sigma, n).unwrap()).unwrap();
            prop_assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn sample_size_round_trips_through_power(
        alpha in 1e-8f64..0.3,
        gap in 0.01f64..0.99,
        theta in 0.05f64..3.0,
        sigma in 0.2f64..5.0,
    ) {
        let rho = alpha + gap * (0.999_999 - alpha);
        let n = sample_size_for_power(alpha, rho, theta, sigma).unwrap();
        let back = power_one_sided(&PowerQuery::new(alpha, theta, sigma, n).unwrap()).unwrap();
        prop_assert!((back - rho).abs() <= 1e-9 * rho, "rho {rho} back {back}");
        // And the other direction, relative in n.
        let n2 = sample_size_for_power(alpha, back, theta, sigma).unwrap();
        prop_assert!((n2 - n).abs() <= 1e-9 * n.max(1.0));
    }
}

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use lbp::special::*;
use proptest::prelude::*;

mod checks;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const TERMS: usize = 20_000;

/// Σ_{k≥N} c (k + x)^{-p} by Euler–Maclaurin, p ≥ 2.
fn power_tail(c: f64, x: f64, p: f64, n: usize) -> f64 {
    let y = n as f64 + x;
    let f = c * y.powf(-p);
    let d1 = -p * c * y.powf(-p - 1.0);
    let d3 = -p * (p + 1.0) * (p + 2.0) * c * y.powf(-p - 3.0);
    c * y.powf(1.0 - p) / (p - 1.0) + f / 2.0 - d1 / 12.0 + d3 / 720.0
}

/// Neumaier-compensated sum.
fn sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in terms {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// ψ(x) = −γ + Σ_{k≥0} {1/(k+1) − 1/(k+x)}.
fn digamma_series(x: f64) -> f64 {
    let head = sum((0..TERMS).map(|k| 1.0 / (k as f64 + 1.0) - 1.0 / (k as f64 + x)));
    let n = TERMS as f64;
    let g = |y: f64, p: f64| y.powf(-p);
    // tail of the difference; the integral part is ln((N + x)/(N + 1))
    let tail = ((n + x) / (n + 1.0)).ln() + (g(n + 1.0, 1.0) - g(n + x, 1.0)) / 2.0
        + (g(n + 1.0, 2.0) - g(n + x, 2.0)) / 12.0
        - (g(n + 1.0, 4.0) - g(n + x, 4.0)) / 120.0;
    -EULER_GAMMA + head + tail
}

fn power_series(c: f64, x: f64, p: f64) -> f64 {
    let head = sum((0..TERMS).map(|k| c * (k as f64 + x).powf(-p)));
    head + power_tail(c, x, p, TERMS)
}

#[test]
fn digamma_against_series() {
    assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-14);
    assert!((digamma(0.5).unwrap() - (-EULER_GAMMA - 2.0 * LN_2)).abs() < 1e-13);
    assert!((digamma(2.0).unwrap() - digamma(1.0).unwrap() - 1.0).abs() < 1e-15);
    for &x in &[1e-3, 0.1, 0.5, 1.0, 3.7, 12.0, 150.0] {
        let want = digamma_series(x);
        assert!((digamma(x).unwrap() - want).abs() < 1e-12, "x={x}: {} vs {want}", digamma(x).unwrap());
    }
}

#[test]
fn trigamma_against_series() {
    assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-13);
    assert!((trigamma(0.5).unwrap() - PI * PI / 2.0).abs() < 1e-13);
    assert!((trigamma(2.0).unwrap() - (PI * PI / 6.0 - 1.0)).abs() < 1e-13);
    for &x in &[1e-3, 0.1, 0.5, 1.0, 3.7, 12.0, 150.0] {
        let want = power_series(1.0, x, 2.0);
        let got = trigamma(x).unwrap();
        assert!((got - want).abs() < 1e-12 * want.max(1.0), "x={x}: {got} vs {want}");
    }
}

#[test]
fn polygamma3_against_series() {
    assert!((polygamma3(1.0).unwrap() - PI.powi(4) / 15.0).abs() < 1e-12);
    assert!((polygamma3(2.0).unwrap() - (PI.powi(4) / 15.0 - 6.0)).abs() < 1e-12);
    // ψ⁽³⁾(10) = 0.0023199013…
    let want = power_series(6.0, 10.0, 4.0);
    assert!((polygamma3(10.0).unwrap() - want).abs() < 1e-14);
    assert!((want - 0.002_319_901_3).abs() < 1e-10);
    for &x in &[0.1, 0.5, 3.7, 40.0] {
        let want = power_series(6.0, x, 4.0);
        let got = polygamma3(x).unwrap();
        assert!(((got - want) / want).abs() < 1e-12, "x={x}");
    }
}

#[test]
fn recurrences_on_grid() {
    for &x in &[0.1f64, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0] {
        let scale = 1.0f64.max(x.powi(-4));
        assert!((digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x).abs() < 1e-10);
        assert!((trigamma(x + 1.0).unwrap() - trigamma(x).unwrap() + x.powi(-2)).abs() < 1e-10 * scale);
        assert!((polygamma3(x + 1.0).unwrap() - polygamma3(x).unwrap() + 6.0 * x.powi(-4)).abs() < 1e-10 * scale);
    }
}

#[test]
fn domain_errors() {
    for f in [digamma, trigamma, polygamma3] {
        assert!(f(0.0).is_err());
        assert!(f(-1.5).is_err());
    }
    assert!(log_beta(0.0, 1.0).is_err());
    assert!(bessel_k(1.5, 0.0).is_err());
    assert!(log_sum_exp(&[]).is_err());
}

#[test]
fn log_beta_values() {
    assert_eq!(log_beta(1.0, 1.0).unwrap(), 0.0);
    assert!((log_beta(2.0, 4.0).unwrap() - (1.0f64 / 20.0).ln()).abs() < 1e-13);
}

#[test]
fn log_beta_derivative() {
    let h = 1e-5;
    for &(a, b) in &[(0.7, 1.3), (2.0, 4.0), (5.5, 0.4)] {
        let fd = (log_beta(a + h, b).unwrap() - log_beta(a - h, b).unwrap()) / (2.0 * h);
        let want = digamma(a).unwrap() - digamma(a + b).unwrap();
        assert!((fd - want).abs() < 1e-6, "({a},{b})");
    }
}

#[test]
fn bessel_closed_forms() {
    let k05 = |x: f64| (FRAC_PI_2 / x).sqrt() * (-x).exp();
    assert!((bessel_k(0.5, 1.0).unwrap() - 0.461_068_504_4).abs() < 1e-10);
    assert!((bessel_k(1.5, 1.0).unwrap() - 0.922_137_008_8).abs() < 1e-10);
    for i in 0..200 {
        let x = 0.01 * (2000.0f64).powf(i as f64 / 199.0);
        let forms = [k05(x), k05(x) * (1.0 + 1.0 / x), k05(x) * (1.0 + 3.0 / x + 3.0 / (x * x))];
        for (j, &want) in forms.iter().enumerate() {
            let got = bessel_k(0.5 + j as f64, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "nu={} x={x}", 0.5 + j as f64);
        }
    }
}

/// K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(νt) dt.
fn bessel_integral(nu: f64, x: f64) -> f64 {
    let upper = (2.0 * (40.0 / x).max(1.0)).acosh() + 1.0;
    checks::quad::integrate(|t| (-x * t.cosh()).exp() * (nu * t).cosh(), 0.0, upper, 1e-14)
}

#[test]
fn bessel_against_integral_representation() {
    for &nu in &[0.0, 0.25, 1.0 / 3.0, 0.8, 1.0, 2.2, 3.7, 5.0] {
        for &x in &[0.05, 0.3, 1.0, 1.9, 2.1, 4.0, 11.0, 30.0] {
            let want = bessel_integral(nu, x);
            let got = bessel_k(nu, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "nu={nu} x={x}: {got} vs {want}");
        }
    }
}

proptest! {
    #[test]
    fn bessel_decreases(nu in 0.25f64..5.0, x in 1e-3f64..40.0) {
        prop_assert!(bessel_k(nu, x * 1.5).unwrap() < bessel_k(nu, x).unwrap());
    }

    #[test]
    fn logistic_pairs_sum_to_one(x in -30.0f64..30.0) {
        prop_assert_eq!(logistic(x) + logistic(-x), 1.0);
    }

    #[test]
    fn logistic_is_stable(x in -700.0f64..700.0) {
        let v = logistic(x);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(log_logistic(x).is_finite() || x < -700.0);
    }

    #[test]
    fn log_beta_is_symmetric(a in 1e-3f64..50.0, b in 1e-3f64..50.0) {
        prop_assert_eq!(log_beta(a, b).unwrap(), log_beta(b, a).unwrap());
    }

    #[test]
    fn log_sum_exp_shift_invariance(v in proptest::collection::vec(-50.0f64..50.0, 1..20), c in -800.0f64..800.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = log_sum_exp(&v).unwrap() + c;
        let b = log_sum_exp(&shifted).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn logistic_and_log_sum_exp_examples() {
    assert_eq!(logistic(0.0), 0.5);
    assert!((logistic(40.0) - (1.0 - (-40.0f64).exp())).abs() <= f64::EPSILON);
    assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
    assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + LN_2)).abs() < 1e-12);
    assert_eq!(log_sum_exp(&[0.0, f64::NEG_INFINITY]).unwrap(), 0.0);
}

//! Checks shared between the module test suites and the acceptance target.
//! Each returns `Err` with a short description on failure.
#![allow(dead_code)]

pub mod dependence;
pub mod distributions;
pub mod geweke;
pub mod quad;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Sample mean with its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Sample variance with its large-sample standard error.
pub fn var_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).sqrt())
}

/// Sample covariance with its large-sample standard error.
pub fn cov_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, _) = mean_se(x);
    let (my, _) = mean_se(y);
    let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    mean_se(&p)
}

pub fn within(value: f64, target: f64, se: f64, k: f64, what: &str) -> Check {
    ensure((value - target).abs() <= k * se, || {
        format!("{what}: {value:.5} vs {target:.5} (se {se:.2e}, limit {k} se)")
    })
}

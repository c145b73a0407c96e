//! The Pólya mixing distribution and the PG(1, c) sampler.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    digamma_unchecked, log_beta_unchecked, log_normal_cdf, polygamma3_unchecked, polygamma5_unchecked,
    trigamma_unchecked,
};

/// Default number of exponential terms in the truncated-sum sampler.
pub const DEFAULT_TRUNCATION: usize = 200;

/// Term budget for the alternating density series.
pub const DENSITY_TERM_BUDGET: usize = 10_000;

/// Shape parameters (a, b), both strictly positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapePair {
    pub a: f64,
    pub b: f64,
}

impl ShapePair {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let s = ShapePair { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "shape parameters must be positive and finite, got ({}, {})",
                self.a, self.b
            )))
        }
    }

    pub fn swapped(&self) -> Self {
        ShapePair { a: self.b, b: self.a }
    }

    pub fn sum(&self) -> f64 {
        self.a + self.b
    }

    pub fn product(&self) -> f64 {
        self.a * self.b
    }
}

pub type PolyaParams = ShapePair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyaDraw {
    pub lambda: f64,
    pub truncation_terms: usize,
}

/// (ψ(x) − ψ(y)) / (x − y), with ψ′ at the midpoint as the x = y limit.
pub(crate) fn digamma_divided_difference(x: f64, y: f64) -> f64 {
    let d = x - y;
    let m = 0.5 * (x + y);
    if d.abs() < 1e-2 * m {
        let h2 = 0.25 * d * d;
        trigamma_unchecked(m) + h2 * (polygamma3_unchecked(m) / 6.0 + h2 * polygamma5_unchecked(m) / 120.0)
    } else {
        (digamma_unchecked(x) - digamma_unchecked(y)) / d
    }
}

/// Σ_{k ≥ K} 2 / ((k + a)(k + b)).
fn tail_mean(params: &PolyaParams, k: usize) -> f64 {
    let k = k as f64;
    2.0 * digamma_divided_difference(k + params.a, k + params.b)
}

/// Draws λ ~ Polya(a, b) from the first `truncation` exponential terms plus
/// the expected value of the remainder.
pub fn sample_polya<R: Rng + ?Sized>(
    params: &PolyaParams,
    truncation: usize,
    rng: &mut R,
) -> Result<PolyaDraw> {
    params.validate()?;
    if truncation == 0 {
        return Err(Error::invalid("truncation must be at least 1"));
    }
    Ok(PolyaDraw {
        lambda: sample_polya_unchecked(params, truncation, rng),
        truncation_terms: truncation,
    })
}

pub(crate) fn sample_polya_unchecked<R: Rng + ?Sized>(
    params: &PolyaParams,
    truncation: usize,
    rng: &mut R,
) -> f64 {
    let mut sum = 0.0;
    for k in 0..truncation {
        let k = k as f64;
        let e: f64 = rng.sample(Exp1);
        sum += 2.0 * e / ((k + params.a) * (k + params.b));
    }
    sum + tail_mean(params, truncation)
}

/// Result of evaluating the alternating density series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyaDensity {
    pub log_density: f64,
    pub converged: bool,
    pub terms: usize,
}

/// Log density of Polya(a, b) at λ by its alternating series.
///
/// For small λ the terms cancel to many digits; when the remaining precision
/// is too low to trust, `converged` is false and `log_density` should not be
/// used.
pub fn polya_log_density(lambda: f64, params: &PolyaParams, tol: f64) -> Result<PolyaDensity> {
    params.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::Domain {
            function: "polya_log_density",
            value: lambda,
            requirement: "lambda > 0",
        });
    }
    // Order the pair so the result is bitwise symmetric in (a, b).
    let (a, b) = if params.a <= params.b {
        (params.a, params.b)
    } else {
        (params.b, params.a)
    };
    let c = a + b;
    let ln_norm = -log_beta_unchecked(a, b);
    let ln_gamma_c = statrs::function::gamma::ln_gamma(c);

    let mut logs = Vec::with_capacity(64);
    let mut max_log = f64::NEG_INFINITY;
    let mut converged = false;
    let mut prev = f64::NEG_INFINITY;
    for k in 0..DENSITY_TERM_BUDGET {
        let kf = k as f64;
        let ln_binom = statrs::function::gamma::ln_gamma(c + kf)
            - statrs::function::gamma::ln_gamma(kf + 1.0)
            - ln_gamma_c;
        let l = ln_binom + (kf + 0.5 * c).ln() + ln_norm - 0.5 * (kf + a) * (kf + b) * lambda;
        logs.push(l);
        max_log = max_log.max(l);
        // Terms eventually decrease monotonically. A reliable sum is at least
        // 1e-8 of the largest term, so this bound keeps the next term below
        // tol relative to the sum.
        if k > 0 && l < prev && l < max_log + tol.ln() - 21.0 {
            converged = true;
            break;
        }
        prev = l;
    }
    let terms = logs.len();

    // Neumaier summation of signed, rescaled terms.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut abs_sum = 0.0f64;
    for (k, l) in logs.iter().enumerate() {
        let v = (l - max_log).exp();
        abs_sum += v;
        let v = if k % 2 == 0 { v } else { -v };
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    let total = sum + comp;
    let reliable = total > 0.0 && 64.0 * f64::EPSILON * abs_sum <= 1e-8 * total;
    let log_density = if total > 0.0 {
        max_log + total.ln()
    } else {
        f64::NEG_INFINITY
    };
    Ok(PolyaDensity {
        log_density,
        converged: converged && reliable,
        terms,
    })
}

/// ln[π(λ; to) / π(λ; from)] for two shape pairs with equal sums.
pub fn polya_identity_log_factor(lambda: f64, from: &PolyaParams, to: &PolyaParams) -> Result<f64> {
    from.validate()?;
    to.validate()?;
    let s = from.sum();
    if (s - to.sum()).abs() > 1e-12 * s.max(1.0) {
        return Err(Error::invalid(format!(
            "shape sums differ: {} vs {}",
            from.sum(),
            to.sum()
        )));
    }
    Ok(log_beta_unchecked(from.a, from.b) - log_beta_unchecked(to.a, to.b)
        + 0.5 * lambda * (from.product() - to.product()))
}

/// Mean and variance of Polya(a, b).
pub fn polya_moments(params: &PolyaParams) -> Result<(f64, f64)> {
    params.validate()?;
    let (a, b) = (params.a, params.b);
    let d = a - b;
    if d.abs() < 1e-9 {
        let m = 0.5 * (a + b);
        return Ok((2.0 * trigamma_unchecked(m), 2.0 * polygamma3_unchecked(m) / 3.0));
    }
    let mean = 2.0 * digamma_divided_difference(a, b);
    let m = 0.5 * (a + b);
    let variance = if d.abs() < 1e-2 * m {
        // the bracket below cancels to third order in a − b; use its expansion
        2.0 * polygamma3_unchecked(m) / 3.0 + d * d * polygamma5_unchecked(m) / 60.0
    } else {
        4.0 / (d * d)
            * (trigamma_unchecked(a) + trigamma_unchecked(b) - 2.0 * digamma_divided_difference(a, b))
    };
    Ok((mean, variance))
}

const PG_TRUNC: f64 = 0.64;

fn pg_coef(n: usize, x: f64) -> f64 {
    let k = (n as f64 + 0.5) * PI;
    if x > PG_TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else {
        let h = n as f64 + 0.5;
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * h * h / x).exp()
    }
}

fn pg_mass_texpon(z: f64, fz: f64) -> f64 {
    let t = PG_TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + log_normal_cdf(b);
    let xa = x0 + z + log_normal_cdf(a);
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

/// Inverse Gaussian with mean 1/z and shape 1, truncated to (0, PG_TRUNC).
fn pg_truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = PG_TRUNC;
    let mu = 1.0 / z;
    if mu > t {
        loop {
            let mut e1: f64 = rng.sample(Exp1);
            let mut e2: f64 = rng.sample(Exp1);
            while e1 * e1 > 2.0 * e2 / t {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let mu_y = mu * n * n;
            let half_mu = 0.5 * mu;
            let mut x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

/// Exact draw from PG(1, c) by Devroye's alternating-series method.
pub fn sample_polya_gamma_1<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let fz = PI * PI / 8.0 + 0.5 * z * z;
    let p_exp = pg_mass_texpon(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = rng.sample(Exp1);
            PG_TRUNC + e / fz
        } else {
            pg_truncated_inverse_gaussian(z, rng)
        };
        let mut s = pg_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            let an = pg_coef(n, x);
            if n % 2 == 1 {
                s -= an;
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += an;
                if y > s {
                    break;
                }
            }
        }
    }
}

/// E[PG(1, c)] = tanh(c/2) / (2c).
pub fn polya_gamma_1_mean(c: f64) -> f64 {
    if c.abs() < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

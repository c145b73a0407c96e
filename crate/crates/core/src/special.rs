//! Scalar special functions.
//!
//! The polygamma family is computed by shifting the argument up with the
//! recurrence and then summing the asymptotic series. `bessel_k` follows
//! Temme's series below x = 2 and Steed's continued fraction above it;
//! half-integer orders use the elementary closed form.

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn check_positive(function: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            function,
            value: x,
            requirement: "x > 0",
        })
    }
}

/// Digamma function ψ(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 / x - tail
}

/// Trigamma function ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2
                                * (1.0 / 30.0
                                    - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    acc + inv + 0.5 * inv2 + tail
}

/// Third polygamma function ψ⁽³⁾(x) = 6 Σ_k (x + k)^-4 for x > 0.
pub fn polygamma3(x: f64) -> Result<f64> {
    check_positive("polygamma3", x)?;
    Ok(polygamma3_unchecked(x))
}

pub(crate) fn polygamma3_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 15.0 {
        let x2 = x * x;
        acc += 6.0 / (x2 * x2);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv
        * inv2
        * (2.0
            + inv
                * (3.0
                    + inv
                        * (2.0
                            + inv2
                                * (-1.0
                                    + inv2
                                        * (4.0 / 3.0
                                            + inv2
                                                * (-3.0
                                                    + inv2
                                                        * (10.0
                                                            + inv2 * (-691.0 / 15.0 + inv2 * 280.0))))))));
    acc + tail
}

/// Fifth polygamma function ψ⁽⁵⁾(x) = 120 Σ_k (x + k)^-6.
pub(crate) fn polygamma5_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        let x2 = x * x;
        acc += 120.0 / (x2 * x2 * x2);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * inv2
        * inv
        * (24.0
            + inv
                * (60.0
                    + inv
                        * (60.0
                            + inv2 * (-56.0 + inv2 * (120.0 + inv2 * (-396.0 + inv2 * 1820.0))))));
    acc + tail
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma", x)?;
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// ln B(a, b).
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    check_positive("log_beta", a)?;
    check_positive("log_beta", b)?;
    Ok(log_beta_unchecked(a, b))
}

pub(crate) fn log_beta_unchecked(a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    // B(1, b) = 1/b
    if a == 1.0 {
        return -b.ln();
    }
    if b == 1.0 {
        return -a.ln();
    }
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Modified Bessel function of the second kind K_ν(x).
///
/// Returns [`Error::Overflow`] when the value is not representable, which
/// happens as x → 0 for large orders. Underflow for large x returns 0.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    check_positive("bessel_k", x)?;
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::Domain {
            function: "bessel_k",
            value: nu,
            requirement: "nu >= 0",
        });
    }
    let shifted = nu - 0.5;
    let value = if shifted >= 0.0 && shifted.fract() == 0.0 {
        bessel_k_half_integer(shifted as usize, x)
    } else {
        bessel_k_temme(nu, x)
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow { nu, x })
    }
}

/// K_{n+1/2}(x) by upward recurrence from the two elementary orders.
fn bessel_k_half_integer(n: usize, x: f64) -> f64 {
    let mut k_prev = (PI / (2.0 * x)).sqrt() * (-x).exp();
    if n == 0 {
        return k_prev;
    }
    let mut k = k_prev * (1.0 + 1.0 / x);
    for m in 1..n {
        let order = m as f64 + 0.5;
        let next = k_prev + 2.0 * order / x * k;
        k_prev = k;
        k = next;
    }
    k
}

// Coefficients of 1/Γ(z) = Σ c_k z^k, k = 1..26.
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns (gam1, gam2, 1/Γ(1+μ), 1/Γ(1−μ)) for |μ| ≤ 1/2.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    // even: Σ c_{2j} μ^{2j-2}, odd: Σ c_{2j+1} μ^{2j}
    let mu2 = mu * mu;
    let mut even = 0.0;
    let mut odd = 0.0;
    for j in (0..13).rev() {
        even = even * mu2 + RECIP_GAMMA[2 * j + 1];
        odd = odd * mu2 + RECIP_GAMMA[2 * j];
    }
    let gampl = odd + mu * even;
    let gammi = odd - mu * even;
    (-even, odd, gampl, gammi)
}

pub(crate) fn bessel_k_temme(nu: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-16;
    const MAXIT: usize = 100_000;

    let nl = (nu + 0.5).floor() as usize;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (mut rkmu, mut rk1);
    if x < 2.0 {
        let x2 = 0.5 * x;
        let pimu = PI * xmu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = xmu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..=MAXIT {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            c *= dd / fi;
            p /= fi - xmu;
            q /= fi + xmu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        rkmu = sum;
        rk1 = sum1 * xi2;
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..=MAXIT {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        rkmu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
    }
    for i in 1..=nl {
        let next = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = next;
    }
    rkmu
}

/// Logistic function σ(x) = 1 / (1 + e^-x).
///
/// The larger of σ(x), σ(−x) is formed as one minus the smaller, so the
/// pair always sums to exactly one.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        let t = (-x).exp();
        1.0 - t / (1.0 + t)
    } else {
        let t = x.exp();
        t / (1.0 + t)
    }
}

/// ln σ(x), stable for large |x|.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// ln Σ exp(v_i). Terms equal to −∞ contribute nothing.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("log_sum_exp"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// ln Φ(x), accurate far into the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // Mills-ratio asymptotic series; at |x| ≥ 30 the truncation error is
        // far below double precision.
        let z = 1.0 / (x * x);
        let series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() - (-x).ln() + series.ln()
    }
}

/// ln N(x; mean, variance).
pub fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * variance).ln() + d * d / variance)
}

//! Prior-dependence checks for the logistic-beta stick-breaking prior.

use lbp::ddp::*;
use lbp::polya::sample_polya;
use lbp::stats::{correlation, mean_var};
use lbp::{BasisSpec, CorrelationKernel, ShapePair};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ensure, rng, within, Check};

pub fn matern(range: f64, smoothness: f64) -> CorrelationKernel {
    CorrelationKernel::Matern { range, smoothness }
}

/// Draws of Σ_h w_h(x) w_h(x′) and of (G_x(B), G_x′(B)) from `levels`
/// independent stick pairs with latent correlation r, each atom falling in B
/// with probability 1/2. Uses nothing from the prior calculators.
pub fn brute_force_pairs(r: f64, b: f64, levels: usize, nsim: usize, seed: u64) -> (Vec<f64>, Vec<(f64, f64)>) {
    let mut g = rng(seed);
    let shape = ShapePair::new(1.0, b).unwrap();
    let c = (1.0 - r * r).max(0.0).sqrt();
    let mut ties = Vec::with_capacity(nsim);
    let mut measures = Vec::with_capacity(nsim);
    for _ in 0..nsim {
        let (mut rest1, mut rest2) = (1.0, 1.0);
        let (mut tie, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for _ in 0..levels {
            let l = sample_polya(&shape, 200, &mut g).unwrap().lambda;
            let m = 0.5 * l * (shape.a - shape.b);
            let z1: f64 = g.sample(StandardNormal);
            let z2: f64 = g.sample(StandardNormal);
            let v1 = 1.0 / (1.0 + (-(m + l.sqrt() * z1)).exp());
            let v2 = 1.0 / (1.0 + (-(m + l.sqrt() * (r * z1 + c * z2))).exp());
            let (w1, w2) = (v1 * rest1, v2 * rest2);
            rest1 -= w1;
            rest2 -= w2;
            tie += w1 * w2;
            if g.random::<f64>() < 0.5 {
                g1 += w1;
                g2 += w2;
            }
        }
        ties.push(tie);
        measures.push((g1, g2));
    }
    (ties, measures)
}

/// Correlation with a batch-means standard error.
fn correlation_se(pairs: &[(f64, f64)]) -> (f64, f64) {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let batches = 40;
    let size = pairs.len() / batches;
    let per: Vec<f64> = (0..batches)
        .map(|k| correlation(&x[k * size..(k + 1) * size], &y[k * size..(k + 1) * size]))
        .collect();
    let (_, v) = mean_var(&per);
    (correlation(&x, &y), (v / batches as f64).sqrt())
}

pub struct DependenceCase {
    pub name: &'static str,
    pub kernel: CorrelationKernel,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub b: f64,
}

pub fn dependence_cases() -> Vec<DependenceCase> {
    let spline = BasisSpec::natural_spline_uniform_knots(0.0, 1.0, 6).unwrap();
    vec![
        DependenceCase {
            name: "Matérn ν=1.5, d=0.1, b=1",
            kernel: matern(0.3, 1.5),
            x: vec![0.0],
            x_prime: vec![0.1],
            b: 1.0,
        },
        DependenceCase {
            name: "Matérn ν=0.5, d=0.4, b=0.5",
            kernel: matern(0.3, 0.5),
            x: vec![0.2],
            x_prime: vec![0.6],
            b: 0.5,
        },
        DependenceCase {
            name: "AR(1) ρ=−0.8, lag 1, b=1",
            kernel: CorrelationKernel::Ar1 { rho: -0.8 },
            x: vec![3.0],
            x_prime: vec![4.0],
            b: 1.0,
        },
        DependenceCase {
            name: "AR(1) ρ=0.9, lag 2, b=3",
            kernel: CorrelationKernel::Ar1 { rho: 0.9 },
            x: vec![0.0],
            x_prime: vec![2.0],
            b: 3.0,
        },
        DependenceCase {
            name: "spline feature map, 0.1 vs 0.7, b=2",
            kernel: CorrelationKernel::FeatureMap { basis: spline },
            x: vec![0.1],
            x_prime: vec![0.7],
            b: 2.0,
        },
        DependenceCase {
            name: "Matérn ν=2.5 in the plane, b=0.2",
            kernel: matern(0.5, 2.5),
            x: vec![0.0, 0.0],
            x_prime: vec![0.3, 0.2],
            b: 0.2,
        },
    ]
}

/// Tie probability and random-measure correlation from the closed forms
/// against the brute-force stick simulator. The standard error combines both
/// Monte Carlo sources.
pub fn dependence_case(case: &DependenceCase, seed: u64, k: f64) -> Check {
    let mu = mu_mc(&case.kernel, &case.x, &case.x_prime, case.b, 400_000, &mut rng(seed)).unwrap();
    let tie = tie_probability(mu.value, case.b).unwrap();
    let corr = corr_rpm(mu.value, case.b, 1.0).unwrap();
    // delta method through d/dμ of (1+b)/(2/μ − (1+b))
    let d = 2.0 / mu.value - (1.0 + case.b);
    let dtie = 2.0 * (1.0 + case.b) / (mu.value * mu.value * d * d);
    let r = case.kernel.eval(&case.x, &case.x_prime).unwrap();
    // enough levels that the leftover stick mass is below 1e-8
    let levels = ((1e-8f64).ln() / (case.b / (1.0 + case.b)).ln()).ceil().max(20.0) as usize;
    let (ties, measures) = brute_force_pairs(r, case.b, levels, 40_000, seed + 1);
    let (m, v) = mean_var(&ties);
    let tie_se = (v / ties.len() as f64 + (dtie * mu.se).powi(2)).sqrt();
    within(m, tie, tie_se, k, &format!("{}: tie probability", case.name))?;
    let (c, cse) = correlation_se(&measures);
    let dcorr = dtie * (1.0 + case.b);
    within(c, corr, cse.hypot(dcorr * mu.se), k, &format!("{}: measure correlation", case.name))
}

pub fn diagonal_ties() -> Check {
    for (b, expect) in [(0.2, 5.0 / 6.0), (1.0, 0.5), (2.0, 1.0 / 3.0)] {
        let t = tie_probability(mu_diagonal(b), b).unwrap();
        ensure((t - expect).abs() < 1e-14, || format!("diagonal tie at b={b}: {t}"))?;
    }
    Ok(())
}

/// μ for counter-monotonic sticks by midpoint quadrature over the shared
/// uniform.
pub fn m4_mu_quadrature(b: f64) -> f64 {
    let n = 200_000;
    (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            (1.0 - (1.0 - u).powf(1.0 / b)) * (1.0 - u.powf(1.0 / b))
        })
        .sum::<f64>()
        / n as f64
}

/// Random-measure correlation bound for the squared-AR(1) sticks written
/// directly from the infimum of E{V(x)V(x′)}.
pub fn m2_rpm_closed_form(b: f64) -> f64 {
    let s = (b + 2.0).sqrt();
    (1.0 + b) / (2.0 * s / (b.powf(1.5) + (1.0 - b) * s) - 1.0)
}

pub fn competitor_table(seed: u64) -> Check {
    for (k, b) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let cb = competitor_corr_bounds(b, 400_000, &mut rng(seed + k as u64)).unwrap();
        ensure(cb.m3 == (1.0 + b) / (1.0 + 2.0 * b), || format!("M3 at b={b}: {}", cb.m3))?;
        let stick = b.sqrt() * (b + 1.0) * (b + 2.0).sqrt() - b * (b + 2.0);
        ensure((cb.m2_stick - stick).abs() < 1e-14, || format!("M2 stick bound at b={b}"))?;
        let m2 = m2_rpm_closed_form(b);
        ensure((cb.m2_rpm - m2).abs() < 1e-12, || format!("M2 measure bound at b={b}: {} vs {m2}", cb.m2_rpm))?;
        let m4 = corr_rpm(m4_mu_quadrature(b), b, 1.0).unwrap();
        within(cb.m4.value, m4, cb.m4.se, 4.0, &format!("M4 Monte Carlo at b={b}"))?;
        let slack = 4.0 * cb.m1.se.hypot(cb.m4.se);
        ensure(cb.m4.value <= cb.m1.value + slack, || {
            format!("M4 {:.4} above M1 {:.4} at b={b}", cb.m4.value, cb.m1.value)
        })?;
        ensure(cb.m1.value <= cb.m3 + 4.0 * cb.m1.se, || {
            format!("M1 {:.4} above M3 {:.4} at b={b}", cb.m1.value, cb.m3)
        })?;
    }
    let big = competitor_corr_bounds(64.0, 1000, &mut rng(seed)).unwrap();
    ensure((big.m2_rpm - 0.75).abs() < 0.02, || format!("M2 measure bound at b=64: {}", big.m2_rpm))
}

pub fn continuity_sequence(seed: u64) -> Check {
    let kernel = matern(0.3, 1.5);
    let xs: Vec<Vec<f64>> = [0.5, 0.1, 0.01, 0.001].iter().map(|&d| vec![d]).collect();
    let c = continuity_check(&kernel, 1.0, &[0.0], &xs, 200_000, &mut rng(seed)).unwrap();
    ensure(c.windows(2).all(|w| w[1] > w[0]), || format!("sequence not increasing: {c:?}"))?;
    ensure(c[3] > 0.99, || format!("final value {:.5} not above 0.99", c[3]))
}

//! Distribution-family checks for the Pólya and logistic-beta laws.

use std::f64::consts::PI;

use lbp::kernels::build_matrix;
use lbp::logistic_beta::{beta_cdf, mvlb_moments, sample_lbp, sample_lbp_linear_predictor, sample_mvlb};
use lbp::polya::{
    polya_identity_log_factor, polya_log_density, polya_moments, sample_polya, sample_polya_gamma_1,
    DEFAULT_TRUNCATION,
};
use lbp::special::logistic;
use lbp::stats::{chi_square, correlation, ks_one_sample, ks_two_sample};
use lbp::{BasisSpec, CorrelationKernel, CorrelationMatrix, Points, ShapePair};
use nalgebra::DMatrix;
use rand::Rng;

use super::{cov_se, ensure, mean_se, rng, var_se, within, Check};

pub const DENSITY_TOL: f64 = 1e-12;

pub fn shape(a: f64, b: f64) -> ShapePair {
    ShapePair::new(a, b).unwrap()
}

pub fn polya_draws(p: &ShapePair, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| sample_polya(p, DEFAULT_TRUNCATION, &mut r).unwrap().lambda).collect()
}

/// CDF of Polya(1, 1): λ = Σ_{k≥1} 2ε_k/k² is a sum of exponentials with
/// rates k²/2, whose partial-fraction weights are 2(−1)^{k+1}.
pub fn polya11_cdf(lambda: f64) -> f64 {
    let mut s = 0.0;
    for k in 1..=400 {
        let k = k as f64;
        let t = (-0.5 * k * k * lambda).exp();
        s += if k as usize % 2 == 1 { t } else { -t };
        if t < 1e-18 {
            break;
        }
    }
    1.0 - 2.0 * s
}

pub fn polya_identity_tuples(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut compared = 0;
    for _ in 0..50 {
        let a = r.random_range(0.3..4.0);
        let b = r.random_range(0.3..4.0);
        let s = a + b;
        let a2 = r.random_range(0.05..0.95) * s;
        let from = shape(a, b);
        let to = shape(a2, s - a2);
        let lambda = r.random_range(0.5..10.0);
        let d1 = polya_log_density(lambda, &from, DENSITY_TOL).unwrap();
        let d2 = polya_log_density(lambda, &to, DENSITY_TOL).unwrap();
        if !(d1.converged && d2.converged) {
            continue;
        }
        compared += 1;
        let factor = polya_identity_log_factor(lambda, &from, &to).unwrap();
        let err = (d2.log_density - d1.log_density - factor).abs();
        ensure(err < 1e-6, || {
            format!("identity off by {err:.2e} at λ={lambda:.3}, ({a:.3},{b:.3}) → ({a2:.3},{:.3})", s - a2)
        })?;
    }
    ensure(compared >= 40, || format!("only {compared} of 50 tuples had converged series"))?;
    // fixed example: ratio 2/e between (1,3) and (2,2) at λ = 2
    let d13 = polya_log_density(2.0, &shape(1.0, 3.0), DENSITY_TOL).unwrap();
    let d22 = polya_log_density(2.0, &shape(2.0, 2.0), DENSITY_TOL).unwrap();
    let ratio = (d22.log_density - d13.log_density).exp();
    ensure((ratio - 2.0 / std::f64::consts::E).abs() < 1e-8, || {
        format!("series ratio {ratio} differs from 2/e")
    })
}

/// Cumulative integral of the series density on a fine grid.
fn tabulated_cdf(p: &ShapePair, lo: f64, hi: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
    let dens = |l: f64| {
        let d = polya_log_density(l, p, DENSITY_TOL).unwrap();
        assert!(d.converged, "series did not converge at {l}");
        d.log_density.exp()
    };
    let h = (hi - lo) / cells as f64;
    let mut xs = vec![lo];
    let mut cdf = vec![0.0];
    let mut f_left = dens(lo);
    for i in 0..cells {
        let a = lo + i as f64 * h;
        let b = a + h;
        let fm = dens(0.5 * (a + b));
        let fb = dens(b);
        cdf.push(cdf[i] + h / 6.0 * (f_left + 4.0 * fm + fb));
        xs.push(b);
        f_left = fb;
    }
    (xs, cdf)
}

fn invert(xs: &[f64], cdf: &[f64], q: f64) -> f64 {
    let j = cdf.partition_point(|&c| c < q);
    let (x0, x1, c0, c1) = (xs[j - 1], xs[j], cdf[j - 1], cdf[j]);
    x0 + (x1 - x0) * (q - c0) / (c1 - c0)
}

/// Smallest λ on a 0.01 grid above 0.05 where the series is trusted.
fn reliable_start(p: &ShapePair) -> f64 {
    let mut lo = 0.05;
    while !polya_log_density(lo, p, DENSITY_TOL).unwrap().converged {
        lo += 0.01;
    }
    lo
}

/// Integral over (0.05, 60). Below the point where the series is trusted the
/// mass is bounded with the exponential-sum CDF instead.
pub fn polya_density_integrates(_seed: u64) -> Check {
    let p = shape(1.0, 1.0);
    let lo = reliable_start(&p);
    let head = polya11_cdf(lo);
    ensure(head < 1e-6, || format!("untrusted region below {lo} holds mass {head}"))?;
    let total = super::quad::integrate(
        |l| {
            let d = polya_log_density(l, &p, DENSITY_TOL).unwrap();
            assert!(d.converged, "series did not converge at {l}");
            d.log_density.exp()
        },
        lo,
        60.0,
        1e-9,
    );
    ensure((total + head - 1.0).abs() < 1e-3, || format!("density integrates to {}", total + head))
}

pub fn polya_chi_square(seed: u64) -> Check {
    let p = shape(1.0, 1.0);
    let lo = reliable_start(&p);
    // the mass below the grid is negligible, and the quadrature agrees with
    // the exponential-sum CDF
    ensure(polya11_cdf(lo) < 1e-6, || format!("grid starting at {lo} misses mass near zero"))?;
    let (xs, cdf) = tabulated_cdf(&p, lo, 40.0, 8000);
    for &l in &[0.8, 1.5, 3.0, 6.0, 12.0] {
        let j = xs.partition_point(|&x| x < l);
        let err = (cdf[j] - polya11_cdf(xs[j])).abs();
        ensure(err < 1e-6, || format!("quadrature CDF off by {err:.2e} at {l}"))?;
    }
    let bins = 20;
    let edges: Vec<f64> = (1..bins).map(|k| invert(&xs, &cdf, k as f64 / bins as f64)).collect();
    let n = 100_000;
    let draws = polya_draws(&p, n, seed);
    let mut observed = vec![0.0; bins];
    for d in draws {
        observed[edges.partition_point(|&e| e < d)] += 1.0;
    }
    let expected = vec![n as f64 / bins as f64; bins];
    let t = chi_square(&observed, &expected).unwrap();
    ensure(t.p_value > 0.01, || format!("χ² p-value {:.4}", t.p_value))
}

pub fn polya_moment_matching(seed: u64) -> Check {
    for (i, &(a, b)) in [(1.0, 1.0), (1.0, 2.0), (2.0, 4.0), (0.5, 0.5)].iter().enumerate() {
        let p = shape(a, b);
        let draws = polya_draws(&p, 200_000, seed + i as u64);
        let (mean, var) = polya_moments(&p).unwrap();
        let (m, mse) = mean_se(&draws);
        let (v, vse) = var_se(&draws);
        within(m, mean, mse, 4.0, &format!("Polya({a},{b}) mean"))?;
        within(v, var, vse, 4.0, &format!("Polya({a},{b}) variance"))?;
    }
    Ok(())
}

pub fn pg_scaling(seed: u64) -> Check {
    let n = 100_000;
    let mut r = rng(seed);
    let pg: Vec<f64> = (0..n).map(|_| 4.0 * PI * PI * sample_polya_gamma_1(0.0, &mut r)).collect();
    let po = polya_draws(&shape(0.5, 0.5), n, seed + 1);
    let t = ks_two_sample(&pg, &po).unwrap();
    ensure(t.p_value > 0.01, || format!("4π²·PG(1,0) vs Polya(½,½): KS p {:.4}", t.p_value))
}

pub fn mvlb_beta_marginals(seed: u64) -> Check {
    let r1 = CorrelationMatrix::dense(DMatrix::identity(1, 1));
    for (i, &(a, b)) in [(1.0, 1.0), (2.0, 4.0), (1.0, 2.0)].iter().enumerate() {
        let p = shape(a, b);
        let mut r = rng(seed + i as u64);
        let u: Vec<f64> = (0..100_000)
            .map(|_| logistic(sample_mvlb(&p, &r1, &mut r).unwrap().eta[0]))
            .collect();
        let t = ks_one_sample(&u, |x| beta_cdf(x, a, b)).unwrap();
        ensure(t.p_value > 0.01, || format!("σ(η) vs Beta({a},{b}): KS p {:.4}", t.p_value))?;
    }
    Ok(())
}

fn pair_matrix(r12: f64) -> CorrelationMatrix {
    CorrelationMatrix::dense(DMatrix::from_row_slice(2, 2, &[1.0, r12, r12, 1.0]))
}

fn pair_draws(p: &ShapePair, r12: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let m = pair_matrix(r12);
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let e = sample_mvlb(p, &m, &mut r).unwrap().eta;
            (e[0], e[1])
        })
        .unzip()
}

pub fn mvlb_moment_grid(seed: u64) -> Check {
    let mut k = 0;
    for &(a, b) in &[(1.0, 1.0), (1.0, 2.0), (2.0, 4.0)] {
        let p = shape(a, b);
        for &r12 in &[-0.5, 0.0, 0.8] {
            k += 1;
            let (x, y) = pair_draws(&p, r12, 100_000, seed + k);
            let (mean, var, cov) = mvlb_moments(&p, r12).unwrap();
            let tag = format!("({a},{b}), R12={r12}");
            let (m, mse) = mean_se(&x);
            within(m, mean, mse, 4.0, &format!("mean {tag}"))?;
            let (v, vse) = var_se(&y);
            within(v, var, vse, 4.0, &format!("variance {tag}"))?;
            let (c, cse) = cov_se(&x, &y);
            within(c, cov, cse, 4.0, &format!("covariance {tag}"))?;
        }
    }
    Ok(())
}

pub fn correlation_monotone(seed: u64) -> Check {
    let p = shape(1.0, 2.0);
    let mut prev = -2.0;
    for (i, &r12) in [-0.9, -0.5, 0.0, 0.5, 0.9].iter().enumerate() {
        let (x, y) = pair_draws(&p, r12, 50_000, seed + i as u64);
        let c = correlation(&x, &y);
        ensure(c > prev, || format!("corr {c:.4} at R12={r12} not above {prev:.4}"))?;
        prev = c;
    }
    Ok(())
}

pub fn closure_under_marginalization(seed: u64) -> Check {
    let p = shape(2.0, 4.0);
    let kernel = CorrelationKernel::Matern {
        range: 0.3,
        smoothness: 1.5,
    };
    let full = build_matrix(&kernel, &Points::from_1d(&[0.0, 0.1, 0.35, 0.7])).unwrap();
    let idx = [1, 3];
    let sub = full.subset(&idx);
    let n = 50_000;
    let mut r = rng(seed);
    let mut from_full = vec![Vec::with_capacity(n); 3];
    let mut direct = vec![Vec::with_capacity(n); 3];
    for _ in 0..n {
        let e = sample_mvlb(&p, &full, &mut r).unwrap().eta;
        from_full[0].push(e[idx[0]]);
        from_full[1].push(e[idx[1]]);
        from_full[2].push(e[idx[0]] - e[idx[1]]);
        let d = sample_mvlb(&p, &sub, &mut r).unwrap().eta;
        direct[0].push(d[0]);
        direct[1].push(d[1]);
        direct[2].push(d[0] - d[1]);
    }
    for (k, what) in ["first coordinate", "second coordinate", "difference"].iter().enumerate() {
        let t = ks_two_sample(&from_full[k], &direct[k]).unwrap();
        ensure(t.p_value > 0.01, || format!("marginalization, {what}: KS p {:.4}", t.p_value))?;
    }
    Ok(())
}

pub fn test_kernels() -> Vec<(&'static str, CorrelationKernel, Points)> {
    let xs = [0.05, 0.2, 0.45, 0.6, 0.95];
    let pts = Points::from_1d(&xs);
    let matern = CorrelationKernel::Matern {
        range: 0.3,
        smoothness: 1.5,
    };
    vec![
        ("matern", matern.clone(), pts.clone()),
        ("ar1", CorrelationKernel::Ar1 { rho: -0.6 }, Points::from_1d(&[0.0, 1.0, 2.0, 5.0, 6.0])),
        (
            "feature map",
            CorrelationKernel::FeatureMap {
                basis: BasisSpec::natural_spline_uniform_knots(0.0, 1.0, 5).unwrap(),
            },
            pts.clone(),
        ),
        (
            "predictive process",
            CorrelationKernel::ModifiedPredictiveProcess {
                parent: Box::new(matern),
                knots: Points::from_1d(&[0.0, 0.5, 1.0]),
            },
            pts,
        ),
    ]
}

/// Twelve KS tests, one per (kernel, shape) pair, held to a family-wise
/// level of 0.01 by Bonferroni.
pub fn lbp_marginal_invariance(seed: u64) -> Check {
    let mut results = Vec::new();
    let mut k = 0;
    for (name, kernel, pts) in test_kernels() {
        for &(a, b) in &[(1.0, 1.0), (1.0, 2.0), (2.0, 4.0)] {
            k += 1;
            let p = shape(a, b);
            let mut r = rng(seed + k);
            let at = (k as usize) % pts.len();
            let u: Vec<f64> = (0..100_000)
                .map(|_| logistic(sample_lbp(&p, &kernel, &pts, &mut r).unwrap().eta[at]))
                .collect();
            let t = ks_one_sample(&u, |x| beta_cdf(x, a, b)).unwrap();
            results.push((format!("{name}, Beta({a},{b}) at point {at}"), t.p_value));
        }
    }
    let level = 0.01 / results.len() as f64;
    for (what, p) in &results {
        ensure(*p > level, || format!("{what}: KS p {p:.5} below {level:.5}"))?;
    }
    Ok(())
}

/// Moments of the hierarchical and linear-predictor feature-map paths on a
/// fixed design. Means agree for every shape pair. Second moments agree when
/// a = b; for a ≠ b each path is checked against its own closed form, since
/// the linear-predictor path replaces λ by its mean in the offset only.
pub fn representation_equivalence(seed: u64) -> Check {
    let basis = BasisSpec::natural_spline_uniform_knots(0.0, 1.0, 4).unwrap();
    let kernel = CorrelationKernel::FeatureMap { basis };
    let pts = Points::from_1d(&[0.0, 0.2, 0.5, 0.8, 1.0]);
    let rm = build_matrix(&kernel, &pts).unwrap();
    let phi = rm.factor.as_ref().unwrap().phi.clone();
    let n = pts.len();
    let rows: Vec<f64> = (0..n).map(|i| phi.row(i).sum()).collect();
    ensure(rows.iter().any(|s| (s - 1.0).abs() > 0.05), || "row sums all one; design is uninformative".into())?;
    let draws = 100_000;
    for (k, &(a, b)) in [(2.0, 2.0), (1.0, 2.0)].iter().enumerate() {
        let p = shape(a, b);
        let mut r = rng(seed + k as u64);
        let mut hier = vec![Vec::with_capacity(draws); n];
        let mut lin = vec![Vec::with_capacity(draws); n];
        for _ in 0..draws {
            let h = sample_lbp(&p, &kernel, &pts, &mut r).unwrap();
            let l = sample_lbp_linear_predictor(&p, &phi, &mut r).unwrap();
            for i in 0..n {
                hier[i].push(h.eta[i]);
                lin[i].push(l[i]);
            }
        }
        let (mean, var, c0) = mvlb_moments(&p, 0.0).unwrap();
        for i in 0..n {
            let (mh, sh) = mean_se(&hier[i]);
            let (ml, sl) = mean_se(&lin[i]);
            within(mh - ml, 0.0, sh.hypot(sl), 4.0, &format!("({a},{b}) mean difference at {i}"))?;
            within(mh, mean, sh, 4.0, &format!("({a},{b}) hierarchical mean at {i}"))?;
            for j in 0..=i {
                let (ch, seh) = cov_se(&hier[i], &hier[j]);
                let (cl, sel) = cov_se(&lin[i], &lin[j]);
                let rij = rm.matrix[(i, j)];
                let hier_cov = c0 + (var - c0) * rij;
                within(ch, hier_cov, seh, 4.0, &format!("({a},{b}) hierarchical cov ({i},{j})"))?;
                // β ~ LB(a, b, I_q) has covariance (V − C0) I + C0 11ᵀ
                let lin_cov = (var - c0) * rij + c0 * rows[i] * rows[j];
                within(cl, lin_cov, sel, 4.0, &format!("({a},{b}) linear-predictor cov ({i},{j})"))?;
                if a == b {
                    within(ch - cl, 0.0, seh.hypot(sel), 4.0, &format!("cov difference ({i},{j})"))?;
                }
            }
        }
    }
    Ok(())
}

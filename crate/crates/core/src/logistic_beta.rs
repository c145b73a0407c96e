//! Univariate and multivariate logistic-beta distributions and logistic-beta
//! process realizations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{build_matrix, cross_matrix, CorrelationKernel, CorrelationMatrix, Points};
use crate::linalg::{jittered_cholesky, JitteredCholesky};
use crate::polya::{digamma_divided_difference, sample_polya_unchecked, ShapePair, DEFAULT_TRUNCATION};
use crate::special::{digamma_unchecked, log_beta_unchecked, log_logistic, trigamma_unchecked};

pub use crate::stats::beta_cdf;

pub type LBParams = ShapePair;

/// ln density of the univariate logistic-beta law at η.
pub fn lb_log_density(eta: f64, params: &LBParams) -> f64 {
    params.a * log_logistic(eta) + params.b * log_logistic(-eta) - log_beta_unchecked(params.a, params.b)
}

/// Mean, variance and covariance of a multivariate logistic-beta pair with
/// correlation parameter `r_ij`.
pub fn mvlb_moments(params: &LBParams, r_ij: f64) -> Result<(f64, f64, f64)> {
    params.validate()?;
    if !(-1.0..=1.0).contains(&r_ij) {
        return Err(Error::invalid(format!("correlation parameter {r_ij} outside [-1, 1]")));
    }
    let (a, b) = (params.a, params.b);
    let mean = digamma_unchecked(a) - digamma_unchecked(b);
    let variance = trigamma_unchecked(a) + trigamma_unchecked(b);
    let covariance = if (a - b).abs() < 1e-9 {
        2.0 * trigamma_unchecked(0.5 * (a + b)) * r_ij
    } else {
        variance + 2.0 * (r_ij - 1.0) * digamma_divided_difference(a, b)
    };
    Ok((mean, variance, covariance))
}

/// Attainable range of corr(η₁, η₂) over 2 × 2 correlation parameters.
pub fn corr_range(params: &LBParams) -> Result<(f64, f64)> {
    params.validate()?;
    let (a, b) = (params.a, params.b);
    if (a - b).abs() < 1e-9 {
        return Ok((-1.0, 1.0));
    }
    let lower = 1.0 - 4.0 * digamma_divided_difference(a, b) / (trigamma_unchecked(a) + trigamma_unchecked(b));
    Ok((lower, 1.0))
}

/// A draw η from the multivariate logistic-beta law and its Pólya variable.
#[derive(Clone, Debug, PartialEq)]
pub struct MVLBSample {
    pub eta: DVector<f64>,
    pub lambda: f64,
}

/// Square-root factor of a correlation matrix for Gaussian sampling.
#[derive(Clone, Debug)]
pub enum GaussianFactor {
    /// Lower Cholesky factor of R.
    Dense(JitteredCholesky),
    /// R = ΦΦᵀ + diag(d); stores Φ and √d.
    LowRank { phi: DMatrix<f64>, sqrt_diag: DVector<f64> },
}

impl GaussianFactor {
    /// Uses the low-rank factor when the matrix carries one.
    pub fn new(r: &CorrelationMatrix) -> Result<Self> {
        match &r.factor {
            Some(f) => Ok(GaussianFactor::LowRank {
                phi: f.phi.clone(),
                sqrt_diag: f.diag.map(f64::sqrt),
            }),
            None => Ok(GaussianFactor::Dense(jittered_cholesky(&r.matrix)?)),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            GaussianFactor::Dense(c) => c.chol.l_dirty().nrows(),
            GaussianFactor::LowRank { phi, .. } => phi.nrows(),
        }
    }

    /// A draw from N(0, R). For the low-rank form also returns the
    /// coefficient vector γ.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, Option<DVector<f64>>) {
        match self {
            GaussianFactor::Dense(c) => {
                let n = c.chol.l_dirty().nrows();
                let z = standard_normal_vector(n, rng);
                (c.mul_lower(&z), None)
            }
            GaussianFactor::LowRank { phi, sqrt_diag } => {
                let gamma = standard_normal_vector(phi.ncols(), rng);
                let mut x = phi * &gamma;
                if sqrt_diag.iter().any(|&s| s > 0.0) {
                    for i in 0..x.len() {
                        let e: f64 = rng.sample(StandardNormal);
                        x[i] += sqrt_diag[i] * e;
                    }
                }
                (x, Some(gamma))
            }
        }
    }
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws η ~ LB(a, b, R) through its normal variance-mean mixture form.
pub fn sample_mvlb<R: Rng + ?Sized>(params: &LBParams, r: &CorrelationMatrix, rng: &mut R) -> Result<MVLBSample> {
    params.validate()?;
    let factor = GaussianFactor::new(r)?;
    Ok(sample_mvlb_with(params, &factor, rng).0)
}

/// Same as [`sample_mvlb`] with a precomputed factor. Also returns γ for
/// low-rank factors.
pub fn sample_mvlb_with<R: Rng + ?Sized>(
    params: &LBParams,
    factor: &GaussianFactor,
    rng: &mut R,
) -> (MVLBSample, Option<DVector<f64>>) {
    let lambda = sample_polya_unchecked(params, DEFAULT_TRUNCATION, rng);
    let (x, gamma) = factor.sample(rng);
    let m = 0.5 * lambda * (params.a - params.b);
    let s = lambda.sqrt();
    let eta = x.map(|v| m + s * v);
    (MVLBSample { eta, lambda }, gamma)
}

/// A realization of a logistic-beta process at finitely many points.
#[derive(Clone, Debug)]
pub struct LBPRealization {
    pub points: Points,
    pub eta: DVector<f64>,
    pub kernel: CorrelationKernel,
    pub shape: LBParams,
    pub lambda: f64,
    /// Coefficients γ of the hierarchical feature-map representation.
    pub gamma: Option<DVector<f64>>,
}

/// Draws a logistic-beta process path at `points`.
pub fn sample_lbp<R: Rng + ?Sized>(
    params: &LBParams,
    kernel: &CorrelationKernel,
    points: &Points,
    rng: &mut R,
) -> Result<LBPRealization> {
    params.validate()?;
    let r = build_matrix(kernel, points)?;
    let factor = GaussianFactor::new(&r)?;
    let (draw, gamma) = sample_mvlb_with(params, &factor, rng);
    let gamma = match kernel {
        CorrelationKernel::FeatureMap { .. } => gamma,
        _ => None,
    };
    Ok(LBPRealization {
        points: points.clone(),
        eta: draw.eta,
        kernel: kernel.clone(),
        shape: *params,
        lambda: draw.lambda,
        gamma,
    })
}

/// Linear-predictor form for feature-map kernels:
/// η = {ψ(a) − ψ(b)}(1 − Φ1) + Φβ with β ~ LB(a, b, I_q).
pub fn sample_lbp_linear_predictor<R: Rng + ?Sized>(
    params: &LBParams,
    phi: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    params.validate()?;
    let q = phi.ncols();
    let beta = sample_mvlb(params, &CorrelationMatrix::dense(DMatrix::identity(q, q)), rng)?.eta;
    let offset = digamma_unchecked(params.a) - digamma_unchecked(params.b);
    let row_sums = phi * DVector::from_element(q, 1.0);
    Ok(row_sums.map(|s| offset * (1.0 - s)) + phi * beta)
}

/// Gaussian conditional of η at `new_points` given a realization at its own
/// points: mean m + R_* R⁻¹ (η − m), covariance λ (R_** − R_* R⁻¹ R_*ᵀ).
pub fn lbp_conditional_gaussian(
    realized: &LBPRealization,
    new_points: &Points,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let kernel = &realized.kernel;
    let m = 0.5 * realized.lambda * (realized.shape.a - realized.shape.b);
    let n_new = new_points.len();

    if let (CorrelationKernel::FeatureMap { basis }, Some(gamma)) = (kernel, &realized.gamma) {
        // with γ known the path is deterministic
        let e = basis.evaluator()?;
        let mut mean = DVector::zeros(n_new);
        for i in 0..n_new {
            let phi = e.normalized(new_points.point(i))?;
            let dot: f64 = phi.iter().zip(gamma.iter()).map(|(p, g)| p * g).sum();
            mean[i] = m + realized.lambda.sqrt() * dot;
        }
        return Ok((mean, DMatrix::zeros(n_new, n_new)));
    }

    let r = build_matrix(kernel, &realized.points)?;
    let chol = jittered_cholesky(&r.matrix)?;
    let r_star = cross_matrix(kernel, new_points, &realized.points)?;
    let r_ss = build_matrix(kernel, new_points)?.matrix;
    let centered = realized.eta.map(|v| v - m);
    let k = chol.solve_matrix(&r_star.transpose()).transpose();
    let mean = (&k * centered).map(|v| v + m);
    let mut cov = (r_ss - &k * r_star.transpose()) * realized.lambda;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn density_values() {
        let p = ShapePair::new(1.0, 1.0).unwrap();
        assert!((lb_log_density(0.0, &p) - 0.25f64.ln()).abs() < 1e-15);
        let p = ShapePair::new(2.0, 4.0).unwrap();
        assert!((lb_log_density(0.0, &p) - 0.3125f64.ln()).abs() < 1e-12);
        assert!(lb_log_density(700.0, &p).is_finite());
        assert!(lb_log_density(-700.0, &p).is_finite());
    }

    #[test]
    fn moments_closed_forms() {
        let p = ShapePair::new(1.0, 2.0).unwrap();
        let (m, v, c) = mvlb_moments(&p, 0.3).unwrap();
        assert!((m + 1.0).abs() < 1e-13);
        assert!((v - (PI * PI / 3.0 - 1.0)).abs() < 1e-12);
        let (_, v1, c1) = mvlb_moments(&p, 1.0).unwrap();
        assert!((v1 - c1).abs() < 1e-13);
        assert!(c < c1);
        let p = ShapePair::new(2.0, 2.0).unwrap();
        let (_, _, c) = mvlb_moments(&p, 0.5).unwrap();
        assert!((c - (PI * PI / 6.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn correlation_range() {
        assert_eq!(corr_range(&ShapePair::new(3.0, 3.0).unwrap()).unwrap(), (-1.0, 1.0));
        let (lo, hi) = corr_range(&ShapePair::new(1.0, 2.0).unwrap()).unwrap();
        assert!((lo - (1.0 - 4.0 / (PI * PI / 3.0 - 1.0))).abs() < 1e-12);
        assert_eq!(hi, 1.0);
        let (lo2, _) = corr_range(&ShapePair::new(2.0, 1.0).unwrap()).unwrap();
        assert!((lo - lo2).abs() < 1e-15);
        // the lower end equals the covariance at R = −1 over the variance
        let p = ShapePair::new(0.7, 3.1).unwrap();
        let (_, v, c) = mvlb_moments(&p, -1.0).unwrap();
        assert!((corr_range(&p).unwrap().0 - c / v).abs() < 1e-12);
    }

    #[test]
    fn conditional_three_point_oracle() {
        let kernel = CorrelationKernel::Matern {
            range: 0.4,
            smoothness: 1.5,
        };
        let train = Points::from_1d(&[0.0, 0.5]);
        let shape = ShapePair::new(1.0, 2.0).unwrap();
        let lambda = 1.7;
        let eta = DVector::from_vec(vec![0.3, -0.8]);
        let realized = LBPRealization {
            points: train,
            eta: eta.clone(),
            kernel: kernel.clone(),
            shape,
            lambda,
            gamma: None,
        };
        let new = Points::from_1d(&[0.2]);
        let (mean, cov) = lbp_conditional_gaussian(&realized, &new).unwrap();

        // direct 3 × 3 partitioned-Gaussian algebra
        let all = Points::from_1d(&[0.0, 0.5, 0.2]);
        let r = build_matrix(&kernel, &all).unwrap().matrix * lambda;
        let m = 0.5 * lambda * (shape.a - shape.b);
        let s11 = r.view((0, 0), (2, 2)).into_owned();
        let s21 = r.view((2, 0), (1, 2)).into_owned();
        let inv = s11.try_inverse().unwrap();
        let mu = m + (&s21 * &inv * eta.map(|v| v - m))[0];
        let var = r[(2, 2)] - (&s21 * &inv * s21.transpose())[(0, 0)];
        assert!((mean[0] - mu).abs() < 1e-10);
        assert!((cov[(0, 0)] - var).abs() < 1e-10);
    }

    #[test]
    fn conditional_interpolates_and_decorrelates() {
        let kernel = CorrelationKernel::Matern {
            range: 0.3,
            smoothness: 1.5,
        };
        let realized = LBPRealization {
            points: Points::from_1d(&[0.0, 0.7]),
            eta: DVector::from_vec(vec![1.2, -0.4]),
            kernel,
            shape: ShapePair::new(2.0, 4.0).unwrap(),
            lambda: 2.5,
            gamma: None,
        };
        let (mean, cov) = lbp_conditional_gaussian(&realized, &Points::from_1d(&[0.7, 1e4])).unwrap();
        assert!((mean[0] + 0.4).abs() < 1e-8);
        assert!(cov[(0, 0)].abs() < 1e-8);
        assert!((mean[1] - 0.5 * 2.5 * (2.0 - 4.0)).abs() < 1e-12);
        assert!((cov[(1, 1)] - 2.5).abs() < 1e-12);
    }
}

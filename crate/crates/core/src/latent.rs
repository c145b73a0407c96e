//! Gaussian machinery shared by the latent-field samplers: the collapsed
//! likelihood of λ after integrating out η, exact draws of η given Pólya-Gamma
//! pseudo-observations, and Gaussian prediction at new points.
//!
//! Observations may cover only a subset of the points at which the latent
//! field lives; the unobserved coordinates are drawn from their conditional.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{build_matrix, cross_matrix, CorrelationKernel, CorrelationMatrix, Points};
use crate::linalg::{jittered_cholesky, JitteredCholesky};
use crate::logistic_beta::standard_normal_vector;
use crate::polya::ShapePair;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which algebra the η updates use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    FullRank,
    LowRank,
}

/// Mean of the latent field, 0.5 λ (a − b).
pub fn latent_mean(lambda: f64, shape: &ShapePair) -> f64 {
    0.5 * lambda * (shape.a - shape.b)
}

/// Draws an index with probabilities proportional to exp(log_weights).
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::INFINITY {
        return log_weights.iter().position(|&w| w == f64::INFINITY).unwrap_or(0);
    }
    let w: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.random_range(0..log_weights.len());
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, &wk) in w.iter().enumerate() {
        acc += wk;
        if u < acc {
            return k;
        }
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// The prior N(0.5λ(a−b)1, λR) of a latent field at a fixed set of points.
#[derive(Clone, Debug)]
pub struct LatentGaussian {
    r: CorrelationMatrix,
    rep: Representation,
    dense: Option<JitteredCholesky>,
}

impl LatentGaussian {
    pub fn new(r: CorrelationMatrix, rep: Representation) -> Result<Self> {
        let dense = match (rep, &r.factor) {
            (Representation::LowRank, None) => {
                return Err(Error::invalid(
                    "low-rank updates need a kernel with a low-rank factor",
                ))
            }
            (Representation::LowRank, Some(f)) => {
                if f.diag.iter().all(|&d| d > 1e-8) {
                    Some(jittered_cholesky(&r.matrix)?)
                } else {
                    None
                }
            }
            (Representation::FullRank, _) => Some(jittered_cholesky(&r.matrix)?),
        };
        Ok(LatentGaussian { r, rep, dense })
    }

    pub fn from_kernel(kernel: &CorrelationKernel, points: &Points, rep: Representation) -> Result<Self> {
        Self::new(build_matrix(kernel, points)?, rep)
    }

    pub fn n(&self) -> usize {
        self.r.n()
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.r
    }

    pub fn representation(&self) -> Representation {
        self.rep
    }

    /// A draw from the prior given λ. Low-rank draws also return γ.
    pub fn prior_draw<R: Rng + ?Sized>(
        &self,
        lambda: f64,
        shape: &ShapePair,
        rng: &mut R,
    ) -> (DVector<f64>, Option<DVector<f64>>) {
        let m = latent_mean(lambda, shape);
        let s = lambda.sqrt();
        match (self.rep, &self.r.factor) {
            (Representation::LowRank, Some(f)) => {
                let gamma = standard_normal_vector(f.phi.ncols(), rng);
                let mut eta = (&f.phi * &gamma).map(|v| m + s * v);
                for i in 0..eta.len() {
                    if f.diag[i] > 0.0 {
                        let e: f64 = rng.sample(rand_distr::StandardNormal);
                        eta[i] += s * f.diag[i].sqrt() * e;
                    }
                }
                (eta, Some(gamma))
            }
            _ => {
                let chol = self.dense.as_ref().expect("dense factor present for full-rank");
                let z = standard_normal_vector(self.n(), rng);
                (chol.mul_lower(&z).map(|v| m + s * v), None)
            }
        }
    }

    /// Restriction to the observed coordinates `idx`.
    pub fn observe(&self, idx: &[usize]) -> ObservedBlock {
        let kind = match (self.rep, &self.r.factor) {
            (Representation::LowRank, Some(f)) => BlockKind::LowRank {
                phi: DMatrix::from_fn(idx.len(), f.phi.ncols(), |i, k| f.phi[(idx[i], k)]),
                diag: DVector::from_fn(idx.len(), |i, _| f.diag[idx[i]]),
            },
            _ => BlockKind::Dense {
                r: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.r.matrix[(idx[i], idx[j])]),
            },
        };
        ObservedBlock {
            idx: idx.to_vec(),
            kind,
        }
    }

    /// ln N(η; 0.5λ(a−b)1, λR) as a function of λ, for a fixed η.
    pub fn eta_quadratic(&self, eta: &DVector<f64>) -> Result<EtaQuadratic> {
        let chol = self.dense.as_ref().ok_or_else(|| {
            Error::invalid("the η-conditioned density needs a full-rank correlation matrix")
        })?;
        let u = chol.solve_lower(eta);
        let v = chol.solve_lower(&DVector::from_element(eta.len(), 1.0));
        Ok(EtaQuadratic {
            uu: u.dot(&u),
            uv: u.dot(&v),
            vv: v.dot(&v),
            ln_det: chol.ln_det(),
            n: eta.len() as f64,
        })
    }

    /// Mean and covariance of η given λ and pseudo-observations on `block`.
    pub fn conditional_moments(
        &self,
        block: &ObservedBlock,
        lambda: f64,
        shape: &ShapePair,
        data: &PgData,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        let m = latent_mean(lambda, shape);
        let r_full = match (self.rep, &self.r.factor) {
            (Representation::LowRank, Some(f)) => {
                let mut r = &f.phi * f.phi.transpose();
                for i in 0..n {
                    r[(i, i)] += f.diag[i];
                }
                r
            }
            _ => self.r.matrix.clone(),
        };
        if block.is_empty() {
            return Ok((DVector::from_element(n, m), r_full * lambda));
        }
        let cinv = block.inverse_covariance(lambda, data)?;
        let resid = DVector::from_fn(block.len(), |i, _| data.kappa[i] / data.omega[i] - m);
        let r_ni = DMatrix::from_fn(n, block.len(), |i, j| r_full[(i, block.idx[j])]);
        let mean = (&r_ni * (&cinv * resid)).map(|v| m + lambda * v);
        let mut cov = &r_full * lambda - (&r_ni * &cinv * r_ni.transpose()) * (lambda * lambda);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean, cov))
    }

    /// Exact draw of η over all points given λ and the pseudo-observations on
    /// `block`. `eval` may carry the factorization from a likelihood
    /// evaluation at the same λ and shape.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        block: &ObservedBlock,
        lambda: f64,
        shape: &ShapePair,
        data: &PgData,
        eval: Option<&CollapsedEval>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
        if block.is_empty() {
            return Ok(self.prior_draw(lambda, shape, rng));
        }
        let fresh;
        let eval = match eval {
            Some(e) if e.lambda == lambda && e.shape == *shape => e,
            _ => {
                fresh = block.collapsed_eval(lambda, shape, data)?;
                &fresh
            }
        };
        let m = latent_mean(lambda, shape);
        match (&block.kind, &eval.factor) {
            (BlockKind::Dense { .. }, LikFactor::Scaled(chol)) => {
                // pathwise update: η = η₀ + λ R_{·,I} C⁻¹ (y − η₀,I − ε)
                let (eta0, _) = self.prior_draw(lambda, shape, rng);
                let k = block.len();
                let xi = standard_normal_vector(k, rng);
                let v = DVector::from_fn(k, |i, _| {
                    let s = data.omega[i].sqrt();
                    data.kappa[i] / s - s * eta0[block.idx[i]] - xi[i]
                });
                let t = chol.solve(&v);
                let u = DVector::from_fn(k, |i, _| data.omega[i].sqrt() * t[i]);
                let n = self.n();
                let mut eta = eta0;
                for row in 0..n {
                    let mut acc = 0.0;
                    for (j, &col) in block.idx.iter().enumerate() {
                        acc += self.r.matrix[(row, col)] * u[j];
                    }
                    eta[row] += lambda * acc;
                }
                Ok((eta, None))
            }
            (BlockKind::LowRank { phi, diag }, LikFactor::Woodbury(chol)) => {
                let f = self.r.factor.as_ref().expect("low-rank block comes from a factor");
                let k = block.len();
                let wr = DVector::from_fn(k, |i, _| {
                    (data.kappa[i] - m * data.omega[i]) / (1.0 + lambda * diag[i] * data.omega[i])
                });
                let mu = chol.solve(&(phi.transpose() * wr * lambda.sqrt()));
                let z = standard_normal_vector(mu.len(), rng);
                let l = chol.l();
                let lt_inv_z = l
                    .transpose()
                    .solve_upper_triangular(&z)
                    .ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
                let gamma = mu + lt_inv_z;
                let s = lambda.sqrt();
                let f_all = (&f.phi * &gamma) * s;
                let mut eta = f_all.map(|v| m + v);
                let mut observed_at = vec![usize::MAX; self.n()];
                for (j, &i) in block.idx.iter().enumerate() {
                    observed_at[i] = j;
                }
                for i in 0..self.n() {
                    let d = f.diag[i];
                    if d <= 0.0 {
                        continue;
                    }
                    let e: f64 = rng.sample(rand_distr::StandardNormal);
                    let j = observed_at[i];
                    if j == usize::MAX {
                        eta[i] += s * d.sqrt() * e;
                    } else {
                        let prec = 1.0 / (lambda * d) + data.omega[j];
                        let mean = (data.kappa[j] - data.omega[j] * (m + f_all[i])) / prec;
                        eta[i] += mean + e / prec.sqrt();
                    }
                }
                Ok((eta, Some(gamma)))
            }
            _ => Err(Error::invalid("likelihood factor does not match the observed block")),
        }
    }
}

/// λ-dependence of ln N(η; 0.5λ(a−b)1, λR) for a fixed η, through
/// u = L⁻¹η and v = L⁻¹1.
#[derive(Clone, Copy, Debug)]
pub struct EtaQuadratic {
    uu: f64,
    uv: f64,
    vv: f64,
    ln_det: f64,
    n: f64,
}

impl EtaQuadratic {
    pub fn log_density(&self, lambda: f64, shape: &ShapePair) -> f64 {
        let m = latent_mean(lambda, shape);
        let q = self.uu - 2.0 * m * self.uv + m * m * self.vv;
        -0.5 * (self.n * (LN_2PI + lambda.ln()) + self.ln_det + q / lambda)
    }
}

/// Pólya-Gamma pseudo-data on the observed coordinates: κ = z − 1/2 and ω.
#[derive(Clone, Debug, PartialEq)]
pub struct PgData {
    pub kappa: DVector<f64>,
    pub omega: DVector<f64>,
}

impl PgData {
    pub fn new(z: &[u8], omega: DVector<f64>) -> Result<Self> {
        if z.len() != omega.len() {
            return Err(Error::Dimension(format!(
                "{} outcomes vs {} Pólya-Gamma draws",
                z.len(),
                omega.len()
            )));
        }
        Ok(PgData {
            kappa: DVector::from_iterator(z.len(), z.iter().map(|&v| v as f64 - 0.5)),
            omega,
        })
    }
}

#[derive(Clone, Debug)]
enum BlockKind {
    Dense { r: DMatrix<f64> },
    LowRank { phi: DMatrix<f64>, diag: DVector<f64> },
}

/// The correlation structure restricted to the observed coordinates.
#[derive(Clone, Debug)]
pub struct ObservedBlock {
    idx: Vec<usize>,
    kind: BlockKind,
}

#[derive(Clone, Debug)]
enum LikFactor {
    /// Factor of λ Ω^½ R Ω^½ + I.
    Scaled(Cholesky<f64, Dyn>),
    /// Factor of I + λ Φᵀ W Φ.
    Woodbury(Cholesky<f64, Dyn>),
    Empty,
}

/// A collapsed likelihood value together with the factorization behind it.
#[derive(Clone, Debug)]
pub struct CollapsedEval {
    pub lambda: f64,
    pub shape: ShapePair,
    pub log_lik: f64,
    factor: LikFactor,
}

impl ObservedBlock {
    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    /// ln N(Ω⁻¹κ; 0.5λ(a−b)1, λR + Ω⁻¹), evaluated without forming Ω⁻¹.
    pub fn collapsed_eval(&self, lambda: f64, shape: &ShapePair, data: &PgData) -> Result<CollapsedEval> {
        let k = self.len();
        if data.kappa.len() != k || data.omega.len() != k {
            return Err(Error::Dimension(format!(
                "{} observed coordinates vs {} pseudo-observations",
                k,
                data.kappa.len()
            )));
        }
        if !(lambda > 0.0) {
            return Err(Error::Domain {
                function: "collapsed likelihood",
                value: lambda,
                requirement: "lambda > 0",
            });
        }
        let m = latent_mean(lambda, shape);
        if k == 0 {
            return Ok(CollapsedEval {
                lambda,
                shape: *shape,
                log_lik: 0.0,
                factor: LikFactor::Empty,
            });
        }
        let sum_ln_omega: f64 = data.omega.iter().map(|w| w.ln()).sum();
        match &self.kind {
            BlockKind::Dense { r } => {
                let s = data.omega.map(f64::sqrt);
                let mut c = DMatrix::from_fn(k, k, |i, j| lambda * s[i] * r[(i, j)] * s[j]);
                for i in 0..k {
                    c[(i, i)] += 1.0;
                }
                let chol = Cholesky::new(c).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
                let rt = DVector::from_fn(k, |i, _| (data.kappa[i] - m * data.omega[i]) / s[i]);
                let quad = rt.dot(&chol.solve(&rt));
                let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() - sum_ln_omega;
                Ok(CollapsedEval {
                    lambda,
                    shape: *shape,
                    log_lik: -0.5 * (k as f64 * LN_2PI + ln_det + quad),
                    factor: LikFactor::Scaled(chol),
                })
            }
            BlockKind::LowRank { phi, diag } => {
                let q = phi.ncols();
                let g = DVector::from_fn(k, |i, _| 1.0 + lambda * diag[i] * data.omega[i]);
                let w = DVector::from_fn(k, |i, _| data.omega[i] / g[i]);
                let mut a = DMatrix::identity(q, q);
                for i in 0..k {
                    for p in 0..q {
                        let wp = lambda * w[i] * phi[(i, p)];
                        for t in 0..q {
                            a[(p, t)] += wp * phi[(i, t)];
                        }
                    }
                }
                let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
                let num = DVector::from_fn(k, |i, _| data.kappa[i] - m * data.omega[i]);
                let wr = DVector::from_fn(k, |i, _| num[i] / g[i]);
                let rwr: f64 = (0..k).map(|i| num[i] * num[i] / (data.omega[i] * g[i])).sum();
                let u = phi.transpose() * wr;
                let quad = rwr - lambda * u.dot(&chol.solve(&u));
                let ln_det = g.iter().map(|v| v.ln()).sum::<f64>() - sum_ln_omega
                    + 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(CollapsedEval {
                    lambda,
                    shape: *shape,
                    log_lik: -0.5 * (k as f64 * LN_2PI + ln_det + quad),
                    factor: LikFactor::Woodbury(chol),
                })
            }
        }
    }

    /// (λR + Ω⁻¹)⁻¹ on the observed block, as a dense matrix.
    fn inverse_covariance(&self, lambda: f64, data: &PgData) -> Result<DMatrix<f64>> {
        let k = self.len();
        match &self.kind {
            BlockKind::Dense { r } => {
                let s = data.omega.map(f64::sqrt);
                let mut c = DMatrix::from_fn(k, k, |i, j| lambda * s[i] * r[(i, j)] * s[j]);
                for i in 0..k {
                    c[(i, i)] += 1.0;
                }
                let chol = Cholesky::new(c).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
                let inv = chol.inverse();
                Ok(DMatrix::from_fn(k, k, |i, j| s[i] * inv[(i, j)] * s[j]))
            }
            BlockKind::LowRank { phi, diag } => {
                let q = phi.ncols();
                let w = DVector::from_fn(k, |i, _| data.omega[i] / (1.0 + lambda * diag[i] * data.omega[i]));
                let wphi = DMatrix::from_fn(k, q, |i, p| w[i] * phi[(i, p)]);
                let a = DMatrix::identity(q, q) + phi.transpose() * &wphi * lambda;
                let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
                let mut out = -(&wphi * chol.solve(&wphi.transpose())) * lambda;
                for i in 0..k {
                    out[(i, i)] += w[i];
                }
                Ok(out)
            }
        }
    }
}

/// Gaussian prediction of a latent field at new points from its values at
/// training points: mean m + K(η − m), pointwise variance λ v.
#[derive(Clone, Debug)]
pub struct ConditionalPredictor {
    k: DMatrix<f64>,
    var: DVector<f64>,
}

impl ConditionalPredictor {
    /// Uses a truncated eigen-inverse of R so that rank-deficient kernels
    /// interpolate within their span.
    pub fn new(kernel: &CorrelationKernel, train: &Points, new_points: &Points) -> Result<Self> {
        let r = build_matrix(kernel, train)?.matrix;
        let r_star = cross_matrix(kernel, new_points, train)?;
        let eig = r.symmetric_eigen();
        let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
        let cut = 1e-10 * max.max(1e-300);
        let n = train.len();
        let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > cut).collect();
        let u = DMatrix::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
        let inv_vals = DVector::from_fn(keep.len(), |j, _| 1.0 / eig.eigenvalues[keep[j]]);
        let su = &r_star * &u;
        let scaled = DMatrix::from_fn(su.nrows(), su.ncols(), |i, j| su[(i, j)] * inv_vals[j]);
        let k = scaled * u.transpose();
        let var = DVector::from_fn(new_points.len(), |i, _| {
            let explained: f64 = (0..n).map(|j| k[(i, j)] * r_star[(i, j)]).sum();
            (1.0 - explained).max(0.0)
        });
        Ok(ConditionalPredictor { k, var })
    }

    pub fn n_new(&self) -> usize {
        self.k.nrows()
    }

    pub fn mean_var(&self, eta: &DVector<f64>, lambda: f64, shape: &ShapePair) -> (DVector<f64>, DVector<f64>) {
        let m = latent_mean(lambda, shape);
        let mean = (&self.k * eta.map(|v| v - m)).map(|v| v + m);
        (mean, self.var.map(|v| v * lambda))
    }

    /// Independent pointwise draws from the conditional marginals.
    pub fn sample_pointwise<R: Rng + ?Sized>(
        &self,
        eta: &DVector<f64>,
        lambda: f64,
        shape: &ShapePair,
        rng: &mut R,
    ) -> DVector<f64> {
        let (mean, var) = self.mean_var(eta, lambda, shape);
        let z = standard_normal_vector(mean.len(), rng);
        DVector::from_fn(mean.len(), |i, _| mean[i] + var[i].sqrt() * z[i])
    }
}

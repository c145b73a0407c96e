//! Correlation kernels and correlation-matrix construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::jittered_cholesky;
use crate::special::{bessel_k_temme, bessel_k};

/// A list of points in R^dim, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        Ok(Points { dim, coords })
    }

    pub fn from_1d(xs: &[f64]) -> Self {
        Points {
            dim: 1,
            coords: xs.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn subset(&self, idx: &[usize]) -> Points {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        Points {
            dim: self.dim,
            coords,
        }
    }

    pub fn concat(&self, other: &Points) -> Result<Points> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "cannot join points of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(Points {
            dim: self.dim,
            coords,
        })
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Matérn correlation at distance `d` with range `rho` and smoothness `nu`.
///
/// Smoothness 1/2, 3/2 and 5/2 use their elementary forms.
pub fn matern(d: f64, rho: f64, nu: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let t = d / rho;
    if nu == 0.5 {
        (-t).exp()
    } else if nu == 1.5 {
        (1.0 + t) * (-t).exp()
    } else if nu == 2.5 {
        (1.0 + t + t * t / 3.0) * (-t).exp()
    } else {
        match bessel_k(nu, t) {
            Ok(k) => matern_from_bessel(t, nu, k),
            Err(_) => 1.0,
        }
    }
}

fn matern_from_bessel(t: f64, nu: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    let ln = (1.0 - nu) * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(nu)
        + nu * t.ln()
        + k.ln();
    ln.exp().min(1.0)
}

/// Matérn correlation through the general Bessel formula, without the
/// elementary shortcuts.
pub fn matern_general(d: f64, rho: f64, nu: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let t = d / rho;
    matern_from_bessel(t, nu, bessel_k_temme(nu, t))
}

/// AR(1) correlation ρ^|t − t′|.
pub fn ar1(t: i64, t_prime: i64, rho: f64) -> f64 {
    let lag = (t - t_prime).unsigned_abs();
    if lag == 0 {
        1.0
    } else {
        rho.powi(lag.min(i32::MAX as u64) as i32)
    }
}

/// Unnormalized basis functions for a feature-map kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisSpec {
    /// A single constant function; the kernel is identically one.
    Constant,
    /// Natural cubic splines on [lower, upper] with the given interior knots.
    /// The intercept is part of the span, so q = interior_knots.len() + 2.
    NaturalCubicSpline {
        lower: f64,
        upper: f64,
        interior_knots: Vec<f64>,
    },
}

impl BasisSpec {
    /// Natural spline basis with `df` functions (intercept included) and
    /// interior knots at empirical quantiles of `xs`.
    pub fn natural_spline_quantile_knots(xs: &[f64], df: usize, lower: f64, upper: f64) -> Result<Self> {
        if df < 2 {
            return Err(Error::invalid("spline basis needs at least 2 degrees of freedom"));
        }
        if xs.is_empty() {
            return Err(Error::EmptyInput("natural_spline_quantile_knots"));
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n_interior = df - 2;
        let knots = (1..=n_interior)
            .map(|j| crate::stats::quantile_sorted(&sorted, j as f64 / (n_interior + 1) as f64))
            .collect();
        Self::natural_spline(lower, upper, knots)
    }

    /// Natural spline basis with `df` functions and equally spaced knots.
    pub fn natural_spline_uniform_knots(lower: f64, upper: f64, df: usize) -> Result<Self> {
        if df < 2 {
            return Err(Error::invalid("spline basis needs at least 2 degrees of freedom"));
        }
        let n_interior = df - 2;
        let knots = (1..=n_interior)
            .map(|j| lower + (upper - lower) * j as f64 / (n_interior + 1) as f64)
            .collect();
        Self::natural_spline(lower, upper, knots)
    }

    pub fn natural_spline(lower: f64, upper: f64, interior_knots: Vec<f64>) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::invalid(format!("spline domain [{lower}, {upper}] is empty")));
        }
        if interior_knots.iter().any(|&k| !(k > lower && k < upper)) {
            return Err(Error::invalid("interior knots must lie strictly inside the domain"));
        }
        if interior_knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("interior knots must be strictly increasing"));
        }
        Ok(BasisSpec::NaturalCubicSpline {
            lower,
            upper,
            interior_knots,
        })
    }

    pub fn dimension(&self) -> usize {
        match self {
            BasisSpec::Constant => 1,
            BasisSpec::NaturalCubicSpline { interior_knots, .. } => interior_knots.len() + 2,
        }
    }

    pub fn evaluator(&self) -> Result<BasisEvaluator> {
        match self {
            BasisSpec::Constant => Ok(BasisEvaluator::Constant),
            BasisSpec::NaturalCubicSpline {
                lower,
                upper,
                interior_knots,
            } => Ok(BasisEvaluator::Spline(SplineBasis::new(*lower, *upper, interior_knots)?)),
        }
    }
}

/// Precomputed form of a [`BasisSpec`].
#[derive(Clone, Debug)]
pub enum BasisEvaluator {
    Constant,
    Spline(SplineBasis),
}

impl BasisEvaluator {
    pub fn dimension(&self) -> usize {
        match self {
            BasisEvaluator::Constant => 1,
            BasisEvaluator::Spline(s) => s.null.ncols(),
        }
    }

    /// Unnormalized feature vector φ̃(x).
    pub fn raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            BasisEvaluator::Constant => Ok(vec![1.0]),
            BasisEvaluator::Spline(s) => {
                if x.len() != 1 {
                    return Err(Error::Dimension("spline bases take scalar inputs".into()));
                }
                s.eval(x[0])
            }
        }
    }

    /// Normalized feature vector φ(x) = φ̃(x) / ‖φ̃(x)‖.
    pub fn normalized(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.raw(x)?;
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 1e-300) {
            return Err(Error::invalid(format!(
                "feature vector vanishes at {x:?}; cannot normalize"
            )));
        }
        for a in &mut v {
            *a /= norm;
        }
        Ok(v)
    }
}

/// Natural cubic spline basis: cubic B-splines projected onto the subspace
/// with zero second derivative at both boundary knots.
#[derive(Clone, Debug)]
pub struct SplineBasis {
    lower: f64,
    upper: f64,
    knots: Vec<f64>,
    null: DMatrix<f64>,
}

const SPLINE_ORDER: usize = 4;

fn bspline(t: &[f64], j: usize, k: usize, x: f64, deriv: usize) -> f64 {
    if deriv > 0 {
        let mut v = 0.0;
        let d1 = t[j + k - 1] - t[j];
        if d1 > 0.0 {
            v += bspline(t, j, k - 1, x, deriv - 1) / d1;
        }
        let d2 = t[j + k] - t[j + 1];
        if d2 > 0.0 {
            v -= bspline(t, j + 1, k - 1, x, deriv - 1) / d2;
        }
        return (k - 1) as f64 * v;
    }
    if k == 1 {
        let last = t[t.len() - 1];
        let inside = t[j] <= x && x < t[j + 1];
        // the right end point belongs to the last non-empty interval
        let right_end = x == last && t[j] < t[j + 1] && t[j + 1] == last;
        return if inside || right_end { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = t[j + k - 1] - t[j];
    if d1 > 0.0 {
        v += (x - t[j]) / d1 * bspline(t, j, k - 1, x, 0);
    }
    let d2 = t[j + k] - t[j + 1];
    if d2 > 0.0 {
        v += (t[j + k] - x) / d2 * bspline(t, j + 1, k - 1, x, 0);
    }
    v
}

impl SplineBasis {
    fn new(lower: f64, upper: f64, interior: &[f64]) -> Result<Self> {
        let mut knots = vec![lower; SPLINE_ORDER];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(upper, SPLINE_ORDER));
        let nb = knots.len() - SPLINE_ORDER;
        let mut c = DMatrix::zeros(2, nb);
        for j in 0..nb {
            c[(0, j)] = bspline(&knots, j, SPLINE_ORDER, lower, 2);
            c[(1, j)] = bspline(&knots, j, SPLINE_ORDER, upper, 2);
        }
        // orthogonal projector onto the null space of the constraints
        let cct = &c * c.transpose();
        let inv = cct
            .try_inverse()
            .ok_or_else(|| Error::invalid("degenerate spline boundary constraints"))?;
        let proj = DMatrix::identity(nb, nb) - c.transpose() * inv * &c;
        let eig = proj.symmetric_eigen();
        let keep: Vec<usize> = (0..nb).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        if keep.len() != nb - 2 {
            return Err(Error::invalid("spline constraint projector has unexpected rank"));
        }
        let mut null = DMatrix::zeros(nb, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            null.set_column(col, &eig.eigenvectors.column(i));
        }
        Ok(SplineBasis {
            lower,
            upper,
            knots,
            null,
        })
    }

    fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let tol = 1e-12 * (self.upper - self.lower);
        if x < self.lower - tol || x > self.upper + tol {
            return Err(Error::Domain {
                function: "spline basis",
                value: x,
                requirement: "x within the basis domain",
            });
        }
        let x = x.clamp(self.lower, self.upper);
        let nb = self.null.nrows();
        let b = DVector::from_iterator(nb, (0..nb).map(|j| bspline(&self.knots, j, SPLINE_ORDER, x, 0)));
        Ok((self.null.transpose() * b).iter().copied().collect())
    }
}

/// Evaluates the normalized feature map at one point.
pub fn feature_map_eval(spec: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    spec.evaluator()?.normalized(x)
}

/// A correlation kernel with unit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorrelationKernel {
    Matern {
        range: f64,
        smoothness: f64,
    },
    /// Points are integer time indices stored in the first coordinate.
    Ar1 {
        rho: f64,
    },
    FeatureMap {
        basis: BasisSpec,
    },
    ModifiedPredictiveProcess {
        parent: Box<CorrelationKernel>,
        knots: Points,
    },
}

/// R = Φ Φᵀ + diag(d).
#[derive(Clone, Debug)]
pub struct LowRankFactor {
    pub phi: DMatrix<f64>,
    pub diag: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    pub matrix: DMatrix<f64>,
    pub factor: Option<LowRankFactor>,
}

impl CorrelationMatrix {
    pub fn dense(matrix: DMatrix<f64>) -> Self {
        CorrelationMatrix {
            matrix,
            factor: None,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Restriction to a subset of indices.
    pub fn subset(&self, idx: &[usize]) -> CorrelationMatrix {
        let m = idx.len();
        let matrix = DMatrix::from_fn(m, m, |i, j| self.matrix[(idx[i], idx[j])]);
        let factor = self.factor.as_ref().map(|f| LowRankFactor {
            phi: DMatrix::from_fn(m, f.phi.ncols(), |i, k| f.phi[(idx[i], k)]),
            diag: DVector::from_fn(m, |i, _| f.diag[idx[i]]),
        });
        CorrelationMatrix { matrix, factor }
    }
}

impl CorrelationKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            CorrelationKernel::Matern { range, smoothness } => {
                if !(*range > 0.0 && range.is_finite()) || !(*smoothness > 0.0 && smoothness.is_finite()) {
                    return Err(Error::invalid(format!(
                        "Matérn needs positive range and smoothness, got ({range}, {smoothness})"
                    )));
                }
            }
            CorrelationKernel::Ar1 { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::invalid(format!("AR(1) needs |rho| < 1, got {rho}")));
                }
            }
            CorrelationKernel::FeatureMap { .. } => {}
            CorrelationKernel::ModifiedPredictiveProcess { parent, knots } => {
                parent.validate()?;
                if knots.is_empty() {
                    return Err(Error::EmptyInput("predictive-process knots"));
                }
            }
        }
        Ok(())
    }

    /// The same kernel with its range parameter replaced. Kernels without a
    /// range are returned unchanged.
    pub fn with_range(&self, new_range: f64) -> CorrelationKernel {
        match self {
            CorrelationKernel::Matern { smoothness, .. } => CorrelationKernel::Matern {
                range: new_range,
                smoothness: *smoothness,
            },
            CorrelationKernel::ModifiedPredictiveProcess { parent, knots } => {
                CorrelationKernel::ModifiedPredictiveProcess {
                    parent: Box::new(parent.with_range(new_range)),
                    knots: knots.clone(),
                }
            }
            other => other.clone(),
        }
    }

    pub fn range(&self) -> Option<f64> {
        match self {
            CorrelationKernel::Matern { range, .. } => Some(*range),
            CorrelationKernel::ModifiedPredictiveProcess { parent, .. } => parent.range(),
            _ => None,
        }
    }

    /// Whether matrices from this kernel come with a low-rank factor.
    pub fn is_low_rank(&self) -> bool {
        matches!(
            self,
            CorrelationKernel::FeatureMap { .. } | CorrelationKernel::ModifiedPredictiveProcess { .. }
        )
    }

    /// Kernel value for a pair of points (stationary and feature-map kernels).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            CorrelationKernel::Matern { range, smoothness } => Ok(matern(distance(x, y), *range, *smoothness)),
            CorrelationKernel::Ar1 { rho } => Ok(ar1(x[0].round() as i64, y[0].round() as i64, *rho)),
            CorrelationKernel::FeatureMap { basis } => {
                let e = basis.evaluator()?;
                let a = e.normalized(x)?;
                let b = e.normalized(y)?;
                Ok(a.iter().zip(&b).map(|(p, q)| p * q).sum())
            }
            CorrelationKernel::ModifiedPredictiveProcess { .. } => {
                let pts = Points::new(x.len(), [x, y].concat())?;
                let m = build_matrix(self, &pts)?;
                Ok(m.matrix[(0, 1)])
            }
        }
    }
}

/// Cross-correlation block between two point sets.
pub fn cross_matrix(kernel: &CorrelationKernel, a: &Points, b: &Points) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if a.dim() != b.dim() {
        return Err(Error::Dimension("point sets have different dimensions".into()));
    }
    match kernel {
        CorrelationKernel::Matern { .. } | CorrelationKernel::Ar1 { .. } => {
            let mut m = DMatrix::zeros(a.len(), b.len());
            for i in 0..a.len() {
                for j in 0..b.len() {
                    m[(i, j)] = kernel.eval(a.point(i), b.point(j))?;
                }
            }
            Ok(m)
        }
        CorrelationKernel::FeatureMap { basis } => {
            let e = basis.evaluator()?;
            let fa = feature_rows(&e, a)?;
            let fb = feature_rows(&e, b)?;
            Ok(fa * fb.transpose())
        }
        CorrelationKernel::ModifiedPredictiveProcess { parent, knots } => {
            let wa = mpp_weights(parent, knots, a)?;
            let wb = mpp_weights(parent, knots, b)?;
            let mut m = wa.transpose() * wb;
            for i in 0..a.len() {
                for j in 0..b.len() {
                    if a.point(i) == b.point(j) {
                        m[(i, j)] = 1.0;
                    }
                }
            }
            Ok(m)
        }
    }
}

fn feature_rows(e: &BasisEvaluator, pts: &Points) -> Result<DMatrix<f64>> {
    let q = e.dimension();
    let mut phi = DMatrix::zeros(pts.len(), q);
    for i in 0..pts.len() {
        let v = e.normalized(pts.point(i))?;
        for k in 0..q {
            phi[(i, k)] = v[k];
        }
    }
    Ok(phi)
}

/// Columns w_i = L_uu⁻¹ r(x_i), so that r(x)ᵀ R_uu⁻¹ r(x′) = w(x)ᵀ w(x′).
fn mpp_weights(parent: &CorrelationKernel, knots: &Points, pts: &Points) -> Result<DMatrix<f64>> {
    let ruu = build_matrix(parent, knots)?.matrix;
    let chol = jittered_cholesky(&ruu)?;
    let r = cross_matrix(parent, knots, pts)?;
    let l = chol.l();
    l.solve_lower_triangular(&r)
        .ok_or(Error::NotPositiveDefinite { jitter: chol.jitter })
}

/// Correlation matrix R_ij = 𝓡(x_i, x_j), with a low-rank factor for the
/// feature-map and predictive-process kernels.
pub fn build_matrix(kernel: &CorrelationKernel, points: &Points) -> Result<CorrelationMatrix> {
    kernel.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("build_matrix"));
    }
    let n = points.len();
    match kernel {
        CorrelationKernel::Matern { .. } | CorrelationKernel::Ar1 { .. } => {
            let mut m = DMatrix::identity(n, n);
            for i in 0..n {
                for j in 0..i {
                    let v = kernel.eval(points.point(i), points.point(j))?;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            Ok(CorrelationMatrix::dense(m))
        }
        CorrelationKernel::FeatureMap { basis } => {
            let e = basis.evaluator()?;
            let phi = feature_rows(&e, points)?;
            let mut m = &phi * phi.transpose();
            for i in 0..n {
                m[(i, i)] = 1.0;
            }
            Ok(CorrelationMatrix {
                matrix: m,
                factor: Some(LowRankFactor {
                    phi,
                    diag: DVector::zeros(n),
                }),
            })
        }
        CorrelationKernel::ModifiedPredictiveProcess { parent, knots } => {
            let w = mpp_weights(parent, knots, points)?;
            let phi = w.transpose();
            let mut m = &phi * phi.transpose();
            let mut diag = DVector::zeros(n);
            for i in 0..n {
                diag[i] = (1.0 - m[(i, i)]).max(0.0);
                m[(i, i)] = 1.0;
            }
            Ok(CorrelationMatrix {
                matrix: m,
                factor: Some(LowRankFactor { phi, diag }),
            })
        }
    }
}

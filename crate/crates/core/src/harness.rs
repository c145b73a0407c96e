//! Simulation scenarios, error metrics and MCMC diagnostics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binary_regression::ChainOutput;
use crate::error::{Error, Result};
use crate::kernels::{CorrelationKernel, Points};
use crate::latent::{LatentGaussian, Representation};
use crate::polya::ShapePair;
use crate::special::{logistic, normal_cdf, normal_log_pdf};

/// Data-generating process behind the simulated datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Binary data on [0, 3] with pr{z = 1} = σ{cos(πx)}; the middle third is
    /// sparsely observed.
    Cosine600 { n: usize },
    /// Binary data on [0, 1]² from a latent process with Matérn(ϱ, 1.5)
    /// dependence and Beta(1, 2) marginal success probabilities.
    SpatialBinary {
        truth: SpatialTruth,
        range: f64,
        n: usize,
        n_test: usize,
    },
    /// Two-component regression mixture with covariate-dependent weights.
    ScenarioA { n: usize },
    /// Piecewise normal regression on [−2, 10].
    ScenarioB { n: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialTruth {
    /// Logistic-beta process with (a, b) = (1, 2).
    Lbp,
    /// Gaussian process mapped through the Beta(1, 2) quantile function.
    GaussianCopula,
}

pub const SPATIAL_RANGES: [f64; 3] = [0.1, 0.2, 0.4];

impl ScenarioSpec {
    pub fn cosine600() -> Self {
        ScenarioSpec::Cosine600 { n: 600 }
    }

    pub fn validate(&self) -> Result<()> {
        let n = match self {
            ScenarioSpec::Cosine600 { n } | ScenarioSpec::ScenarioA { n } | ScenarioSpec::ScenarioB { n } => *n,
            ScenarioSpec::SpatialBinary { range, n, n_test, .. } => {
                if !SPATIAL_RANGES.contains(range) {
                    return Err(Error::invalid(format!(
                        "spatial range {range} is not one of {SPATIAL_RANGES:?}"
                    )));
                }
                if *n_test >= *n {
                    return Err(Error::invalid("n_test must be smaller than n"));
                }
                *n
            }
        };
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        Ok(())
    }

    pub fn simulate(&self, seed: u64) -> Result<SimulatedData> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match *self {
            ScenarioSpec::Cosine600 { n } => SimulatedData::Binary(simulate_cosine(n, &mut rng)),
            ScenarioSpec::SpatialBinary {
                truth,
                range,
                n,
                n_test,
            } => SimulatedData::Binary(simulate_spatial(truth, range, n, n_test, &mut rng)?),
            ScenarioSpec::ScenarioA { n } => SimulatedData::Regression(simulate_regression(RegressionTruth::A, n, &mut rng)),
            ScenarioSpec::ScenarioB { n } => SimulatedData::Regression(simulate_regression(RegressionTruth::B, n, &mut rng)),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimulatedData {
    Binary(BinarySimulation),
    Regression(RegressionSimulation),
}

/// Binary outcomes with their true success probabilities. The first
/// `n_train` rows are for fitting, the rest for testing.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySimulation {
    pub points: Points,
    pub z: Vec<u8>,
    pub prob: Vec<f64>,
    pub n_train: usize,
}

impl BinarySimulation {
    pub fn train_points(&self) -> Points {
        self.points.subset(&(0..self.n_train).collect::<Vec<_>>())
    }

    pub fn test_points(&self) -> Points {
        self.points.subset(&(self.n_train..self.points.len()).collect::<Vec<_>>())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionTruth {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSimulation {
    pub truth: RegressionTruth,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// σ{cos(πx)}.
pub fn cosine_probability(x: f64) -> f64 {
    logistic((std::f64::consts::PI * x).cos())
}

fn simulate_cosine<R: Rng + ?Sized>(n: usize, rng: &mut R) -> BinarySimulation {
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let x = if u < 0.45 {
            v
        } else if u < 0.55 {
            1.0 + v
        } else {
            2.0 + v
        };
        xs.push(x);
    }
    let prob: Vec<f64> = xs.iter().map(|&x| cosine_probability(x)).collect();
    let z = prob.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect();
    BinarySimulation {
        points: Points::from_1d(&xs),
        z,
        prob,
        n_train: n,
    }
}

fn simulate_spatial<R: Rng + ?Sized>(
    truth: SpatialTruth,
    range: f64,
    n: usize,
    n_test: usize,
    rng: &mut R,
) -> Result<BinarySimulation> {
    let coords: Vec<f64> = (0..2 * n).map(|_| rng.random()).collect();
    let points = Points::new(2, coords)?;
    let kernel = CorrelationKernel::Matern {
        range,
        smoothness: 1.5,
    };
    let latent = LatentGaussian::from_kernel(&kernel, &points, Representation::FullRank)?;
    let shape = ShapePair::new(1.0, 2.0)?;
    let prob: Vec<f64> = match truth {
        SpatialTruth::Lbp => {
            let lambda = crate::polya::sample_polya(&shape, crate::polya::DEFAULT_TRUNCATION, rng)?.lambda;
            let (eta, _) = latent.prior_draw(lambda, &shape, rng);
            eta.iter().map(|&e| logistic(e)).collect()
        }
        SpatialTruth::GaussianCopula => {
            // a unit-variance draw: λ = 1 and a = b gives zero mean
            let (zeta, _) = latent.prior_draw(1.0, &ShapePair { a: 1.0, b: 1.0 }, rng);
            zeta.iter().map(|&v| 1.0 - (1.0 - normal_cdf(v)).sqrt()).collect()
        }
    };
    let z = prob.iter().map(|&p| (rng.random::<f64>() < p) as u8).collect();
    Ok(BinarySimulation {
        points,
        z,
        prob,
        n_train: n - n_test,
    })
}

fn simulate_regression<R: Rng + ?Sized>(truth: RegressionTruth, n: usize, rng: &mut R) -> RegressionSimulation {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let (lo, hi) = truth.covariate_domain();
    for _ in 0..n {
        let xi = lo + (hi - lo) * rng.random::<f64>();
        x.push(xi);
        y.push(truth.sample_response(xi, rng));
    }
    RegressionSimulation { truth, x, y }
}

fn scenario_b_component(x: f64) -> (f64, f64) {
    if x <= 2.0 {
        (0.0, 0.04)
    } else if x <= 5.0 {
        (2.0 * x - 4.0, 0.0025)
    } else {
        (6.0, (x - 5.0) * (x - 5.0) / 15.0 + 0.01)
    }
}

impl RegressionTruth {
    pub fn density(&self, x: f64, y: f64) -> f64 {
        match self {
            RegressionTruth::A => {
                let w = (-2.0 * x).exp();
                w * normal_log_pdf(y, x, 0.01).exp() + (1.0 - w) * normal_log_pdf(y, x.powi(4), 0.04).exp()
            }
            RegressionTruth::B => {
                let (m, v) = scenario_b_component(x);
                normal_log_pdf(y, m, v).exp()
            }
        }
    }

    pub fn mean(&self, x: f64) -> f64 {
        match self {
            RegressionTruth::A => {
                let w = (-2.0 * x).exp();
                w * x + (1.0 - w) * x.powi(4)
            }
            RegressionTruth::B => scenario_b_component(x).0,
        }
    }

    /// One response drawn from the true conditional density at `x`.
    pub fn sample_response<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        match self {
            RegressionTruth::A => {
                if rng.random::<f64>() < (-2.0 * x).exp() {
                    x + 0.1 * e
                } else {
                    x.powi(4) + 0.2 * e
                }
            }
            RegressionTruth::B => {
                let (m, v) = scenario_b_component(x);
                m + v.sqrt() * e
            }
        }
    }

    /// 100 equally spaced covariates and 500 equally spaced responses
    /// spanning the evaluation domain.
    pub fn default_grids(&self) -> (Vec<f64>, Vec<f64>) {
        let (xl, xu, yl, yu) = match self {
            RegressionTruth::A => (0.0, 1.0, -1.0, 2.0),
            RegressionTruth::B => (-2.0, 10.0, -1.0, 10.0),
        };
        (linspace(xl, xu, 100), linspace(yl, yu, 500))
    }

    pub fn covariate_domain(&self) -> (f64, f64) {
        match self {
            RegressionTruth::A => (0.0, 1.0),
            RegressionTruth::B => (-2.0, 10.0),
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Conditional densities on a y grid, one row per covariate value, plus
/// conditional means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEstimate {
    pub density: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl GridEstimate {
    pub fn truth(truth: RegressionTruth, xs: &[f64], ys: &[f64]) -> Self {
        GridEstimate {
            density: xs.iter().map(|&x| ys.iter().map(|&y| truth.density(x, y)).collect()).collect(),
            mean: xs.iter().map(|&x| truth.mean(x)).collect(),
        }
    }
}

/// (density error, regression error): the average over x of
/// Σ_g |p̂ − p| Δy, and the root mean squared error of the conditional mean.
pub fn density_and_regression_errors(estimate: &GridEstimate, truth: &GridEstimate, y_grid: &[f64]) -> Result<(f64, f64)> {
    let nx = truth.mean.len();
    if nx == 0 || y_grid.len() < 2 {
        return Err(Error::EmptyInput("evaluation grid"));
    }
    let rows_ok = |g: &GridEstimate| g.density.len() == nx && g.mean.len() == nx && g.density.iter().all(|r| r.len() == y_grid.len());
    if !rows_ok(estimate) || !rows_ok(truth) {
        return Err(Error::Dimension("estimate and truth grids differ".into()));
    }
    let dy = (y_grid[y_grid.len() - 1] - y_grid[0]) / (y_grid.len() - 1) as f64;
    let dens = estimate
        .density
        .iter()
        .zip(&truth.density)
        .map(|(e, t)| e.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() * dy)
        .sum::<f64>()
        / nx as f64;
    let reg = (estimate
        .mean
        .iter()
        .zip(&truth.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / nx as f64)
        .sqrt();
    Ok((dens, reg))
}

pub fn rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    (estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64).sqrt()
}

pub fn mae(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64
}

/// Empirical CRPS mean|θᵢ − θ*| − ½ mean_{i,j} |θᵢ − θⱼ|, via sorting.
pub fn crps_empirical(samples: &[f64], truth: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("crps_empirical"));
    }
    let m = samples.len() as f64;
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let first = s.iter().map(|v| (v - truth).abs()).sum::<f64>() / m;
    // Σ_{i,j} |x_i − x_j| = 2 Σ_i (2i − m + 1) x_(i)
    let pairs: f64 = s
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * i as f64 - m + 1.0) * v)
        .sum::<f64>()
        * 2.0;
    Ok((first - 0.5 * pairs / (m * m)).max(0.0))
}

/// Univariate effective sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub value: f64,
    /// Set when the trace is constant and the value defaults to its length.
    pub degenerate: bool,
    pub ar_order: usize,
}

/// ESS = n·s²/S(0), with S(0) the spectral density at zero of an
/// autoregression chosen by AIC (Yule-Walker fit, maximum order
/// min(n − 1, ⌊10 log₁₀ n⌋)). The result is capped at n.
pub fn ess_univariate(trace: &[f64]) -> Result<EssEstimate> {
    let n = trace.len();
    if n < 100 {
        return Err(Error::invalid(format!("ESS needs at least 100 draws, got {n}")));
    }
    let nf = n as f64;
    let mean = trace.iter().sum::<f64>() / nf;
    let dev: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let max_lag = ((10.0 * nf.log10()).floor() as usize).min(n - 1);
    let acov: Vec<f64> = (0..=max_lag)
        .map(|k| dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / nf)
        .collect();
    let scale = trace.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if acov[0] <= 1e-24 * scale * scale {
        return Ok(EssEstimate {
            value: nf,
            degenerate: true,
            ar_order: 0,
        });
    }
    // Levinson-Durbin recursion, keeping the AIC-best order
    let mut phi: Vec<f64> = Vec::new();
    let mut sigma2 = acov[0];
    let mut best = (nf * sigma2.ln(), 0usize, Vec::new(), sigma2);
    for p in 1..=max_lag {
        let num = acov[p] - phi.iter().enumerate().map(|(j, c)| c * acov[p - 1 - j]).sum::<f64>();
        let k = num / sigma2;
        let mut next = vec![0.0; p];
        for j in 0..p - 1 {
            next[j] = phi[j] - k * phi[p - 2 - j];
        }
        next[p - 1] = k;
        phi = next;
        sigma2 *= 1.0 - k * k;
        if sigma2 <= 0.0 {
            break;
        }
        let aic = nf * sigma2.ln() + 2.0 * p as f64;
        if aic < best.0 {
            best = (aic, p, phi.clone(), sigma2);
        }
    }
    let (_, order, coef, s2) = best;
    let denom = 1.0 - coef.iter().sum::<f64>();
    let spec0 = s2 / (denom * denom);
    let var = acov[0] * nf / (nf - 1.0);
    Ok(EssEstimate {
        value: (nf * var / spec0).min(nf),
        degenerate: false,
        ar_order: order,
    })
}

/// Multivariate ESS n·(|Λ| / |Σ|)^{1/p}, with Λ the sample covariance and Σ
/// the batch-means covariance with batch size ⌊√n⌋. `traces` has one row
/// per draw.
pub fn ess_multivariate(traces: &DMatrix<f64>) -> Result<f64> {
    let (n, p) = traces.shape();
    if p == 0 {
        return Err(Error::EmptyInput("ess_multivariate"));
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = if b > 0 { n / b } else { 0 };
    if n < 100 || a < 2 {
        return Err(Error::invalid(format!("mESS needs at least 100 draws, got {n}")));
    }
    if p >= a {
        return Err(Error::invalid(format!("mESS needs fewer coordinates ({p}) than batches ({a})")));
    }
    let mean = traces.row_mean();
    let centered = DMatrix::from_fn(n, p, |i, j| traces[(i, j)] - mean[j]);
    let lambda = centered.transpose() * &centered / (n as f64 - 1.0);
    let singular = singular_coordinates(&lambda);
    if !singular.is_empty() {
        return Err(Error::SingularCovariance(singular));
    }
    let used = a * b;
    let mut batch = DMatrix::zeros(a, p);
    for k in 0..a {
        for j in 0..p {
            batch[(k, j)] = (k * b..(k + 1) * b).map(|i| traces[(i, j)]).sum::<f64>() / b as f64;
        }
    }
    let overall: Vec<f64> = (0..p).map(|j| (0..used).map(|i| traces[(i, j)]).sum::<f64>() / used as f64).collect();
    let bc = DMatrix::from_fn(a, p, |k, j| batch[(k, j)] - overall[j]);
    let sigma = bc.transpose() * &bc * (b as f64 / (a as f64 - 1.0));
    let ld = |m: &DMatrix<f64>| -> Option<f64> { m.clone().cholesky().map(|c| 2.0 * c.l().diagonal().map(f64::ln).sum()) };
    let (l_lambda, l_sigma) = match (ld(&lambda), ld(&sigma)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::SingularCovariance(Vec::new())),
    };
    Ok(n as f64 * ((l_lambda - l_sigma) / p as f64).exp())
}

/// Coordinates whose variance is (numerically) explained by the earlier
/// coordinates, found by a Cholesky sweep without pivoting.
fn singular_coordinates(cov: &DMatrix<f64>) -> Vec<usize> {
    let p = cov.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut bad = Vec::new();
    for j in 0..p {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 1e-10 * cov[(j, j)].abs().max(f64::MIN_POSITIVE)) {
            bad.push(j);
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..p {
            let mut s = cov[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    bad
}

/// Centering and scaling of a variable, kept so results can be mapped back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub center: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::EmptyInput("standardizer"));
        }
        let (m, v) = crate::stats::mean_var(values);
        if !(v > 0.0) {
            return Err(Error::invalid("cannot standardize a constant variable"));
        }
        Ok(Standardizer {
            center: m,
            scale: v.sqrt(),
        })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.center + self.scale * v
    }
}

/// Summary of one fitted chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub ess: Vec<(String, f64)>,
    pub multivariate_ess: Option<f64>,
    pub acceptance_rates: Vec<(String, f64)>,
    pub sampler_seconds: f64,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub mean_crps: Option<f64>,
    pub density_error: Option<f64>,
    pub regression_error: Option<f64>,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    pub fn ess_per_second(&self, name: &str) -> Option<f64> {
        let e = self.ess.iter().find(|(n, _)| n == name)?.1;
        (self.sampler_seconds > 0.0).then(|| e / self.sampler_seconds)
    }
}

/// ESS of λ, multivariate ESS of the success probabilities (thinned to
/// fewer coordinates than batches) and acceptance rates, from the chain
/// output alone.
pub fn diagnose_binary_chain(chain: &ChainOutput) -> Result<DiagnosticsReport> {
    let mut report = DiagnosticsReport {
        sampler_seconds: chain.sampler_seconds,
        ..Default::default()
    };
    let lam = ess_univariate(&chain.lambda_trace())?;
    if lam.degenerate {
        report.warnings.push("λ trace is constant".into());
    }
    report.ess.push(("lambda".into(), lam.value));
    report.acceptance_rates.push(("lambda".into(), chain.lambda_moves.rate()));
    if let Some(ab) = &chain.ab_moves {
        report.acceptance_rates.push(("ab".into(), ab.rate()));
    }
    let n = chain.records.len();
    let p_all = chain.records[0].eta.len();
    let batches = n / ((n as f64).sqrt().floor() as usize).max(1);
    let p = p_all.min(batches.saturating_sub(1));
    if p >= 1 {
        let cols: Vec<usize> = (0..p).map(|k| k * p_all / p).collect();
        let m = DMatrix::from_fn(n, p, |i, j| logistic(chain.records[i].eta[cols[j]]));
        match ess_multivariate(&m) {
            Ok(v) => report.multivariate_ess = Some(v),
            Err(e) => report.warnings.push(format!("multivariate ESS unavailable: {e}")),
        }
    }
    Ok(report)
}

/// One row of a prior dependence curve along distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependenceRow {
    pub distance: f64,
    pub kernel: f64,
    /// corr{η(x), η(x′)}.
    pub eta_corr: f64,
    /// corr[σ{η(x)}, σ{η(x′)}], by Monte Carlo.
    pub prob_corr: f64,
    pub tie_probability: f64,
    pub rpm_corr: f64,
}

/// Prior dependence of an LBP(a, b) and of the LB-DDP with concentration b
/// as functions of distance, with a Matérn or other stationary kernel in
/// one dimension.
pub fn dependence_curve<R: Rng + ?Sized>(
    kernel: &CorrelationKernel,
    shape: &ShapePair,
    b_ddp: f64,
    distances: &[f64],
    nsim: usize,
    rng: &mut R,
) -> Result<Vec<DependenceRow>> {
    shape.validate()?;
    let (mean_l, var_l) = crate::polya::polya_moments(shape)?;
    let c = 0.25 * (shape.a - shape.b) * (shape.a - shape.b) * var_l;
    let ddp = ShapePair::new(1.0, b_ddp)?;
    distances
        .iter()
        .map(|&d| {
            let r = kernel.eval(&[0.0], &[d])?;
            let eta_corr = (r * mean_l + c) / (mean_l + c);
            let rc = (1.0 - r * r).max(0.0).sqrt();
            let mut xs = Vec::with_capacity(nsim);
            let mut ys = Vec::with_capacity(nsim);
            for _ in 0..nsim {
                let l = crate::polya::sample_polya(shape, crate::polya::DEFAULT_TRUNCATION, rng)?.lambda;
                let m = crate::latent::latent_mean(l, shape);
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                xs.push(logistic(m + l.sqrt() * z1));
                ys.push(logistic(m + l.sqrt() * (r * z1 + rc * z2)));
            }
            let prob_corr = crate::stats::correlation(&xs, &ys);
            let diagonal = crate::ddp::mu_diagonal(ddp.b);
            let mu = if r >= 1.0 {
                diagonal
            } else {
                crate::ddp::mu_mc_at_correlation(r, ddp.b, nsim, rng).value.min(diagonal)
            };
            Ok(DependenceRow {
                distance: d,
                kernel: r,
                eta_corr,
                prob_corr,
                tie_probability: crate::ddp::tie_probability(mu, ddp.b)?,
                rpm_corr: crate::ddp::corr_rpm(mu, ddp.b, 1.0)?,
            })
        })
        .collect()
}

/// Mean and Monte Carlo standard error across replicates.
pub fn replicate_summary(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n < 2 {
        return (values.first().copied().unwrap_or(f64::NAN), f64::NAN);
    }
    let (m, v) = crate::stats::mean_var(values);
    (m, (v / n as f64).sqrt())
}

/// Local maxima of a sampled curve, as indices.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}

/// Whether a sampled density has two peaks separated by a valley at least
/// `depth` times the smaller peak below it.
pub fn is_bimodal(values: &[f64], depth: f64) -> bool {
    let peaks = local_maxima(values);
    for (i, &p) in peaks.iter().enumerate() {
        for &q in &peaks[i + 1..] {
            let valley = values[p..=q].iter().cloned().fold(f64::INFINITY, f64::min);
            let low = values[p].min(values[q]);
            if low - valley >= depth * low {
                return true;
            }
        }
    }
    false
}

//! Binary regression with a latent logistic-beta process:
//! z_i ~ Bernoulli(σ{η(x_i)}), η ~ LBP(a, b, 𝓡).
//!
//! The sampler augments with Pólya-Gamma variables ω and updates
//! (ω, λ, η) in three steps. In the blocked variant λ is drawn with η
//! integrated out; the non-blocked variant conditions on η instead.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CorrelationKernel, Points};
use crate::latent::{
    sample_categorical_log, CollapsedEval, ConditionalPredictor, LatentGaussian, ObservedBlock, PgData,
    Representation,
};
use crate::polya::{
    digamma_divided_difference, polya_moments, sample_polya_gamma_1, sample_polya_unchecked, ShapePair,
    DEFAULT_TRUNCATION,
};
use crate::special::{log_sum_exp, logistic, trigamma_unchecked};
use crate::stats::quantile_sorted;

/// Binary outcomes observed at covariate points.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    pub points: Points,
    pub z: Vec<u8>,
}

impl BinaryDataset {
    pub fn new(points: Points, z: Vec<u8>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("binary dataset"));
        }
        if points.len() != z.len() {
            return Err(Error::Dimension(format!(
                "{} points vs {} outcomes",
                points.len(),
                z.len()
            )));
        }
        if let Some(i) = z.iter().position(|&v| v > 1) {
            return Err(Error::invalid(format!("outcome {i} is {} (expected 0 or 1)", z[i])));
        }
        Ok(BinaryDataset { points, z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LambdaUpdate {
    MetropolisHastings,
    ParticleGibbs { particles: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerStrategy {
    pub blocked: bool,
    pub adapted: bool,
    pub lambda_update: LambdaUpdate,
    pub representation: Representation,
}

impl Default for SamplerStrategy {
    fn default() -> Self {
        SamplerStrategy {
            blocked: true,
            adapted: true,
            lambda_update: LambdaUpdate::MetropolisHastings,
            representation: Representation::FullRank,
        }
    }
}

/// Discrete prior over a kernel range parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeGrid {
    pub values: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl RangeGrid {
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("range grid"));
        }
        let lw = -(values.len() as f64).ln();
        let log_weights = vec![lw; values.len()];
        Ok(RangeGrid { values, log_weights })
    }

    /// {0.01, 0.02, …, 0.5}.
    pub fn default_spatial() -> Self {
        Self::uniform((1..=50).map(|k| k as f64 / 100.0).collect()).expect("nonempty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::EmptyInput("range grid"));
        }
        if self.values.len() != self.log_weights.len() {
            return Err(Error::Dimension("range grid values and weights differ in length".into()));
        }
        if self.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("range grid values must be positive"));
        }
        Ok(())
    }
}

/// Prior density over (a, b).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AbPrior {
    /// Independent Gamma(shape, rate) priors.
    Gamma {
        a_shape: f64,
        a_rate: f64,
        b_shape: f64,
        b_rate: f64,
    },
    /// Uniform on a box.
    Uniform {
        a_min: f64,
        a_max: f64,
        b_min: f64,
        b_max: f64,
    },
}

impl AbPrior {
    pub fn log_density(&self, s: &ShapePair) -> f64 {
        if !(s.a > 0.0 && s.b > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            AbPrior::Gamma {
                a_shape,
                a_rate,
                b_shape,
                b_rate,
            } => gamma_log_pdf(s.a, a_shape, a_rate) + gamma_log_pdf(s.b, b_shape, b_rate),
            AbPrior::Uniform {
                a_min,
                a_max,
                b_min,
                b_max,
            } => {
                if s.a >= a_min && s.a <= a_max && s.b >= b_min && s.b <= b_max {
                    -((a_max - a_min) * (b_max - b_min)).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AbPrior::Gamma {
                a_shape,
                a_rate,
                b_shape,
                b_rate,
            } => [a_shape, a_rate, b_shape, b_rate].iter().all(|&v| v > 0.0 && v.is_finite()),
            AbPrior::Uniform {
                a_min,
                a_max,
                b_min,
                b_max,
            } => a_min >= 0.0 && a_max > a_min && b_min >= 0.0 && b_max > b_min && a_max.is_finite() && b_max.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("improper (a, b) prior {self:?}")))
        }
    }
}

fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - crate::special::ln_gamma(shape).unwrap_or(f64::NAN) + (shape - 1.0) * x.ln() - rate * x
}

/// Hyperprior on (a, b) with its particle marginal MH settings. The
/// proposal is a Gaussian random walk on (ln a, ln b).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbHyperprior {
    pub prior: AbPrior,
    #[serde(default = "default_ab_step")]
    pub step: f64,
    #[serde(default = "default_particles")]
    pub particles: usize,
}

fn default_ab_step() -> f64 {
    0.2
}

fn default_particles() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryRegressionConfig {
    pub shape: ShapePair,
    pub kernel: CorrelationKernel,
    pub range_grid: Option<RangeGrid>,
    pub strategy: SamplerStrategy,
    pub ab_hyperprior: Option<AbHyperprior>,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub polya_truncation: usize,
}

impl BinaryRegressionConfig {
    /// Blocked, adapted, Metropolis-Hastings, full-rank sampler.
    pub fn new(shape: ShapePair, kernel: CorrelationKernel, iterations: usize, burn_in: usize, seed: u64) -> Self {
        BinaryRegressionConfig {
            shape,
            kernel,
            range_grid: None,
            strategy: SamplerStrategy::default(),
            ab_hyperprior: None,
            iterations,
            burn_in,
            seed,
            polya_truncation: DEFAULT_TRUNCATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.kernel.validate()?;
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.polya_truncation == 0 {
            return Err(Error::invalid("polya_truncation must be positive"));
        }
        if let LambdaUpdate::ParticleGibbs { particles } = self.strategy.lambda_update {
            if particles == 0 {
                return Err(Error::invalid("particle count must be at least 1"));
            }
        }
        if let Some(grid) = &self.range_grid {
            grid.validate()?;
            if self.kernel.range().is_none() {
                return Err(Error::invalid("range grid given for a kernel without a range parameter"));
            }
        }
        if !self.strategy.blocked {
            if self.strategy.representation == Representation::LowRank
                || matches!(self.kernel, CorrelationKernel::FeatureMap { .. })
            {
                return Err(Error::invalid(
                    "the non-blocked λ update needs a full-rank correlation matrix",
                ));
            }
            if self.ab_hyperprior.is_some() {
                return Err(Error::invalid("the (a, b) update is only available in blocked mode"));
            }
        }
        if let Some(h) = &self.ab_hyperprior {
            h.prior.validate()?;
            if h.particles == 0 || !(h.step > 0.0) {
                return Err(Error::invalid("(a, b) update needs particles ≥ 1 and a positive step"));
            }
        }
        Ok(())
    }
}

/// Running average of λ driving the adaptive proposal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub lambda_bar: f64,
    pub count: u64,
}

impl Adaptation {
    /// Starts at the prior mean of λ, counted as one observation.
    pub fn new(shape: &ShapePair) -> Self {
        let mean = polya_moments(shape).map(|(m, _)| m).unwrap_or(1.0);
        Adaptation {
            lambda_bar: mean,
            count: 1,
        }
    }

    pub fn update(&mut self, lambda: f64) {
        self.count += 1;
        let m = self.count as f64;
        self.lambda_bar = self.lambda_bar * (m - 1.0) / m + lambda / m;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryRegressionState {
    pub eta: DVector<f64>,
    pub lambda: f64,
    pub omega: DVector<f64>,
    pub range_index: usize,
    pub range: Option<f64>,
    pub shape: ShapePair,
    pub adaptation: Adaptation,
    pub gamma: Option<DVector<f64>>,
    /// Particle set for the current (a, b) when (a, b) is sampled.
    pub particles: Vec<f64>,
}

/// Pólya-Gamma step: ω_i ~ PG(1, η_i).
pub fn step_pg<R: Rng + ?Sized>(eta: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    eta.map(|e| sample_polya_gamma_1(e, rng))
}

/// ln 𝓛(λ) = ln N_n{Ω⁻¹(z − ½); ½λ(a−b)1, λR + Ω⁻¹}. The low-rank path
/// requires `r` to carry a factor.
pub fn collapsed_lambda_log_likelihood(
    lambda: f64,
    omega: &DVector<f64>,
    z: &[u8],
    r: &crate::kernels::CorrelationMatrix,
    shape: &ShapePair,
    representation: Representation,
) -> Result<f64> {
    let lg = LatentGaussian::new(r.clone(), representation)?;
    let idx: Vec<usize> = (0..r.n()).collect();
    let data = PgData::new(z, omega.clone())?;
    Ok(lg.observe(&idx).collapsed_eval(lambda, shape, &data)?.log_lik)
}

/// Mean of Polya(a′, c − a′): h(a′) = 2{ψ(a′) − ψ(c − a′)}/(2a′ − c).
pub fn proposal_mean(a_prime: f64, c: f64) -> f64 {
    2.0 * digamma_divided_difference(a_prime, c - a_prime)
}

/// Moment-matched independent proposal Polya(a′, c − a′), c = a + b, with
/// mean equal to `lambda_bar` when attainable and a′ = c/2 otherwise.
pub fn adaptive_proposal(shape: &ShapePair, lambda_bar: f64) -> ShapePair {
    let c = shape.sum();
    let half = 0.5 * c;
    if lambda_bar <= 2.0 * trigamma_unchecked(half) {
        return ShapePair { a: half, b: half };
    }
    // h decreases on (0, c/2]
    let (mut lo, mut hi) = (1e-8_f64.min(half), half);
    if proposal_mean(lo, c) <= lambda_bar {
        return ShapePair { a: lo, b: c - lo };
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if proposal_mean(mid, c) > lambda_bar {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1e-300) * 1e-2 {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    ShapePair { a, b: c - a }
}

/// Proposal used in step 2: adaptive or the prior itself.
pub fn lambda_proposal(shape: &ShapePair, adaptation: &Adaptation, adapted: bool) -> ShapePair {
    if adapted {
        adaptive_proposal(shape, adaptation.lambda_bar)
    } else {
        *shape
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaMove {
    pub lambda: f64,
    /// For MH: the proposal was accepted. For particle Gibbs: one of the
    /// new candidates was selected.
    pub accepted: bool,
}

/// ln α_MH = (λ − λ*)(ab − a′b′)/2 + ln 𝓛(λ*) − ln 𝓛(λ).
pub fn mh_log_acceptance(
    lambda: f64,
    lambda_star: f64,
    shape: &ShapePair,
    proposal: &ShapePair,
    log_lik: f64,
    log_lik_star: f64,
) -> f64 {
    let tilt = shape.product() - proposal.product();
    let t = if tilt == 0.0 { 0.0 } else { 0.5 * (lambda - lambda_star) * tilt };
    t + log_lik_star - log_lik
}

/// Independent MH for λ with a Pólya proposal. `log_lik` is the collapsed
/// likelihood (blocked) or the η-conditioned density (non-blocked).
pub fn step_lambda_mh<R, F>(
    lambda: f64,
    shape: &ShapePair,
    proposal: &ShapePair,
    truncation: usize,
    mut log_lik: F,
    rng: &mut R,
) -> Result<LambdaMove>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    let star = sample_polya_unchecked(proposal, truncation, rng);
    let ll = log_lik(lambda)?;
    let ll_star = log_lik(star)?;
    let la = mh_log_acceptance(lambda, star, shape, proposal, ll, ll_star);
    let u: f64 = rng.random();
    if la >= 0.0 || u.ln() < la {
        Ok(LambdaMove {
            lambda: star,
            accepted: true,
        })
    } else {
        Ok(LambdaMove {
            lambda,
            accepted: false,
        })
    }
}

/// Selects among candidates with weights exp{−λ⁽ᵏ⁾(ab − a′b′)/2} 𝓛(λ⁽ᵏ⁾).
pub fn particle_gibbs_select<R, F>(
    candidates: &[f64],
    shape: &ShapePair,
    proposal: &ShapePair,
    mut log_lik: F,
    rng: &mut R,
) -> Result<usize>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    let tilt = shape.product() - proposal.product();
    let mut lw = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let t = if tilt == 0.0 { 0.0 } else { -0.5 * c * tilt };
        lw.push(t + log_lik(c)?);
    }
    Ok(sample_categorical_log(&lw, rng))
}

/// Draws N new candidates from the proposal, keeps the current λ as
/// candidate N + 1 and selects one.
pub fn step_lambda_particle_gibbs<R, F>(
    lambda: f64,
    shape: &ShapePair,
    proposal: &ShapePair,
    particles: usize,
    truncation: usize,
    log_lik: F,
    rng: &mut R,
) -> Result<LambdaMove>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    let mut cands: Vec<f64> = (0..particles)
        .map(|_| sample_polya_unchecked(proposal, truncation, rng))
        .collect();
    cands.push(lambda);
    let k = particle_gibbs_select(&cands, shape, proposal, log_lik, rng)?;
    Ok(LambdaMove {
        lambda: cands[k],
        accepted: k < particles,
    })
}

/// Draws the range index from its discrete full conditional
/// ∝ prior · N(η; ½λ(a−b)1, λR_ϱ).
pub fn step_kernel_params<R: Rng + ?Sized>(
    eta: &DVector<f64>,
    lambda: f64,
    shape: &ShapePair,
    grid: &RangeGrid,
    models: &[LatentGaussian],
    rng: &mut R,
) -> Result<usize> {
    if grid.values.len() != models.len() {
        return Err(Error::Dimension("one latent model per grid value is required".into()));
    }
    if models.len() == 1 {
        return Ok(0);
    }
    let mut lw = Vec::with_capacity(models.len());
    for (g, model) in models.iter().enumerate() {
        lw.push(grid.log_weights[g] + model.eta_quadratic(eta)?.log_density(lambda, shape));
    }
    Ok(sample_categorical_log(&lw, rng))
}

/// ln of the PMMH acceptance ratio.
pub fn pmmh_log_acceptance(
    log_prior: f64,
    log_prior_new: f64,
    log_liks: &[f64],
    log_liks_new: &[f64],
    log_q_ratio: f64,
) -> f64 {
    if log_prior_new == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let cur = log_sum_exp(log_liks).unwrap_or(f64::NEG_INFINITY);
    let new = log_sum_exp(log_liks_new).unwrap_or(f64::NEG_INFINITY);
    log_prior_new - log_prior + new - cur + log_q_ratio
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmmhMove {
    pub shape: ShapePair,
    pub lambda: f64,
    pub particles: Vec<f64>,
    pub accepted: bool,
}

/// Joint update of (a, b, λ) by particle marginal Metropolis-Hastings.
/// `log_lik(λ, shape)` is the collapsed likelihood.
pub fn step_ab_pmmh<R, F>(
    shape: &ShapePair,
    lambda: f64,
    particles: &[f64],
    hyper: &AbHyperprior,
    truncation: usize,
    mut log_lik: F,
    rng: &mut R,
) -> Result<PmmhMove>
where
    R: Rng + ?Sized,
    F: FnMut(f64, &ShapePair) -> Result<f64>,
{
    let keep = PmmhMove {
        shape: *shape,
        lambda,
        particles: particles.to_vec(),
        accepted: false,
    };
    let za: f64 = rng.sample(StandardNormal);
    let zb: f64 = rng.sample(StandardNormal);
    let star = ShapePair {
        a: shape.a * (hyper.step * za).exp(),
        b: shape.b * (hyper.step * zb).exp(),
    };
    let lp_new = hyper.prior.log_density(&star);
    let u: f64 = rng.random();
    if lp_new == f64::NEG_INFINITY || !(star.a > 0.0 && star.b > 0.0) || !star.a.is_finite() || !star.b.is_finite() {
        return Ok(keep);
    }
    let new_particles: Vec<f64> = (0..particles.len())
        .map(|_| sample_polya_unchecked(&star, truncation, rng))
        .collect();
    let mut ll_new = Vec::with_capacity(new_particles.len());
    for &p in &new_particles {
        ll_new.push(log_lik(p, &star)?);
    }
    let mut ll_cur = Vec::with_capacity(particles.len());
    for &p in particles {
        ll_cur.push(log_lik(p, shape)?);
    }
    let k = sample_categorical_log(&ll_new, rng);
    // random walk on logs: q(a,b|a*,b*)/q(a*,b*|a,b) = a*b*/(ab)
    let log_q = (star.a * star.b).ln() - (shape.a * shape.b).ln();
    let la = pmmh_log_acceptance(hyper.prior.log_density(shape), lp_new, &ll_cur, &ll_new, log_q);
    if la >= 0.0 || u.ln() < la {
        Ok(PmmhMove {
            shape: star,
            lambda: new_particles[k],
            particles: new_particles,
            accepted: true,
        })
    } else {
        Ok(keep)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounts {
    pub proposals: u64,
    pub accepted: u64,
}

impl AcceptanceCounts {
    pub fn record(&mut self, accepted: bool) {
        self.proposals += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub eta: Vec<f64>,
    pub lambda: f64,
    pub range: Option<f64>,
    /// Present when (a, b) is sampled.
    pub shape: Option<ShapePair>,
    pub gamma: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub records: Vec<ChainRecord>,
    pub lambda_moves: AcceptanceCounts,
    pub ab_moves: Option<AcceptanceCounts>,
    /// Wall-clock seconds spent in the sampler loop.
    pub sampler_seconds: f64,
    pub seed: u64,
}

impl ChainOutput {
    pub fn lambda_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lambda).collect()
    }
}

/// Precomputed structure for one binary regression problem.
#[derive(Clone, Debug)]
pub struct BinarySampler {
    config: BinaryRegressionConfig,
    ranges: Vec<Option<f64>>,
    models: Vec<LatentGaussian>,
    block_all: Vec<ObservedBlock>,
}

impl BinarySampler {
    pub fn new(config: &BinaryRegressionConfig, points: &Points) -> Result<Self> {
        config.validate()?;
        let rep = config.strategy.representation;
        let ranges: Vec<Option<f64>> = match &config.range_grid {
            Some(g) => g.values.iter().map(|&v| Some(v)).collect(),
            None => vec![config.kernel.range()],
        };
        let mut models = Vec::with_capacity(ranges.len());
        for r in &ranges {
            let k = match r {
                Some(v) => config.kernel.with_range(*v),
                None => config.kernel.clone(),
            };
            models.push(LatentGaussian::from_kernel(&k, points, rep)?);
        }
        let idx: Vec<usize> = (0..points.len()).collect();
        let block_all = models.iter().map(|m| m.observe(&idx)).collect();
        Ok(BinarySampler {
            config: config.clone(),
            ranges,
            models,
            block_all,
        })
    }

    pub fn config(&self) -> &BinaryRegressionConfig {
        &self.config
    }

    pub fn models(&self) -> &[LatentGaussian] {
        &self.models
    }

    fn initial_range_index(&self) -> usize {
        let target = self.config.kernel.range();
        match target {
            Some(t) if self.ranges.len() > 1 => self
                .ranges
                .iter()
                .enumerate()
                .min_by(|x, y| {
                    let dx = (x.1.unwrap_or(t) - t).abs();
                    let dy = (y.1.unwrap_or(t) - t).abs();
                    dx.total_cmp(&dy)
                })
                .map(|(i, _)| i)
                .unwrap_or(0),
            _ => 0,
        }
    }

    /// A prior draw of (λ, η) with ω at its conditional mean, at the grid
    /// value closest to the configured range.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> BinaryRegressionState {
        let range_index = self.initial_range_index();
        self.state_at(range_index, rng)
    }

    /// Like `initial_state`, with the range also drawn from its prior.
    pub fn prior_state<R: Rng + ?Sized>(&self, rng: &mut R) -> BinaryRegressionState {
        let range_index = match &self.config.range_grid {
            Some(g) if self.models.len() > 1 => sample_categorical_log(&g.log_weights, rng),
            _ => 0,
        };
        self.state_at(range_index, rng)
    }

    fn state_at<R: Rng + ?Sized>(&self, range_index: usize, rng: &mut R) -> BinaryRegressionState {
        let shape = self.config.shape;
        let t = self.config.polya_truncation;
        let particles: Vec<f64> = match &self.config.ab_hyperprior {
            Some(h) => (0..h.particles).map(|_| sample_polya_unchecked(&shape, t, rng)).collect(),
            None => Vec::new(),
        };
        let lambda = match particles.first() {
            Some(&p) => p,
            None => sample_polya_unchecked(&shape, t, rng),
        };
        let (eta, gamma) = self.models[range_index].prior_draw(lambda, &shape, rng);
        let omega = eta.map(crate::polya::polya_gamma_1_mean);
        BinaryRegressionState {
            eta,
            lambda,
            omega,
            range_index,
            range: self.ranges[range_index],
            shape,
            adaptation: Adaptation::new(&shape),
            gamma,
            particles,
        }
    }

    /// One full cycle. Returns whether the λ (or (a, b, λ)) move was
    /// accepted.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut BinaryRegressionState,
        z: &[u8],
        rng: &mut R,
    ) -> Result<bool> {
        let cfg = &self.config;
        let t = cfg.polya_truncation;
        // step 1
        state.omega = step_pg(&state.eta, rng);
        let data = PgData::new(z, state.omega.clone())?;
        let model = &self.models[state.range_index];
        let block = &self.block_all[state.range_index];

        // step 2
        let mut evals: Vec<CollapsedEval> = Vec::new();
        let accepted;
        if let Some(hyper) = &cfg.ab_hyperprior {
            let mv = step_ab_pmmh(
                &state.shape,
                state.lambda,
                &state.particles,
                hyper,
                t,
                |l, s| {
                    let e = block.collapsed_eval(l, s, &data)?;
                    let v = e.log_lik;
                    evals.push(e);
                    Ok(v)
                },
                rng,
            )?;
            state.shape = mv.shape;
            state.lambda = mv.lambda;
            state.particles = mv.particles;
            accepted = mv.accepted;
        } else {
            let proposal = lambda_proposal(&state.shape, &state.adaptation, cfg.strategy.adapted);
            let shape = state.shape;
            let mv = if cfg.strategy.blocked {
                let ll = |l: f64| {
                    let e = block.collapsed_eval(l, &shape, &data)?;
                    let v = e.log_lik;
                    evals.push(e);
                    Ok(v)
                };
                self.lambda_move(state.lambda, &shape, &proposal, ll, rng)?
            } else {
                let quad = model.eta_quadratic(&state.eta)?;
                let ll = |l: f64| Ok(quad.log_density(l, &shape));
                self.lambda_move(state.lambda, &shape, &proposal, ll, rng)?
            };
            state.lambda = mv.lambda;
            state.adaptation.update(mv.lambda);
            accepted = mv.accepted;
        }

        // step 3
        let cached = evals
            .iter()
            .find(|e| e.lambda == state.lambda && e.shape == state.shape);
        let (eta, gamma) = model.sample_conditional(block, state.lambda, &state.shape, &data, cached, rng)?;
        state.eta = eta;
        state.gamma = gamma;

        // kernel range
        if let Some(grid) = &cfg.range_grid {
            let g = step_kernel_params(&state.eta, state.lambda, &state.shape, grid, &self.models, rng)?;
            state.range_index = g;
            state.range = self.ranges[g];
        }
        Ok(accepted)
    }

    fn lambda_move<R, F>(
        &self,
        lambda: f64,
        shape: &ShapePair,
        proposal: &ShapePair,
        ll: F,
        rng: &mut R,
    ) -> Result<LambdaMove>
    where
        R: Rng + ?Sized,
        F: FnMut(f64) -> Result<f64>,
    {
        let t = self.config.polya_truncation;
        match self.config.strategy.lambda_update {
            LambdaUpdate::MetropolisHastings => step_lambda_mh(lambda, shape, proposal, t, ll, rng),
            LambdaUpdate::ParticleGibbs { particles } => {
                step_lambda_particle_gibbs(lambda, shape, proposal, particles, t, ll, rng)
            }
        }
    }
}

/// Runs the configured sampler with a ChaCha stream seeded by `config.seed`.
pub fn run_chain(config: &BinaryRegressionConfig, data: &BinaryDataset) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain_with_rng(config, data, &mut rng)
}

pub fn run_chain_with_rng<R: Rng + ?Sized>(
    config: &BinaryRegressionConfig,
    data: &BinaryDataset,
    rng: &mut R,
) -> Result<ChainOutput> {
    let sampler = BinarySampler::new(config, &data.points)?;
    let mut state = sampler.initial_state(rng);
    let mut records = Vec::with_capacity(config.iterations - config.burn_in);
    let mut lambda_moves = AcceptanceCounts::default();
    let mut ab_moves = config.ab_hyperprior.map(|_| AcceptanceCounts::default());
    let start = Instant::now();
    for it in 0..config.iterations {
        let accepted = sampler
            .sweep(&mut state, &data.z, rng)
            .map_err(|e| e.at_iteration(it))?;
        match ab_moves.as_mut() {
            Some(c) => c.record(accepted),
            None => lambda_moves.record(accepted),
        }
        if it >= config.burn_in {
            records.push(ChainRecord {
                eta: state.eta.as_slice().to_vec(),
                lambda: state.lambda,
                range: state.range,
                shape: config.ab_hyperprior.map(|_| state.shape),
                gamma: state.gamma.as_ref().map(|g| g.as_slice().to_vec()),
            });
        }
    }
    Ok(ChainOutput {
        records,
        lambda_moves,
        ab_moves,
        sampler_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    })
}

/// Posterior mean and central 95% interval of a scalar quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PointSummary {
    pub fn from_draws(draws: &mut [f64]) -> Self {
        draws.sort_by(|a, b| a.total_cmp(b));
        PointSummary {
            mean: draws.iter().sum::<f64>() / draws.len() as f64,
            lower: quantile_sorted(draws, 0.025),
            upper: quantile_sorted(draws, 0.975),
        }
    }
}

/// Posterior summaries of σ{η(x*)} at new points, drawing η(x*) from its
/// Gaussian conditional for every retained draw.
pub fn predict_probabilities<R: Rng + ?Sized>(
    chain: &ChainOutput,
    config: &BinaryRegressionConfig,
    train: &Points,
    new_points: &Points,
    rng: &mut R,
) -> Result<Vec<PointSummary>> {
    if chain.records.is_empty() {
        return Err(Error::EmptyInput("predict_probabilities"));
    }
    let mut predictors: HashMap<Option<u64>, ConditionalPredictor> = HashMap::new();
    let mut draws = vec![Vec::with_capacity(chain.records.len()); new_points.len()];
    for rec in &chain.records {
        let key = rec.range.map(f64::to_bits);
        if !predictors.contains_key(&key) {
            let kernel = match rec.range {
                Some(r) => config.kernel.with_range(r),
                None => config.kernel.clone(),
            };
            predictors.insert(key, ConditionalPredictor::new(&kernel, train, new_points)?);
        }
        let p = &predictors[&key];
        let shape = rec.shape.unwrap_or(config.shape);
        let eta = DVector::from_column_slice(&rec.eta);
        let star = p.sample_pointwise(&eta, rec.lambda, &shape, rng);
        for (i, v) in star.iter().enumerate() {
            draws[i].push(logistic(*v));
        }
    }
    Ok(draws.iter_mut().map(|d| PointSummary::from_draws(d)).collect())
}

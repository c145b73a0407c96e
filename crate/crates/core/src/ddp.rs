//! Logistic-beta dependent stick-breaking processes: the single-atoms
//! dependent Dirichlet process, its Pitman-Yor generalization, a truncated
//! blocked Gibbs sampler for mixtures of normal linear regressions, and
//! Monte Carlo tools for the prior dependence structure.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binary_regression::{
    lambda_proposal, step_lambda_mh, step_pg, AcceptanceCounts, Adaptation, PointSummary,
};
use crate::error::{Error, Result};
use crate::kernels::{BasisEvaluator, CorrelationKernel, Points};
use crate::latent::{
    latent_mean, sample_categorical_log, CollapsedEval, ConditionalPredictor, LatentGaussian, PgData,
    Representation,
};
use crate::polya::{sample_polya_unchecked, ShapePair, DEFAULT_TRUNCATION};
use crate::special::{log_logistic, log_sum_exp, logistic, normal_cdf, normal_log_pdf};

/// Truncated stick-breaking prior with logistic-beta stick ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StickBreakingSpec {
    pub truncation: usize,
    /// Shapes (a_h, b_h) for h = 1, …, H − 1.
    pub shapes: Vec<ShapePair>,
    pub kernel: CorrelationKernel,
}

impl StickBreakingSpec {
    /// Dependent Dirichlet process: a_h = 1, b_h = b.
    pub fn lb_ddp(truncation: usize, b: f64, kernel: CorrelationKernel) -> Result<Self> {
        Self::pitman_yor(truncation, b, 0.0, kernel)
    }

    /// Dependent Pitman-Yor process: a_h = 1 − ς, b_h = b + hς.
    pub fn pitman_yor(truncation: usize, b: f64, discount: f64, kernel: CorrelationKernel) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::invalid(format!("discount must lie in [0, 1), got {discount}")));
        }
        if !(b > -discount) {
            return Err(Error::invalid(format!("need b > −discount, got b = {b}")));
        }
        if truncation < 2 {
            return Err(Error::invalid("truncation must be at least 2"));
        }
        let shapes = (1..truncation)
            .map(|h| ShapePair::new(1.0 - discount, b + h as f64 * discount))
            .collect::<Result<Vec<_>>>()?;
        let spec = StickBreakingSpec {
            truncation,
            shapes,
            kernel,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 2 {
            return Err(Error::invalid("truncation must be at least 2"));
        }
        if self.shapes.len() != self.truncation - 1 {
            return Err(Error::Dimension(format!(
                "{} stick shapes for truncation {}",
                self.shapes.len(),
                self.truncation
            )));
        }
        for s in &self.shapes {
            s.validate()?;
        }
        self.kernel.validate()
    }

    /// Whether every level has shape (1, b) for a common b.
    pub fn dirichlet_b(&self) -> Option<f64> {
        let b = self.shapes[0].b;
        self.shapes.iter().all(|s| s.a == 1.0 && s.b == b).then_some(b)
    }
}

/// Semi-conjugate priors on the atoms: (β₀, β₁) ~ N₂(0, Σ_β), τ ~ Ga(a_τ, b_τ)
/// with b_τ a rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomPrior {
    pub sigma_beta: [[f64; 2]; 2],
    pub a_tau: f64,
    pub b_tau: f64,
}

impl Default for AtomPrior {
    fn default() -> Self {
        AtomPrior {
            sigma_beta: [[1.0, 0.0], [0.0, 1.0]],
            a_tau: 1.0,
            b_tau: 1.0,
        }
    }
}

impl AtomPrior {
    pub fn isotropic(variance: f64, a_tau: f64, b_tau: f64) -> Self {
        AtomPrior {
            sigma_beta: [[variance, 0.0], [0.0, variance]],
            a_tau,
            b_tau,
        }
    }

    fn sigma(&self) -> Matrix2<f64> {
        let s = self.sigma_beta;
        Matrix2::new(s[0][0], s[0][1], s[1][0], s[1][1])
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if (s[(0, 1)] - s[(1, 0)]).abs() > 1e-12 || s.cholesky().is_none() {
            return Err(Error::invalid("Σ_β must be symmetric positive definite"));
        }
        if !(self.a_tau > 0.0 && self.b_tau > 0.0) {
            return Err(Error::invalid("a_τ and b_τ must be positive"));
        }
        Ok(())
    }
}

/// Component parameters μ_h(x) = β₀ₕ + β₁ₕ x and precisions τ_h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atoms {
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Atoms {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn mean_at(&self, h: usize, x: f64) -> f64 {
        self.beta0[h] + self.beta1[h] * x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl RegressionDataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyInput("regression dataset"));
        }
        if x.len() != y.len() {
            return Err(Error::Dimension(format!("{} covariates vs {} responses", x.len(), y.len())));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("regression data must be finite"));
        }
        Ok(RegressionDataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn points(&self) -> Points {
        Points::from_1d(&self.x)
    }
}

/// Stick weights σ(η_h) Π_{l<h} {1 − σ(η_l)} for h = 1, …, H, with the last
/// stick equal to 1. `eta` holds the H − 1 latent values at one x.
pub fn stick_weights(eta: &[f64]) -> Vec<f64> {
    log_stick_weights(eta).into_iter().map(f64::exp).collect()
}

pub fn log_stick_weights(eta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(eta.len() + 1);
    let mut rest = 0.0;
    for &e in eta {
        out.push(rest + log_logistic(e));
        rest += log_logistic(-e);
    }
    out.push(rest);
    out
}

fn sample_atom<R: Rng + ?Sized>(prior: &AtomPrior, rng: &mut R) -> (f64, f64, f64) {
    let l = prior.sigma().cholesky().expect("validated").l();
    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let b = l * z;
    let tau = Gamma::new(prior.a_tau, 1.0 / prior.b_tau).expect("validated").sample(rng);
    (b[0], b[1], tau)
}

/// One draw from the prior at `points`.
#[derive(Clone, Debug)]
pub struct PriorDraw {
    /// Latent values per level, each over all points.
    pub eta: Vec<DVector<f64>>,
    pub lambda: Vec<f64>,
    /// Stick weights per point.
    pub weights: Vec<Vec<f64>>,
    pub atoms: Atoms,
}

pub fn sample_prior_lbddp<R: Rng + ?Sized>(
    spec: &StickBreakingSpec,
    points: &Points,
    atom_prior: &AtomPrior,
    rng: &mut R,
) -> Result<PriorDraw> {
    spec.validate()?;
    atom_prior.validate()?;
    let latent = LatentGaussian::from_kernel(&spec.kernel, points, default_representation(&spec.kernel))?;
    Ok(prior_draw_with(spec, &latent, atom_prior, DEFAULT_TRUNCATION, rng))
}

fn prior_draw_with<R: Rng + ?Sized>(
    spec: &StickBreakingSpec,
    latent: &LatentGaussian,
    atom_prior: &AtomPrior,
    truncation: usize,
    rng: &mut R,
) -> PriorDraw {
    let mut eta = Vec::with_capacity(spec.shapes.len());
    let mut lambda = Vec::with_capacity(spec.shapes.len());
    for s in &spec.shapes {
        let l = sample_polya_unchecked(s, truncation, rng);
        eta.push(latent.prior_draw(l, s, rng).0);
        lambda.push(l);
    }
    let h = spec.truncation;
    let mut atoms = Atoms {
        beta0: Vec::with_capacity(h),
        beta1: Vec::with_capacity(h),
        tau: Vec::with_capacity(h),
    };
    for _ in 0..h {
        let (b0, b1, t) = sample_atom(atom_prior, rng);
        atoms.beta0.push(b0);
        atoms.beta1.push(b1);
        atoms.tau.push(t);
    }
    let n = latent.n();
    let weights = (0..n)
        .map(|i| stick_weights(&eta.iter().map(|e| e[i]).collect::<Vec<_>>()))
        .collect();
    PriorDraw {
        eta,
        lambda,
        weights,
        atoms,
    }
}

fn default_representation(kernel: &CorrelationKernel) -> Representation {
    if kernel.is_low_rank() {
        Representation::LowRank
    } else {
        Representation::FullRank
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelState {
    /// Latent values at all data points.
    pub eta: DVector<f64>,
    pub lambda: f64,
    /// Pólya-Gamma draws over the level's index set.
    pub omega: DVector<f64>,
    pub gamma: Option<DVector<f64>>,
    pub adaptation: Adaptation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    /// Zero-based component labels.
    pub s: Vec<usize>,
    pub levels: Vec<LevelState>,
    pub atoms: Atoms,
}

impl MixtureState {
    pub fn occupied(&self, truncation: usize) -> usize {
        let mut seen = vec![false; truncation];
        for &s in &self.s {
            seen[s] = true;
        }
        seen.iter().filter(|&&v| v).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub spec: StickBreakingSpec,
    pub atom_prior: AtomPrior,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub adapted: bool,
    pub polya_truncation: usize,
    /// Defaults to low-rank for feature-map and predictive-process kernels.
    pub representation: Option<Representation>,
}

impl MixtureConfig {
    pub fn new(spec: StickBreakingSpec, atom_prior: AtomPrior, iterations: usize, burn_in: usize, seed: u64) -> Self {
        MixtureConfig {
            spec,
            atom_prior,
            iterations,
            burn_in,
            seed,
            adapted: true,
            polya_truncation: DEFAULT_TRUNCATION,
            representation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.atom_prior.validate()?;
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.polya_truncation == 0 {
            return Err(Error::invalid("polya_truncation must be positive"));
        }
        Ok(())
    }

    pub fn representation(&self) -> Representation {
        self.representation
            .unwrap_or_else(|| default_representation(&self.spec.kernel))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the random stream for one level within a sweep.
pub fn level_stream_seed(base: u64, level: u64) -> u64 {
    splitmix64(splitmix64(base) ^ level)
}

/// Precomputed structure of the mixture sampler for one dataset.
#[derive(Clone, Debug)]
pub struct MixtureSampler {
    config: MixtureConfig,
    latent: LatentGaussian,
}

impl MixtureSampler {
    pub fn new(config: &MixtureConfig, x: &[f64]) -> Result<Self> {
        config.validate()?;
        let latent = LatentGaussian::from_kernel(&config.spec.kernel, &Points::from_1d(x), config.representation())?;
        Ok(MixtureSampler {
            config: config.clone(),
            latent,
        })
    }

    pub fn config(&self) -> &MixtureConfig {
        &self.config
    }

    /// A draw of all parameters from the prior, with allocations drawn
    /// from the prior weights.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> MixtureState {
        let spec = &self.config.spec;
        let t = self.config.polya_truncation;
        let mut levels = Vec::with_capacity(spec.shapes.len());
        for s in &spec.shapes {
            let lambda = sample_polya_unchecked(s, t, rng);
            let (eta, gamma) = self.latent.prior_draw(lambda, s, rng);
            levels.push(LevelState {
                eta,
                lambda,
                omega: DVector::zeros(0),
                gamma,
                adaptation: Adaptation::new(s),
            });
        }
        let h = spec.truncation;
        let mut atoms = Atoms {
            beta0: vec![0.0; h],
            beta1: vec![0.0; h],
            tau: vec![1.0; h],
        };
        for k in 0..h {
            let (b0, b1, tau) = sample_atom(&self.config.atom_prior, rng);
            atoms.beta0[k] = b0;
            atoms.beta1[k] = b1;
            atoms.tau[k] = tau;
        }
        let n = self.latent.n();
        let s = (0..n)
            .map(|i| {
                let lw = log_stick_weights(&levels.iter().map(|l| l.eta[i]).collect::<Vec<_>>());
                sample_categorical_log(&lw, rng)
            })
            .collect();
        MixtureState { s, levels, atoms }
    }

    /// One cycle: allocations, stick levels, atoms. Each level runs on its
    /// own random stream seeded from one draw of `rng`, so results do not
    /// depend on thread scheduling.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut MixtureState,
        data: &RegressionDataset,
        rng: &mut R,
    ) -> Result<Vec<bool>> {
        state.s = alg2_step_allocations(state, data, rng);
        let base: u64 = rng.random();
        let accepted = self.step_weights(state, base)?;
        state.atoms = alg2_step_atoms(state, data, &self.config.atom_prior, rng);
        Ok(accepted)
    }

    /// Step 2 for every level; returns per-level λ acceptance flags.
    pub fn step_weights(&self, state: &mut MixtureState, base_seed: u64) -> Result<Vec<bool>> {
        let s = state.s.clone();
        let seeds: Vec<u64> = (0..state.levels.len())
            .map(|h| level_stream_seed(base_seed, h as u64))
            .collect();
        let run = |(h, level): (usize, &mut LevelState)| -> Result<bool> {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds[h]);
            self.update_level(h, level, &s, &mut rng)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            state.levels.par_iter_mut().enumerate().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            state.levels.iter_mut().enumerate().map(run).collect()
        }
    }

    /// Algorithm 1 cycle for level h with binary data 1(s_i = h), i ∈ I_h.
    pub fn update_level<R: Rng + ?Sized>(
        &self,
        h: usize,
        level: &mut LevelState,
        s: &[usize],
        rng: &mut R,
    ) -> Result<bool> {
        let shape = self.config.spec.shapes[h];
        let t = self.config.polya_truncation;
        let (idx, z) = level_data(s, h);
        if idx.is_empty() {
            level.lambda = sample_polya_unchecked(&shape, t, rng);
            let (eta, gamma) = self.latent.prior_draw(level.lambda, &shape, rng);
            level.eta = eta;
            level.gamma = gamma;
            level.omega = DVector::zeros(0);
            return Ok(false);
        }
        let eta_obs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| level.eta[i]));
        level.omega = step_pg(&eta_obs, rng);
        let data = PgData::new(&z, level.omega.clone())?;
        let block = self.latent.observe(&idx);
        let proposal = lambda_proposal(&shape, &level.adaptation, self.config.adapted);
        let mut evals: Vec<CollapsedEval> = Vec::new();
        let mv = step_lambda_mh(
            level.lambda,
            &shape,
            &proposal,
            t,
            |l| {
                let e = block.collapsed_eval(l, &shape, &data)?;
                let v = e.log_lik;
                evals.push(e);
                Ok(v)
            },
            rng,
        )?;
        level.lambda = mv.lambda;
        level.adaptation.update(mv.lambda);
        let cached = evals.iter().find(|e| e.lambda == level.lambda);
        let (eta, gamma) = self
            .latent
            .sample_conditional(&block, level.lambda, &shape, &data, cached, rng)?;
        level.eta = eta;
        level.gamma = gamma;
        Ok(mv.accepted)
    }
}

/// I_h = {i : s_i ≥ h} (zero-based) and z_i = 1(s_i = h) on it.
pub fn level_data(s: &[usize], h: usize) -> (Vec<usize>, Vec<u8>) {
    let idx: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= h).collect();
    let z = idx.iter().map(|&i| (s[i] == h) as u8).collect();
    (idx, z)
}

/// Step 1: categorical allocation per observation, in log space.
pub fn alg2_step_allocations<R: Rng + ?Sized>(
    state: &MixtureState,
    data: &RegressionDataset,
    rng: &mut R,
) -> Vec<usize> {
    let h = state.atoms.len();
    let mut etas = vec![0.0; h - 1];
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        for (l, level) in state.levels.iter().enumerate() {
            etas[l] = level.eta[i];
        }
        let mut lw = log_stick_weights(&etas);
        for (k, w) in lw.iter_mut().enumerate() {
            *w += normal_log_pdf(data.y[i], state.atoms.mean_at(k, data.x[i]), 1.0 / state.atoms.tau[k]);
        }
        out.push(sample_categorical_log(&lw, rng));
    }
    out
}

/// Step 3: conjugate draws of (β₀ₕ, β₁ₕ) given τ_h, then τ_h given the new
/// coefficients. Empty components draw from the priors.
pub fn alg2_step_atoms<R: Rng + ?Sized>(
    state: &MixtureState,
    data: &RegressionDataset,
    prior: &AtomPrior,
    rng: &mut R,
) -> Atoms {
    let h = state.atoms.len();
    let sigma_inv = prior.sigma().try_inverse().expect("validated");
    let mut atoms = state.atoms.clone();
    let mut xtx = vec![Matrix2::<f64>::zeros(); h];
    let mut xty = vec![Vector2::<f64>::zeros(); h];
    let mut counts = vec![0usize; h];
    for i in 0..data.len() {
        let k = state.s[i];
        let (x, y) = (data.x[i], data.y[i]);
        xtx[k] += Matrix2::new(1.0, x, x, x * x);
        xty[k] += Vector2::new(y, x * y);
        counts[k] += 1;
    }
    for k in 0..h {
        let tau = atoms.tau[k];
        let prec = xtx[k] * tau + sigma_inv;
        let chol = prec.cholesky().expect("precision is positive definite");
        let mean = chol.solve(&(xty[k] * tau));
        // β = mean + L⁻ᵀ z has covariance (L Lᵀ)⁻¹
        let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let l = chol.l();
        let dev = l.transpose().solve_upper_triangular(&z).expect("nonsingular");
        let beta = mean + dev;
        atoms.beta0[k] = beta[0];
        atoms.beta1[k] = beta[1];
    }
    let mut ssr = vec![0.0; h];
    for i in 0..data.len() {
        let k = state.s[i];
        let r = data.y[i] - atoms.mean_at(k, data.x[i]);
        ssr[k] += r * r;
    }
    for k in 0..h {
        let shape = prior.a_tau + counts[k] as f64 / 2.0;
        let rate = prior.b_tau + ssr[k] / 2.0;
        atoms.tau[k] = Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng);
    }
    atoms
}

/// Gamma shape and rate of the τ_h full conditional given allocations and
/// coefficients.
pub fn tau_conditional(
    s: &[usize],
    data: &RegressionDataset,
    atoms: &Atoms,
    prior: &AtomPrior,
    h: usize,
) -> (f64, f64) {
    let mut count = 0usize;
    let mut ssr = 0.0;
    for i in 0..data.len() {
        if s[i] == h {
            count += 1;
            let r = data.y[i] - atoms.mean_at(h, data.x[i]);
            ssr += r * r;
        }
    }
    (prior.a_tau + count as f64 / 2.0, prior.b_tau + ssr / 2.0)
}

/// Latent field of one level stored in a chain record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LevelRecord {
    /// Feature-map coefficients γ: η(x) = m + √λ φ(x)ᵀγ.
    Coefficients { lambda: f64, gamma: Vec<f64> },
    /// Values at the training covariates.
    Values { lambda: f64, eta: Vec<f64> },
}

impl LevelRecord {
    pub fn lambda(&self) -> f64 {
        match self {
            LevelRecord::Coefficients { lambda, .. } | LevelRecord::Values { lambda, .. } => *lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub s: Vec<usize>,
    pub levels: Vec<LevelRecord>,
    pub atoms: Atoms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureChainOutput {
    pub records: Vec<MixtureRecord>,
    /// Number of occupied components at every iteration, burn-in included.
    pub occupied: Vec<usize>,
    pub lambda_moves: AcceptanceCounts,
    /// Iterations at which all H components were occupied.
    pub saturated_iterations: usize,
    pub warnings: Vec<String>,
    pub sampler_seconds: f64,
    pub seed: u64,
}

impl MixtureChainOutput {
    pub fn lambda_trace(&self, level: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.levels[level].lambda()).collect()
    }
}

pub fn run_mixture_chain(config: &MixtureConfig, data: &RegressionDataset) -> Result<MixtureChainOutput> {
    let sampler = MixtureSampler::new(config, &data.x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = sampler.initial_state(&mut rng);
    let h = config.spec.truncation;
    let store_gamma = matches!(config.spec.kernel, CorrelationKernel::FeatureMap { .. })
        && config.representation() == Representation::LowRank;
    let mut out = MixtureChainOutput {
        records: Vec::with_capacity(config.iterations - config.burn_in),
        occupied: Vec::with_capacity(config.iterations),
        lambda_moves: AcceptanceCounts::default(),
        saturated_iterations: 0,
        warnings: Vec::new(),
        sampler_seconds: 0.0,
        seed: config.seed,
    };
    let start = Instant::now();
    for it in 0..config.iterations {
        let acc = sampler
            .sweep(&mut state, data, &mut rng)
            .map_err(|e| e.at_iteration(it))?;
        for (lvl, a) in state.levels.iter().zip(acc) {
            if !lvl.omega.is_empty() {
                out.lambda_moves.record(a);
            }
        }
        let occ = state.occupied(h);
        if occ == h {
            if out.saturated_iterations == 0 {
                out.warnings.push(format!(
                    "all {h} components occupied at iteration {it}; consider a larger truncation"
                ));
            }
            out.saturated_iterations += 1;
        }
        out.occupied.push(occ);
        if it >= config.burn_in {
            let levels = state
                .levels
                .iter()
                .map(|l| match (&l.gamma, store_gamma) {
                    (Some(g), true) => LevelRecord::Coefficients {
                        lambda: l.lambda,
                        gamma: g.as_slice().to_vec(),
                    },
                    _ => LevelRecord::Values {
                        lambda: l.lambda,
                        eta: l.eta.as_slice().to_vec(),
                    },
                })
                .collect();
            out.records.push(MixtureRecord {
                s: state.s.clone(),
                levels,
                atoms: state.atoms.clone(),
            });
        }
    }
    out.sampler_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Evaluates stick weights of retained draws at new covariates.
pub struct MixturePredictor<'a> {
    chain: &'a MixtureChainOutput,
    config: &'a MixtureConfig,
    xs: Vec<f64>,
    basis: Option<BasisEvaluator>,
    predictor: Option<ConditionalPredictor>,
}

impl<'a> MixturePredictor<'a> {
    pub fn new(chain: &'a MixtureChainOutput, config: &'a MixtureConfig, train_x: &[f64], xs: &[f64]) -> Result<Self> {
        if chain.records.is_empty() {
            return Err(Error::EmptyInput("mixture chain"));
        }
        let needs_values = chain.records[0]
            .levels
            .iter()
            .any(|l| matches!(l, LevelRecord::Values { .. }));
        let basis = match &config.spec.kernel {
            CorrelationKernel::FeatureMap { basis } => Some(basis.evaluator()?),
            _ => None,
        };
        let predictor = if needs_values {
            Some(ConditionalPredictor::new(
                &config.spec.kernel,
                &Points::from_1d(train_x),
                &Points::from_1d(xs),
            )?)
        } else {
            None
        };
        Ok(MixturePredictor {
            chain,
            config,
            xs: xs.to_vec(),
            basis,
            predictor,
        })
    }

    /// Stick weights at every new x for record `r`, one row per x.
    pub fn weights<R: Rng + ?Sized>(&self, r: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let rec = &self.chain.records[r];
        let nx = self.xs.len();
        let mut etas = vec![vec![0.0; rec.levels.len()]; nx];
        for (h, lvl) in rec.levels.iter().enumerate() {
            let shape = self.config.spec.shapes[h];
            match lvl {
                LevelRecord::Coefficients { lambda, gamma } => {
                    let basis = self.basis.as_ref().ok_or_else(|| Error::invalid("coefficients need a feature map"))?;
                    let m = latent_mean(*lambda, &shape);
                    for (j, &x) in self.xs.iter().enumerate() {
                        let phi = basis.normalized(&[x])?;
                        let dot: f64 = phi.iter().zip(gamma).map(|(p, g)| p * g).sum();
                        etas[j][h] = m + lambda.sqrt() * dot;
                    }
                }
                LevelRecord::Values { lambda, eta } => {
                    let p = self.predictor.as_ref().expect("predictor built for value records");
                    let v = p.sample_pointwise(&DVector::from_column_slice(eta), *lambda, &shape, rng);
                    for j in 0..nx {
                        etas[j][h] = v[j];
                    }
                }
            }
        }
        Ok(etas.iter().map(|e| stick_weights(e)).collect())
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn n_records(&self) -> usize {
        self.chain.records.len()
    }

    pub fn atoms(&self, r: usize) -> &Atoms {
        &self.chain.records[r].atoms
    }
}

fn mixture_density(w: &[f64], atoms: &Atoms, x: f64, y: f64) -> f64 {
    w.iter()
        .enumerate()
        .map(|(h, &wh)| {
            if wh == 0.0 {
                0.0
            } else {
                wh * normal_log_pdf(y, atoms.mean_at(h, x), 1.0 / atoms.tau[h]).exp()
            }
        })
        .sum()
}

fn mixture_cdf(w: &[f64], atoms: &Atoms, x: f64, t: f64) -> f64 {
    w.iter()
        .enumerate()
        .map(|(h, &wh)| wh * normal_cdf((t - atoms.mean_at(h, x)) * atoms.tau[h].sqrt()))
        .sum()
}

fn mixture_mean(w: &[f64], atoms: &Atoms, x: f64) -> f64 {
    w.iter().enumerate().map(|(h, &wh)| wh * atoms.mean_at(h, x)).sum()
}

/// Posterior mean and pointwise 95% band of a density on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub x: f64,
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Conditional density f(y | x) with pointwise bands at each x.
pub fn conditional_density<R: Rng + ?Sized>(
    chain: &MixtureChainOutput,
    config: &MixtureConfig,
    train_x: &[f64],
    xs: &[f64],
    y_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<DensitySummary>> {
    let p = MixturePredictor::new(chain, config, train_x, xs)?;
    let nr = p.n_records();
    let mut vals = vec![vec![Vec::with_capacity(nr); y_grid.len()]; xs.len()];
    for r in 0..nr {
        let w = p.weights(r, rng)?;
        let atoms = p.atoms(r);
        for (j, &x) in xs.iter().enumerate() {
            for (g, &y) in y_grid.iter().enumerate() {
                vals[j][g].push(mixture_density(&w[j], atoms, x, y));
            }
        }
    }
    Ok(xs
        .iter()
        .zip(vals.iter_mut())
        .map(|(&x, per_y)| {
            let sums: Vec<PointSummary> = per_y.iter_mut().map(|d| PointSummary::from_draws(d)).collect();
            DensitySummary {
                x,
                y: y_grid.to_vec(),
                mean: sums.iter().map(|s| s.mean).collect(),
                lower: sums.iter().map(|s| s.lower).collect(),
                upper: sums.iter().map(|s| s.upper).collect(),
            }
        })
        .collect())
}

/// Posterior mean density only, one row per x; memory does not grow with
/// the number of draws.
pub fn posterior_mean_density<R: Rng + ?Sized>(
    chain: &MixtureChainOutput,
    config: &MixtureConfig,
    train_x: &[f64],
    xs: &[f64],
    y_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let p = MixturePredictor::new(chain, config, train_x, xs)?;
    let mut acc = vec![vec![0.0; y_grid.len()]; xs.len()];
    for r in 0..p.n_records() {
        let w = p.weights(r, rng)?;
        let atoms = p.atoms(r);
        for (j, &x) in xs.iter().enumerate() {
            for (g, &y) in y_grid.iter().enumerate() {
                acc[j][g] += mixture_density(&w[j], atoms, x, y);
            }
        }
    }
    let nr = p.n_records() as f64;
    Ok(acc.into_iter().map(|row| row.into_iter().map(|v| v / nr).collect()).collect())
}

/// Posterior summary of P(y ≤ t | x) at each x.
pub fn conditional_cdf<R: Rng + ?Sized>(
    chain: &MixtureChainOutput,
    config: &MixtureConfig,
    train_x: &[f64],
    xs: &[f64],
    t: f64,
    rng: &mut R,
) -> Result<Vec<PointSummary>> {
    functional(chain, config, train_x, xs, rng, |w, a, x| mixture_cdf(w, a, x, t))
}

/// Posterior summary of E(y | x) at each x.
pub fn conditional_mean<R: Rng + ?Sized>(
    chain: &MixtureChainOutput,
    config: &MixtureConfig,
    train_x: &[f64],
    xs: &[f64],
    rng: &mut R,
) -> Result<Vec<PointSummary>> {
    functional(chain, config, train_x, xs, rng, mixture_mean)
}

fn functional<R: Rng + ?Sized>(
    chain: &MixtureChainOutput,
    config: &MixtureConfig,
    train_x: &[f64],
    xs: &[f64],
    rng: &mut R,
    f: impl Fn(&[f64], &Atoms, f64) -> f64,
) -> Result<Vec<PointSummary>> {
    let p = MixturePredictor::new(chain, config, train_x, xs)?;
    let mut draws = vec![Vec::with_capacity(p.n_records()); xs.len()];
    for r in 0..p.n_records() {
        let w = p.weights(r, rng)?;
        for (j, &x) in xs.iter().enumerate() {
            draws[j].push(f(&w[j], p.atoms(r), x));
        }
    }
    Ok(draws.iter_mut().map(|d| PointSummary::from_draws(d)).collect())
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
}

impl McEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        McEstimate {
            value: mean,
            se: (var / n).sqrt(),
        }
    }
}

fn check_b(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            function: "stick-breaking dependence",
            value: b,
            requirement: "b > 0",
        })
    }
}

/// Monte Carlo draws of σ{η(x)}σ{η(x′)} for η ~ LBP(1, b) with
/// correlation `r` between the two points.
fn product_draws<R: Rng + ?Sized>(r: f64, b: f64, nsim: usize, rng: &mut R) -> Vec<f64> {
    let shape = ShapePair { a: 1.0, b };
    let c = (1.0 - r * r).max(0.0).sqrt();
    (0..nsim)
        .map(|_| {
            let l = sample_polya_unchecked(&shape, DEFAULT_TRUNCATION, rng);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let m = latent_mean(l, &shape);
            let s = l.sqrt();
            logistic(m + s * z1) * logistic(m + s * (r * z1 + c * z2))
        })
        .collect()
}

/// μ(x, x′) = E[σ{η(x)}σ{η(x′)}] with η ~ LBP(1, b, 𝓡).
pub fn mu_mc<R: Rng + ?Sized>(
    kernel: &CorrelationKernel,
    x: &[f64],
    x_prime: &[f64],
    b: f64,
    nsim: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_b(b)?;
    if nsim < 10_000 {
        return Err(Error::invalid(format!("mu_mc needs at least 10⁴ draws, got {nsim}")));
    }
    let r = kernel.eval(x, x_prime)?;
    Ok(mu_mc_at_correlation(r, b, nsim, rng))
}

/// μ for a given kernel value 𝓡(x, x′) ∈ [−1, 1].
pub fn mu_mc_at_correlation<R: Rng + ?Sized>(r: f64, b: f64, nsim: usize, rng: &mut R) -> McEstimate {
    McEstimate::from_samples(&product_draws(r.clamp(-1.0, 1.0), b, nsim, rng))
}

fn check_mu(mu: f64, b: f64, function: &'static str) -> Result<f64> {
    check_b(b)?;
    let denom = 2.0 / mu - (1.0 + b);
    if !(mu > 0.0) || !(denom > 0.0) {
        return Err(Error::Domain {
            function,
            value: mu,
            requirement: "0 < mu < 2/(1+b)",
        });
    }
    Ok(denom)
}

/// pr(ϑ = ϑ′) = (1 + b) / {2μ⁻¹ − (1 + b)}.
pub fn tie_probability(mu: f64, b: f64) -> Result<f64> {
    let d = check_mu(mu, b, "tie_probability")?;
    Ok((1.0 + b) / d)
}

/// corr{G_x(B), G_x′(B)} = ρ₀ (1 + b)² / {2μ⁻¹ − (1 + b)}.
pub fn corr_rpm(mu: f64, b: f64, rho0: f64) -> Result<f64> {
    let d = check_mu(mu, b, "corr_rpm")?;
    if !(-1.0..=1.0).contains(&rho0) {
        return Err(Error::Domain {
            function: "corr_rpm",
            value: rho0,
            requirement: "-1 <= rho0 <= 1",
        });
    }
    Ok(rho0 * (1.0 + b) * (1.0 + b) / d)
}

/// μ at x = x′: E V² for V ~ Beta(1, b).
pub fn mu_diagonal(b: f64) -> f64 {
    2.0 / ((1.0 + b) * (2.0 + b))
}

/// μ implied by a correlation ρ between Beta(1, b) stick ratios.
pub fn mu_from_stick_correlation(rho: f64, b: f64) -> f64 {
    let m = 1.0 / (1.0 + b);
    let v = b / ((1.0 + b) * (1.0 + b) * (2.0 + b));
    m * m + rho * v
}

/// Lower bound of the stick-ratio correlation attainable when both sticks
/// share a Beta(1, b) marginal through a common gamma construction.
pub fn m2_stick_bound(b: f64) -> f64 {
    b.sqrt() * (b + 1.0) * (b + 2.0).sqrt() - b * (b + 2.0)
}

/// Infimum of the random-measure correlation with independent stick ratios.
pub fn m3_bound(b: f64) -> f64 {
    (1.0 + b) / (1.0 + 2.0 * b)
}

/// μ for counter-monotonic Beta(1, b) sticks, in closed form:
/// 1 − 2b/(b + 1) + B(1 + 1/b, 1 + 1/b).
pub fn m4_mu_exact(b: f64) -> f64 {
    let c = 1.0 + 1.0 / b;
    1.0 - 2.0 * b / (b + 1.0) + crate::special::log_beta_unchecked(c, c).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorBounds {
    pub b: f64,
    /// Logistic-beta sticks at 𝓡 = −1.
    pub m1: McEstimate,
    pub m2_stick: f64,
    pub m2_rpm: f64,
    pub m3: f64,
    /// Counter-monotonic sticks.
    pub m4: McEstimate,
}

/// Infima of corr{G_x(B), G_x′(B)} under the four stick constructions.
pub fn competitor_corr_bounds<R: Rng + ?Sized>(b: f64, nsim: usize, rng: &mut R) -> Result<CompetitorBounds> {
    check_b(b)?;
    if nsim < 2 {
        return Err(Error::invalid("need at least two Monte Carlo draws"));
    }
    let scale = (1.0 + b) * (1.0 + b);
    let corr_of = |mu: McEstimate| -> Result<McEstimate> {
        let d = check_mu(mu.value, b, "competitor_corr_bounds")?;
        // delta method: d corr / d μ = 2 (1+b)² / (μ² d²)
        let deriv = 2.0 * scale / (mu.value * mu.value * d * d);
        Ok(McEstimate {
            value: scale / d,
            se: deriv * mu.se,
        })
    };
    let m1 = corr_of(mu_mc_at_correlation(-1.0, b, nsim, rng))?;
    let m4_draws: Vec<f64> = (0..nsim)
        .map(|_| {
            let u: f64 = rng.random();
            (1.0 - (1.0 - u).powf(1.0 / b)) * (1.0 - u.powf(1.0 / b))
        })
        .collect();
    let m4 = corr_of(McEstimate::from_samples(&m4_draws))?;
    let m2_stick = m2_stick_bound(b);
    let m2_rpm = corr_rpm(mu_from_stick_correlation(m2_stick, b), b, 1.0)?;
    Ok(CompetitorBounds {
        b,
        m1,
        m2_stick,
        m2_rpm,
        m3: m3_bound(b),
        m4,
    })
}

/// corr{G_x(B), G_x′(B)} along a sequence of covariates approaching x′,
/// using the same random numbers at every point of the sequence.
pub fn continuity_check<R: Rng + ?Sized>(
    kernel: &CorrelationKernel,
    b: f64,
    x_prime: &[f64],
    xs: &[Vec<f64>],
    nsim: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_b(b)?;
    if nsim < 2 {
        return Err(Error::invalid("need at least two Monte Carlo draws"));
    }
    let shape = ShapePair { a: 1.0, b };
    let draws: Vec<(f64, f64, f64)> = (0..nsim)
        .map(|_| {
            let l = sample_polya_unchecked(&shape, DEFAULT_TRUNCATION, rng);
            (l, rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
        .collect();
    xs.iter()
        .map(|x| {
            let r = kernel.eval(x, x_prime)?.clamp(-1.0, 1.0);
            let c = (1.0 - r * r).max(0.0).sqrt();
            let mu = draws
                .iter()
                .map(|&(l, z1, z2)| {
                    let m = latent_mean(l, &shape);
                    let s = l.sqrt();
                    logistic(m + s * z1) * logistic(m + s * (r * z1 + c * z2))
                })
                .sum::<f64>()
                / nsim as f64;
            corr_rpm(mu.min(mu_diagonal(b)), b, 1.0)
        })
        .collect()
}

/// Posterior mean of the log predictive density at each observation, a
/// cheap fit summary.
pub fn mean_log_likelihood(chain: &MixtureChainOutput, data: &RegressionDataset) -> Result<f64> {
    if chain.records.is_empty() {
        return Err(Error::EmptyInput("mixture chain"));
    }
    let mut total = 0.0;
    for rec in &chain.records {
        for i in 0..data.len() {
            let k = rec.s[i];
            total += normal_log_pdf(data.y[i], rec.atoms.mean_at(k, data.x[i]), 1.0 / rec.atoms.tau[k]);
        }
    }
    Ok(total / chain.records.len() as f64)
}

/// ln Σ_h w_h N(y; μ_h(x), τ_h⁻¹) for a single draw.
pub fn log_mixture_density(w: &[f64], atoms: &Atoms, x: f64, y: f64) -> f64 {
    let terms: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(h, &wh)| wh.ln() + normal_log_pdf(y, atoms.mean_at(h, x), 1.0 / atoms.tau[h]))
        .collect();
    log_sum_exp(&terms).unwrap_or(f64::NEG_INFINITY)
}

/// Covariance of a 2-vector sample, used for conjugacy checks.
pub fn sample_covariance_2(draws: &[(f64, f64)]) -> DMatrix<f64> {
    let n = draws.len() as f64;
    let (m0, m1) = draws.iter().fold((0.0, 0.0), |a, d| (a.0 + d.0 / n, a.1 + d.1 / n));
    let mut c = DMatrix::zeros(2, 2);
    for d in draws {
        let v = [d.0 - m0, d.1 - m1];
        for i in 0..2 {
            for j in 0..2 {
                c[(i, j)] += v[i] * v[j] / (n - 1.0);
            }
        }
    }
    c
}

//! WebAssembly bindings for the demo page in `www/`. Each export returns a
//! JSON string; the plain Rust functions behind them are usable natively.

use lbp::binary_regression::{predict_probabilities, run_chain, BinaryDataset, BinaryRegressionConfig};
use lbp::harness::{cosine_probability, dependence_curve, linspace, DependenceRow, ScenarioSpec, SimulatedData};
use lbp::latent::latent_mean;
use lbp::polya::{sample_polya, DEFAULT_TRUNCATION};
use lbp::special::{log_beta, logistic};
use lbp::{CorrelationKernel, Points, Result, ShapePair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct MarginalHistogram {
    pub centers: Vec<f64>,
    /// Histogram of σ(η) scaled to a density.
    pub empirical: Vec<f64>,
    /// Beta(a, b) density at the bin centers.
    pub beta: Vec<f64>,
    pub mean_lambda: f64,
}

/// Draws η = 0.5λ(a − b) + √λ Z with λ ~ Polya(a, b) and bins σ(η).
pub fn marginal_histogram(a: f64, b: f64, draws: usize, bins: usize, seed: u64) -> Result<MarginalHistogram> {
    let shape = ShapePair::new(a, b)?;
    let bins = bins.clamp(5, 200);
    let draws = draws.clamp(100, 1_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; bins];
    let mut lambda_sum = 0.0;
    for _ in 0..draws {
        let l = sample_polya(&shape, DEFAULT_TRUNCATION, &mut rng)?.lambda;
        let z: f64 = rng.sample(StandardNormal);
        let p = logistic(latent_mean(l, &shape) + l.sqrt() * z);
        counts[((p * bins as f64) as usize).min(bins - 1)] += 1;
        lambda_sum += l;
    }
    let width = 1.0 / bins as f64;
    let lb = log_beta(a, b)?;
    let centers: Vec<f64> = (0..bins).map(|k| (k as f64 + 0.5) * width).collect();
    Ok(MarginalHistogram {
        empirical: counts.iter().map(|&c| c as f64 / (draws as f64 * width)).collect(),
        beta: centers
            .iter()
            .map(|&x| ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - lb).exp())
            .collect(),
        centers,
        mean_lambda: lambda_sum / draws as f64,
    })
}

/// Prior dependence along distance under a Matérn kernel.
pub fn dependence(a: f64, b: f64, b_ddp: f64, range: f64, smoothness: f64, seed: u64) -> Result<Vec<DependenceRow>> {
    let kernel = CorrelationKernel::Matern { range, smoothness };
    kernel.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dependence_curve(&kernel, &ShapePair::new(a, b)?, b_ddp, &linspace(0.0, 1.0, 26), 4000, &mut rng)
}

#[derive(Debug, Serialize)]
pub struct CosineFit {
    pub x: Vec<f64>,
    pub z: Vec<u8>,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub acceptance: f64,
}

/// Simulates binary data with pr{z = 1} = σ{cos(πx)} on [0, 3] and fits
/// the binary regression model with a Matérn kernel.
pub fn cosine_fit(n: usize, iterations: usize, range: f64, seed: u64) -> Result<CosineFit> {
    let n = n.clamp(10, 400);
    let iterations = iterations.clamp(20, 5000);
    let SimulatedData::Binary(sim) = (ScenarioSpec::Cosine600 { n }).simulate(seed)? else {
        unreachable!("binary scenario")
    };
    let kernel = CorrelationKernel::Matern { range, smoothness: 1.5 };
    let cfg = BinaryRegressionConfig::new(ShapePair::new(2.0, 4.0)?, kernel, iterations, iterations / 2, seed);
    let train = sim.train_points();
    let chain = run_chain(&cfg, &BinaryDataset::new(train.clone(), sim.z.clone())?)?;
    let grid = linspace(0.0, 3.0, 61);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let s = predict_probabilities(&chain, &cfg, &train, &Points::from_1d(&grid), &mut rng)?;
    Ok(CosineFit {
        x: train.coords().to_vec(),
        z: sim.z,
        truth: grid.iter().map(|&x| cosine_probability(x)).collect(),
        grid,
        mean: s.iter().map(|p| p.mean).collect(),
        lower: s.iter().map(|p| p.lower).collect(),
        upper: s.iter().map(|p| p.upper).collect(),
        acceptance: chain.lambda_moves.rate(),
    })
}

fn to_json<T: Serialize>(v: Result<T>) -> std::result::Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = marginalHistogram)]
pub fn marginal_histogram_js(a: f64, b: f64, draws: u32, bins: u32, seed: u32) -> std::result::Result<String, JsError> {
    to_json(marginal_histogram(a, b, draws as usize, bins as usize, seed as u64))
}

#[wasm_bindgen(js_name = dependenceCurve)]
pub fn dependence_js(a: f64, b: f64, b_ddp: f64, range: f64, smoothness: f64, seed: u32) -> std::result::Result<String, JsError> {
    to_json(dependence(a, b, b_ddp, range, smoothness, seed as u64))
}

#[wasm_bindgen(js_name = cosineFit)]
pub fn cosine_fit_js(n: u32, iterations: u32, range: f64, seed: u32) -> std::result::Result<String, JsError> {
    to_json(cosine_fit(n as usize, iterations as usize, range, seed as u64))
}

//! Prior-forward against successive-conditional comparisons. Starting from an
//! exact prior draw, alternating posterior sweeps with fresh data draws must
//! leave the joint law unchanged.

use lbp::binary_regression::{BinaryRegressionConfig, BinarySampler};
use lbp::ddp::*;
use lbp::special::logistic;
use lbp::stats::{chi_square, ks_two_sample};
use lbp::{CorrelationKernel, Points};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ensure, rng, Check};

/// p-values for λ, the mean of η, and the range index (1 without a grid).
pub fn binary_geweke(cfg: &BinaryRegressionConfig, chains: usize, sweeps: usize, seed: u64) -> [f64; 3] {
    let xs = [0.0, 0.2, 0.45, 0.7, 1.0];
    let sampler = BinarySampler::new(cfg, &Points::from_1d(&xs)).unwrap();
    let mut g = rng(seed);
    let draw_z = |eta: &DVector<f64>, g: &mut ChaCha8Rng| -> Vec<u8> {
        eta.iter().map(|&e| (g.random::<f64>() < logistic(e)) as u8).collect()
    };
    let mut fwd = [Vec::new(), Vec::new(), Vec::new()];
    let mut sc = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..chains {
        let st = sampler.prior_state(&mut g);
        fwd[0].push(st.lambda);
        fwd[1].push(st.eta.mean());
        fwd[2].push(st.range.unwrap_or(0.0));
    }
    for _ in 0..chains {
        let mut st = sampler.prior_state(&mut g);
        let mut z = draw_z(&st.eta, &mut g);
        for _ in 0..sweeps {
            sampler.sweep(&mut st, &z, &mut g).unwrap();
            z = draw_z(&st.eta, &mut g);
        }
        sc[0].push(st.lambda);
        sc[1].push(st.eta.mean());
        sc[2].push(st.range.unwrap_or(0.0));
    }
    let mut range_p = 1.0;
    if let Some(grid) = &cfg.range_grid {
        let count =
            |v: &[f64]| -> Vec<f64> { grid.values.iter().map(|g| v.iter().filter(|&&r| r == *g).count() as f64).collect() };
        let (fo, so) = (count(&fwd[2]), count(&sc[2]));
        let pooled: Vec<f64> = fo.iter().zip(&so).map(|(a, b)| (a + b) / 2.0).collect();
        range_p = chi_square(&so, &pooled).unwrap().p_value.min(chi_square(&fo, &pooled).unwrap().p_value);
    }
    [
        ks_two_sample(&fwd[0], &sc[0]).unwrap().p_value,
        ks_two_sample(&fwd[1], &sc[1]).unwrap().p_value,
        range_p,
    ]
}

pub fn binary_check(name: &str, cfg: &BinaryRegressionConfig, seed: u64, level: f64) -> Check {
    let p = binary_geweke(cfg, 2000, 10, seed);
    ensure(p.iter().all(|&v| v > level), || format!("{name}: p-values (λ, mean η, range) = {p:.4?}"))
}

pub const MIXTURE_STATISTICS: [&str; 6] = ["λ₁", "λ₂", "mean η₁", "η₂(x₃)", "τ₁", "β₁ of component 2"];

/// Mixture sampler on n = 6 points with H = 3. The response is drawn once
/// from the prior state and held fixed during the sweeps.
pub fn mixture_geweke(chains: usize, sweeps: usize, seed: u64) -> Vec<f64> {
    let xs = [0.0, 0.15, 0.4, 0.55, 0.8, 1.0];
    let kernel = CorrelationKernel::Matern {
        range: 0.4,
        smoothness: 1.5,
    };
    let spec = StickBreakingSpec::lb_ddp(3, 1.5, kernel).unwrap();
    let prior = AtomPrior::isotropic(1.0, 3.0, 2.0);
    let mut cfg = MixtureConfig::new(spec, prior, 10, 0, 0);
    cfg.adapted = false;
    let sampler = MixtureSampler::new(&cfg, &xs).unwrap();
    let mut g = rng(seed);
    let stats = |st: &MixtureState| -> [f64; 6] {
        [
            st.levels[0].lambda,
            st.levels[1].lambda,
            st.levels[0].eta.mean(),
            st.levels[1].eta[2],
            st.atoms.tau[0],
            st.atoms.beta1[1],
        ]
    };
    let mut fwd = vec![Vec::new(); 6];
    let mut post = vec![Vec::new(); 6];
    for _ in 0..chains {
        let st = sampler.initial_state(&mut g);
        for (k, v) in stats(&st).into_iter().enumerate() {
            fwd[k].push(v);
        }
    }
    for _ in 0..chains {
        let mut st = sampler.initial_state(&mut g);
        let y: Vec<f64> = (0..xs.len())
            .map(|i| {
                let h = st.s[i];
                let e: f64 = g.sample(StandardNormal);
                st.atoms.mean_at(h, xs[i]) + e / st.atoms.tau[h].sqrt()
            })
            .collect();
        let data = RegressionDataset::new(xs.to_vec(), y).unwrap();
        for _ in 0..sweeps {
            sampler.sweep(&mut st, &data, &mut g).unwrap();
        }
        for (k, v) in stats(&st).into_iter().enumerate() {
            post[k].push(v);
        }
    }
    (0..6).map(|k| ks_two_sample(&fwd[k], &post[k]).unwrap().p_value).collect()
}

pub fn mixture_check(seed: u64, level: f64) -> Check {
    let p = mixture_geweke(2000, 10, seed);
    for (k, v) in p.iter().enumerate() {
        ensure(*v > level, || format!("mixture sampler, {}: p = {v:.4}", MIXTURE_STATISTICS[k]))?;
    }
    Ok(())
}

/// Final λ₁ and occupancy of many short independent chains.
pub fn short_chain_outputs(spec: &StickBreakingSpec, data: &RegressionDataset, chains: usize, seed0: u64) -> (Vec<f64>, Vec<f64>) {
    let mut lambda = Vec::with_capacity(chains);
    let mut occupied = Vec::with_capacity(chains);
    for c in 0..chains {
        let cfg = MixtureConfig::new(spec.clone(), AtomPrior::default(), 25, 24, seed0 + c as u64);
        let out = run_mixture_chain(&cfg, data).unwrap();
        lambda.push(*out.lambda_trace(0).last().unwrap());
        occupied.push(*out.occupied.last().unwrap() as f64);
    }
    (lambda, occupied)
}

/// Pitman-Yor sticks with zero discount against the logistic-beta DDP, each
/// run from its own seeds.
pub fn pitman_yor_zero_discount(level: f64) -> Check {
    let kernel = CorrelationKernel::Matern {
        range: 0.3,
        smoothness: 1.5,
    };
    let mut g = rng(70);
    let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| {
            let e: f64 = g.sample(StandardNormal);
            let mean = if g.random::<f64>() < 0.5 { v } else { -1.0 - v };
            mean + 0.2 * e
        })
        .collect();
    let data = RegressionDataset::new(x, y).unwrap();
    let py = StickBreakingSpec::pitman_yor(5, 1.0, 0.0, kernel.clone()).unwrap();
    let lb = StickBreakingSpec::lb_ddp(5, 1.0, kernel).unwrap();
    ensure(py.shapes == lb.shapes, || "zero-discount shapes differ".into())?;
    let (l1, o1) = short_chain_outputs(&py, &data, 400, 1_000);
    let (l2, o2) = short_chain_outputs(&lb, &data, 400, 2_000);
    let pl = ks_two_sample(&l1, &l2).unwrap().p_value;
    let po = ks_two_sample(&o1, &o2).unwrap().p_value;
    ensure(pl > level && po > level, || format!("KS p-values λ₁ {pl:.4}, occupancy {po:.4}"))
}

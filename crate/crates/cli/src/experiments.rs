use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lbp::binary_regression::{predict_probabilities, run_chain, BinaryDataset};
use lbp::ddp::{conditional_mean, posterior_mean_density, run_mixture_chain, RegressionDataset};
use lbp::harness::{
    cosine_probability, density_and_regression_errors, ess_univariate, linspace, replicate_summary, rmse, GridEstimate,
    RegressionTruth, ScenarioSpec, SimulatedData, SpatialTruth,
};
use lbp::{BasisSpec, CorrelationKernel, Points};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::{covariate_header, header, write_csv};
use crate::{CliError, Common, Experiment, Scenario};

pub fn simulate(scenario: Scenario, n: Option<usize>, n_test: usize, range: f64, common: &Common) -> Result<(), CliError> {
    let spec = match scenario {
        Scenario::Cosine600 => ScenarioSpec::Cosine600 { n: n.unwrap_or(600) },
        Scenario::SpatialLbp | Scenario::SpatialCopula => ScenarioSpec::SpatialBinary {
            truth: if scenario == Scenario::SpatialLbp {
                SpatialTruth::Lbp
            } else {
                SpatialTruth::GaussianCopula
            },
            range,
            n: n.unwrap_or(500),
            n_test,
        },
        Scenario::ScenarioA => ScenarioSpec::ScenarioA { n: n.unwrap_or(500) },
        Scenario::ScenarioB => ScenarioSpec::ScenarioB { n: n.unwrap_or(500) },
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out = common.out_dir()?;
    match spec.simulate(common.seed)? {
        SimulatedData::Binary(sim) => {
            let dim = sim.points.dim();
            let row = |i: usize, last: f64| {
                let mut r = sim.points.point(i).to_vec();
                r.push(last);
                r
            };
            let mut names = covariate_header(dim);
            names.push("z".into());
            write_csv(&out.join("data.csv"), &names, (0..sim.n_train).map(|i| row(i, sim.z[i] as f64)))?;
            if sim.n_train < sim.points.len() {
                write_csv(&out.join("test.csv"), &names, (sim.n_train..sim.points.len()).map(|i| row(i, sim.z[i] as f64)))?;
            }
            names.pop();
            names.push("prob".into());
            write_csv(&out.join("truth.csv"), &names, (0..sim.points.len()).map(|i| row(i, sim.prob[i])))?;
            println!("{} training rows, {} test rows", sim.n_train, sim.points.len() - sim.n_train);
        }
        SimulatedData::Regression(sim) => {
            write_csv(&out.join("data.csv"), &header(&["x", "y"]), sim.x.iter().zip(&sim.y).map(|(&x, &y)| vec![x, y]))?;
            write_csv(
                &out.join("truth.csv"),
                &header(&["x", "mean"]),
                sim.x.iter().map(|&x| vec![x, sim.truth.mean(x)]),
            )?;
            println!("{} rows", sim.x.len());
        }
    }
    Ok(())
}

type Metrics = Vec<(&'static str, f64)>;

fn binary_data(spec: &ScenarioSpec, seed: u64) -> Result<lbp::harness::BinarySimulation, CliError> {
    match spec.simulate(seed)? {
        SimulatedData::Binary(sim) => Ok(sim),
        SimulatedData::Regression(_) => unreachable!("binary scenario"),
    }
}

fn cosine_replicate(run: &RunConfig, n: usize, seed: u64) -> Result<Metrics, CliError> {
    let sim = binary_data(&ScenarioSpec::Cosine600 { n }, seed)?;
    let cfg = run.binary(seed)?;
    let train = sim.train_points();
    let chain = run_chain(&cfg, &BinaryDataset::new(train.clone(), sim.z.clone())?)?;
    let grid = linspace(0.0, 3.0, 61);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = predict_probabilities(&chain, &cfg, &train, &Points::from_1d(&grid), &mut rng)?;
    let truth: Vec<f64> = grid.iter().map(|&x| cosine_probability(x)).collect();
    let means: Vec<f64> = s.iter().map(|p| p.mean).collect();
    let covered = s.iter().zip(&truth).filter(|(p, &t)| p.lower <= t && t <= p.upper).count();
    let ess = ess_univariate(&chain.lambda_trace())?.value;
    Ok(vec![
        ("rmse", rmse(&means, &truth)),
        ("coverage", covered as f64 / grid.len() as f64),
        ("ess_lambda", ess),
        ("ess_lambda_per_second", ess / chain.sampler_seconds.max(1e-12)),
    ])
}

fn blocking_replicate(run: &RunConfig, n: usize, seed: u64) -> Result<Metrics, CliError> {
    let spec = ScenarioSpec::SpatialBinary {
        truth: SpatialTruth::Lbp,
        range: 0.2,
        n,
        n_test: 0,
    };
    let sim = binary_data(&spec, seed)?;
    let data = BinaryDataset::new(sim.points.clone(), sim.z.clone())?;
    let mut base = run.binary(seed)?;
    if run.kernel.is_none() {
        base.kernel = CorrelationKernel::Matern {
            range: 0.2,
            smoothness: 1.5,
        };
    }
    let fit = |blocked: bool, adapted: bool| -> Result<_, CliError> {
        let mut cfg = base.clone();
        cfg.strategy.blocked = blocked;
        cfg.strategy.adapted = adapted;
        Ok(run_chain(&cfg, &data)?)
    };
    let blocked = fit(true, true)?;
    let nonblocked = fit(false, true)?;
    let fixed = fit(true, false)?;
    let eb = ess_univariate(&blocked.lambda_trace())?.value;
    let en = ess_univariate(&nonblocked.lambda_trace())?.value;
    Ok(vec![
        ("ess_blocked", eb),
        ("ess_nonblocked", en),
        ("ess_ratio", eb / en),
        ("acceptance_adapted", blocked.lambda_moves.rate()),
        ("acceptance_nonadapted", fixed.lambda_moves.rate()),
    ])
}

fn regression_replicate(run: &RunConfig, truth: RegressionTruth, n: usize, seed: u64) -> Result<Metrics, CliError> {
    let spec = match truth {
        RegressionTruth::A => ScenarioSpec::ScenarioA { n },
        RegressionTruth::B => ScenarioSpec::ScenarioB { n },
    };
    let SimulatedData::Regression(sim) = spec.simulate(seed)? else {
        unreachable!("regression scenario")
    };
    let mut run = run.clone();
    if run.kernel.is_none() {
        let (lo, hi) = truth.covariate_domain();
        let basis = BasisSpec::natural_spline_quantile_knots(&sim.x, run.ddp.spline_df, lo, hi)?;
        run.kernel = Some(CorrelationKernel::FeatureMap { basis });
    }
    let cfg = run.mixture(&sim.x, seed)?;
    let chain = run_mixture_chain(&cfg, &RegressionDataset::new(sim.x.clone(), sim.y.clone())?)?;
    let (xs, ys) = truth.default_grids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = posterior_mean_density(&chain, &cfg, &sim.x, &xs, &ys, &mut rng)?;
    let mean = conditional_mean(&chain, &cfg, &sim.x, &xs, &mut rng)?.iter().map(|m| m.mean).collect();
    let estimate = GridEstimate { density, mean };
    let (d, r) = density_and_regression_errors(&estimate, &GridEstimate::truth(truth, &xs, &ys), &ys)?;
    Ok(vec![
        ("density_error", d),
        ("regression_error", r),
        ("sampler_seconds", chain.sampler_seconds),
    ])
}

/// Replicate r uses seed `--seed + r` for both the data and the chain.
pub fn replicate(
    experiment: Experiment,
    replicates: usize,
    n: Option<usize>,
    threads: Option<usize>,
    common: &Common,
) -> Result<(), CliError> {
    if replicates == 0 {
        return Err(CliError::Usage("--replicates must be positive".into()));
    }
    let run = common.run_config()?;
    let job = |r: usize| -> Result<Metrics, CliError> {
        let seed = common.seed.wrapping_add(r as u64);
        match experiment {
            Experiment::Cosine600 => cosine_replicate(&run, n.unwrap_or(600), seed),
            Experiment::Blocking => blocking_replicate(&run, n.unwrap_or(200), seed),
            Experiment::ScenarioA => regression_replicate(&run, RegressionTruth::A, n.unwrap_or(500), seed),
            Experiment::ScenarioB => regression_replicate(&run, RegressionTruth::B, n.unwrap_or(500), seed),
        }
    };
    let workers = threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |v| v.get()))
        .clamp(1, replicates);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Metrics, CliError>>>> = Mutex::new((0..replicates).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= replicates {
                    break;
                }
                let m = job(r);
                results.lock().expect("no worker panicked")[r] = Some(m);
            });
        }
    });
    let metrics = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|m| m.expect("every replicate ran"))
        .collect::<Result<Vec<_>, _>>()?;

    let names: Vec<&str> = metrics[0].iter().map(|(k, _)| *k).collect();
    let out = common.out_dir()?;
    let mut cols = vec!["replicate"];
    cols.extend(&names);
    write_csv(
        &out.join("replicates.csv"),
        &header(&cols),
        metrics.iter().enumerate().map(|(r, m)| {
            let mut row = vec![r as f64];
            row.extend(m.iter().map(|(_, v)| *v));
            row
        }),
    )?;
    let summary: Vec<(f64, f64)> = (0..names.len())
        .map(|k| replicate_summary(&metrics.iter().map(|m| m[k].1).collect::<Vec<_>>()))
        .collect();
    let mut w = csv::Writer::from_path(out.join("summary.csv")).map_err(|e| CliError::Data(e.to_string()))?;
    w.write_record(["metric", "mean", "mc_se"]).map_err(|e| CliError::Data(e.to_string()))?;
    for (name, (m, se)) in names.iter().zip(&summary) {
        println!("{name}: {m:.4} ({se:.4})");
        w.write_record([name.to_string(), m.to_string(), se.to_string()])
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

use std::path::Path;

use lbp::binary_regression::{predict_probabilities, run_chain, BinaryDataset, BinaryRegressionConfig, ChainOutput, PointSummary};
use lbp::ddp::{conditional_cdf, conditional_mean, posterior_mean_density, run_mixture_chain, MixtureChainOutput, MixtureConfig, RegressionDataset};
use lbp::harness::{diagnose_binary_chain, ess_multivariate, ess_univariate, linspace, DiagnosticsReport, Standardizer};
use lbp::special::logistic;
use lbp::Points;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{covariate_header, header, read_binary, read_json, read_points, read_regression, write_csv, write_json};
use crate::{CliError, Common};

/// Centering and scaling applied to both variables before a mixture fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x: Standardizer,
    pub y: Standardizer,
}

impl Standardization {
    fn identity() -> Self {
        let id = Standardizer { center: 0.0, scale: 1.0 };
        Standardization { x: id, y: id }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fit {
    Binary {
        config: BinaryRegressionConfig,
        train: Points,
        chain: ChainOutput,
    },
    Mixture {
        config: MixtureConfig,
        /// Training covariates in fitting units.
        train_x: Vec<f64>,
        standardization: Option<Standardization>,
        chain: MixtureChainOutput,
    },
}

fn summary_row(mut row: Vec<f64>, s: &PointSummary) -> Vec<f64> {
    row.extend([s.mean, s.lower, s.upper]);
    row
}

pub fn fit_binary(path: &Path, common: &Common) -> Result<(), CliError> {
    let cfg = common.run_config()?.binary(common.seed)?;
    let (points, z) = read_binary(path)?;
    let data = BinaryDataset::new(points.clone(), z.clone())?;
    let chain = run_chain(&cfg, &data)?;
    let out = common.out_dir()?;

    let mut names = vec!["iteration", "lambda"];
    let with_range = chain.records[0].range.is_some() && cfg.range_grid.is_some();
    let with_shape = chain.records[0].shape.is_some();
    if with_range {
        names.push("range");
    }
    if with_shape {
        names.extend(["a", "b"]);
    }
    let draws = chain.records.iter().enumerate().map(|(i, r)| {
        let mut row = vec![(cfg.burn_in + i) as f64, r.lambda];
        if with_range {
            row.push(r.range.unwrap_or(f64::NAN));
        }
        if let Some(s) = r.shape.filter(|_| with_shape) {
            row.extend([s.a, s.b]);
        }
        row
    });
    write_csv(&out.join("draws.csv"), &header(&names), draws)?;

    let mut fitted_header = covariate_header(points.dim());
    fitted_header.extend(header(&["z", "mean", "lower", "upper"]));
    let fitted = (0..points.len()).map(|i| {
        let mut draws: Vec<f64> = chain.records.iter().map(|r| logistic(r.eta[i])).collect();
        let mut row = points.point(i).to_vec();
        row.push(z[i] as f64);
        summary_row(row, &PointSummary::from_draws(&mut draws))
    });
    write_csv(&out.join("fitted.csv"), &fitted_header, fitted)?;

    println!(
        "{} retained draws; λ acceptance {:.3}; sampler {:.2}s",
        chain.records.len(),
        chain.lambda_moves.rate(),
        chain.sampler_seconds
    );
    write_json(
        &out.join("fit.json"),
        &Fit::Binary {
            config: cfg,
            train: points,
            chain,
        },
    )
}

pub fn fit_ddp(path: &Path, common: &Common) -> Result<(), CliError> {
    let run = common.run_config()?;
    let (x_raw, y_raw) = read_regression(path)?;
    let st = if run.ddp.standardize {
        Some(Standardization {
            x: Standardizer::fit(&x_raw)?,
            y: Standardizer::fit(&y_raw)?,
        })
    } else {
        None
    };
    let t = st.unwrap_or_else(Standardization::identity);
    let x: Vec<f64> = x_raw.iter().map(|&v| t.x.apply(v)).collect();
    let y: Vec<f64> = y_raw.iter().map(|&v| t.y.apply(v)).collect();
    let cfg = run.mixture(&x, common.seed)?;
    let data = RegressionDataset::new(x.clone(), y.clone())?;
    let chain = run_mixture_chain(&cfg, &data)?;
    let out = common.out_dir()?;

    let levels = cfg.spec.truncation - 1;
    let mut names = vec!["iteration".to_string(), "occupied".to_string()];
    names.extend((1..=levels).map(|h| format!("lambda_{h}")));
    let draws = chain.records.iter().enumerate().map(|(i, r)| {
        let mut row = vec![(cfg.burn_in + i) as f64, chain.occupied[cfg.burn_in + i] as f64];
        row.extend(r.levels.iter().map(|l| l.lambda()));
        row
    });
    write_csv(&out.join("draws.csv"), &names, draws)?;

    let span = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    let (xl, xu) = span(&x);
    let (yl, yu) = span(&y);
    let pad = 0.1 * (yu - yl);
    let xs = linspace(xl, xu, run.ddp.grid_x.max(1));
    let ys = linspace(yl - pad, yu + pad, run.ddp.grid_y.max(2));
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);

    let means = conditional_mean(&chain, &cfg, &x, &xs, &mut rng)?;
    let rows = xs.iter().zip(&means).map(|(&xv, m)| {
        vec![t.x.invert(xv), t.y.invert(m.mean), t.y.invert(m.lower), t.y.invert(m.upper)]
    });
    write_csv(&out.join("conditional_mean.csv"), &header(&["x", "mean", "lower", "upper"]), rows)?;

    let dens = posterior_mean_density(&chain, &cfg, &x, &xs, &ys, &mut rng)?;
    let rows = xs.iter().zip(&dens).flat_map(|(&xv, row)| {
        ys.iter()
            .zip(row)
            .map(move |(&yv, &d)| vec![t.x.invert(xv), t.y.invert(yv), d / t.y.scale])
    });
    write_csv(&out.join("density.csv"), &header(&["x", "y", "density"]), rows)?;

    if let Some(s) = &st {
        write_json(&out.join("standardization.json"), s)?;
    }
    println!(
        "{} retained draws; mean occupied components {:.2}; sampler {:.2}s",
        chain.records.len(),
        chain.occupied[cfg.burn_in..].iter().sum::<usize>() as f64 / chain.records.len() as f64,
        chain.sampler_seconds
    );
    for w in &chain.warnings {
        eprintln!("warning: {w}");
    }
    write_json(
        &out.join("fit.json"),
        &Fit::Mixture {
            config: cfg,
            train_x: x,
            standardization: st,
            chain,
        },
    )
}

pub fn predict(fit_path: &Path, points_path: &Path, threshold: Option<f64>, common: &Common) -> Result<(), CliError> {
    let fit: Fit = read_json(fit_path)?;
    let points = read_points(points_path)?;
    let out = common.out_dir()?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let target = out.join("predictions.csv");
    match fit {
        Fit::Binary { config, train, chain } => {
            if points.dim() != train.dim() {
                return Err(CliError::Data(format!(
                    "{}: points have {} coordinates, the fit has {}",
                    points_path.display(),
                    points.dim(),
                    train.dim()
                )));
            }
            let summaries = predict_probabilities(&chain, &config, &train, &points, &mut rng)?;
            let mut names = covariate_header(points.dim());
            names.extend(header(&["mean", "lower", "upper"]));
            let rows = summaries.iter().enumerate().map(|(i, s)| summary_row(points.point(i).to_vec(), s));
            write_csv(&target, &names, rows)
        }
        Fit::Mixture {
            config,
            train_x,
            standardization,
            chain,
        } => {
            if points.dim() != 1 {
                return Err(CliError::Data(format!("{}: mixture fits take one covariate column", points_path.display())));
            }
            let t = standardization.unwrap_or_else(Standardization::identity);
            let raw: Vec<f64> = points.coords().to_vec();
            let xs: Vec<f64> = raw.iter().map(|&v| t.x.apply(v)).collect();
            let means = conditional_mean(&chain, &config, &train_x, &xs, &mut rng)?;
            let cdf = match threshold {
                Some(v) => Some(conditional_cdf(&chain, &config, &train_x, &xs, t.y.apply(v), &mut rng)?),
                None => None,
            };
            let mut names = header(&["x", "mean", "lower", "upper"]);
            if cdf.is_some() {
                names.extend(header(&["cdf", "cdf_lower", "cdf_upper"]));
            }
            let rows = raw.iter().zip(&means).enumerate().map(|(i, (&xv, m))| {
                let mut row = vec![xv, t.y.invert(m.mean), t.y.invert(m.lower), t.y.invert(m.upper)];
                if let Some(c) = &cdf {
                    row.extend([c[i].mean, c[i].lower, c[i].upper]);
                }
                row
            });
            write_csv(&target, &names, rows)
        }
    }
}

fn diagnose_mixture(chain: &MixtureChainOutput, burn_in: usize) -> Result<DiagnosticsReport, CliError> {
    let mut report = DiagnosticsReport {
        sampler_seconds: chain.sampler_seconds,
        warnings: chain.warnings.clone(),
        ..Default::default()
    };
    let levels = chain.records.first().map_or(0, |r| r.levels.len());
    let mut traces = Vec::with_capacity(levels);
    for h in 0..levels {
        let trace = chain.lambda_trace(h);
        let e = ess_univariate(&trace)?;
        report.ess.push((format!("lambda_{}", h + 1), e.value));
        traces.push(trace);
    }
    let occupied: Vec<f64> = chain.occupied[burn_in..].iter().map(|&v| v as f64).collect();
    let e = ess_univariate(&occupied)?;
    if e.degenerate {
        report.warnings.push("occupancy trace is constant".into());
    }
    report.ess.push(("occupied".into(), e.value));
    report.acceptance_rates.push(("lambda".into(), chain.lambda_moves.rate()));

    let n = chain.records.len();
    let batches = n / ((n as f64).sqrt().floor() as usize).max(1);
    let p = levels.min(batches.saturating_sub(1));
    if p >= 1 {
        let m = DMatrix::from_fn(n, p, |i, j| traces[j][i]);
        match ess_multivariate(&m) {
            Ok(v) => report.multivariate_ess = Some(v),
            Err(e) => report.warnings.push(format!("multivariate ESS unavailable: {e}")),
        }
    }
    Ok(report)
}

pub fn diagnose(fit_path: &Path, common: &Common) -> Result<(), CliError> {
    let fit: Fit = read_json(fit_path)?;
    let report = match &fit {
        Fit::Binary { chain, .. } => diagnose_binary_chain(chain)?,
        Fit::Mixture { chain, config, .. } => diagnose_mixture(chain, config.burn_in)?,
    };
    for (name, v) in &report.ess {
        println!("ESS {name}: {v:.1}");
    }
    if let Some(v) = report.multivariate_ess {
        println!("multivariate ESS: {v:.1}");
    }
    for (name, v) in &report.acceptance_rates {
        println!("acceptance {name}: {v:.3}");
    }
    println!("sampler seconds: {:.3}", report.sampler_seconds);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&common.out_dir()?.join("report.json"), &report)
}

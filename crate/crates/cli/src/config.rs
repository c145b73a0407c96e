//! The TOML run configuration. `default.toml` documents every key; the
//! `Default` impls below must agree with it.

use std::path::Path;

use lbp::binary_regression::{BinaryRegressionConfig, LambdaUpdate, RangeGrid, SamplerStrategy};
use lbp::ddp::{AtomPrior, MixtureConfig, StickBreakingSpec};
use lbp::latent::Representation;
use lbp::{BasisSpec, CorrelationKernel, ShapePair};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub shape: ShapeSection,
    pub kernel: Option<CorrelationKernel>,
    pub sampler: SamplerSection,
    pub ddp: DdpSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeSection {
    pub a: f64,
    pub b: f64,
}

impl Default for ShapeSection {
    fn default() -> Self {
        ShapeSection { a: 1.0, b: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub blocked: bool,
    pub adapted: bool,
    pub particles: usize,
    pub low_rank: bool,
    pub polya_truncation: usize,
    pub range_grid: Vec<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            iterations: 2000,
            burn_in: 1000,
            blocked: true,
            adapted: true,
            particles: 0,
            low_rank: false,
            polya_truncation: lbp::polya::DEFAULT_TRUNCATION,
            range_grid: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpSection {
    pub truncation: usize,
    pub b: f64,
    pub discount: f64,
    pub spline_df: usize,
    pub beta_variance: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub standardize: bool,
    pub grid_x: usize,
    pub grid_y: usize,
}

impl Default for DdpSection {
    fn default() -> Self {
        DdpSection {
            truncation: 20,
            b: 1.0,
            discount: 0.0,
            spline_df: 6,
            beta_variance: 100.0,
            a_tau: 1.0,
            b_tau: 1.0,
            standardize: false,
            grid_x: 50,
            grid_y: 200,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn shape(&self) -> Result<ShapePair, CliError> {
        ShapePair::new(self.shape.a, self.shape.b).map_err(usage)
    }

    pub fn binary(&self, seed: u64) -> Result<BinaryRegressionConfig, CliError> {
        let kernel = self.kernel.clone().unwrap_or(CorrelationKernel::Matern {
            range: 0.3,
            smoothness: 1.5,
        });
        let s = &self.sampler;
        let mut cfg = BinaryRegressionConfig::new(self.shape()?, kernel, s.iterations, s.burn_in, seed);
        cfg.strategy = SamplerStrategy {
            blocked: s.blocked,
            adapted: s.adapted,
            lambda_update: match s.particles {
                0 => LambdaUpdate::MetropolisHastings,
                particles => LambdaUpdate::ParticleGibbs { particles },
            },
            representation: if s.low_rank {
                Representation::LowRank
            } else {
                Representation::FullRank
            },
        };
        cfg.polya_truncation = s.polya_truncation;
        if !s.range_grid.is_empty() {
            cfg.range_grid = Some(RangeGrid::uniform(s.range_grid.clone()).map_err(usage)?);
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    /// `x` supplies the spline knots when no kernel is configured.
    pub fn mixture(&self, x: &[f64], seed: u64) -> Result<MixtureConfig, CliError> {
        let d = &self.ddp;
        let kernel = match &self.kernel {
            Some(k) => k.clone(),
            None => {
                let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                let basis = BasisSpec::natural_spline_quantile_knots(x, d.spline_df, lo, hi).map_err(usage)?;
                CorrelationKernel::FeatureMap { basis }
            }
        };
        let spec = StickBreakingSpec::pitman_yor(d.truncation, d.b, d.discount, kernel).map_err(usage)?;
        let prior = AtomPrior::isotropic(d.beta_variance, d.a_tau, d.b_tau);
        let mut cfg = MixtureConfig::new(spec, prior, self.sampler.iterations, self.sampler.burn_in, seed);
        cfg.adapted = self.sampler.adapted;
        cfg.polya_truncation = self.sampler.polya_truncation;
        if self.sampler.low_rank {
            cfg.representation = Some(Representation::LowRank);
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

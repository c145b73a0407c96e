//! Logistic-beta distributions, logistic-beta processes and posterior
//! samplers for binary regression and dependent stick-breaking mixtures.

pub mod binary_regression;
pub mod ddp;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod latent;
pub mod linalg;
pub mod logistic_beta;
pub mod polya;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{BasisSpec, CorrelationKernel, CorrelationMatrix, Points};
pub use polya::ShapePair;

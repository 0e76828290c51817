//! Bias correction for Cox regression when covariates and censored event
//! times carry (possibly correlated) measurement error, using a validated
//! phase-two subset.
//!
//! - [`survival_core`]: weighted Cox fitting with score, information and
//!   dfbeta residuals.
//! - [`calibration`]: regression calibration (RC) and risk-set
//!   recalibration (RSRC).
//! - [`raking`]: generalized raking of design weights and the GRN / GRRC
//!   estimators.
//! - [`design_bootstrap`]: validation sampling plans and the stratified
//!   bootstrap.
//! - [`estimators`]: one entry point per estimator.
//! - [`simulation`]: data generation and Monte Carlo scenario runs.
//! - [`cli_io`]: CSV datasets, scenario files and the command layer behind
//!   the `rakecal` binary.

pub mod calibration;
pub mod cli_io;
pub mod data;
pub mod design_bootstrap;
pub mod error;
pub mod estimators;
mod linalg;
pub mod raking;
pub mod simulation;
pub mod survival_core;

pub use data::CohortData;
pub use error::{Error, Result};

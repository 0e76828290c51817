//! Data generation under the additive error model and Monte Carlo runs of
//! the simulation scenarios.

mod censoring;
mod config;
mod generate;
mod registry;
mod scenario;

pub use censoring::{default_length, tune_censoring, tune_with_subjects, TunedCensoring, TUNING_SUBJECTS};
pub use config::{CensorInterval, ErrorDistribution, Misclassification, ScenarioConfig, ValidationPlan};
pub use registry::{bundled_names, bundled_scenario};
pub use generate::{copula_correlation, generate_cohort, ErrorSampler};
pub use scenario::{
    run_replicate, run_scenario, summarize, EstimatorRow, Replicate, ReplicateValue, ScenarioResult, Z_975,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::ErrorMode;
use crate::design_bootstrap::PlanKind;
use crate::error::{Error, Result};
use crate::estimators::Estimator;

/// Phase-two plan as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationPlan {
    Srs(usize),
    Bernoulli(f64),
    CaseCohort(f64),
}

impl From<ValidationPlan> for PlanKind {
    fn from(p: ValidationPlan) -> Self {
        match p {
            ValidationPlan::Srs(m) => PlanKind::Srs(m),
            ValidationPlan::Bernoulli(p) => PlanKind::Bernoulli(p),
            ValidationPlan::CaseCohort(f) => PlanKind::CaseCohort(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorDistribution {
    Normal,
    /// The whole measurement error is zero with probability `mix_p`;
    /// otherwise `(ε, ν)` are mean-zero shifted gammas with the given shape,
    /// the configured variances and the configured covariance.
    GammaMixture { mix_p: f64, shape: f64 },
}

/// Uniform censoring on `[lower, lower + length]`; an infinite `lower`
/// means no censoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensorInterval {
    pub lower: f64,
    pub length: f64,
}

impl CensorInterval {
    pub fn none() -> Self {
        Self {
            lower: f64::INFINITY,
            length: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.lower.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub sensitivity: f64,
    pub specificity: f64,
}

fn default_lambda0() -> f64 {
    0.1
}
fn default_rho() -> f64 {
    0.5
}
fn default_n() -> usize {
    2000
}
fn default_validation() -> ValidationPlan {
    ValidationPlan::Srs(200)
}
fn default_error_dist() -> ErrorDistribution {
    ErrorDistribution::Normal
}
fn default_rsrc_bootstrap() -> usize {
    100
}
fn default_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

/// One simulation setting. Serialized as TOML in the scenario registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_validation")]
    pub validation: ValidationPlan,
    pub beta_x: f64,
    pub beta_z: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    #[serde(default = "default_rho")]
    pub rho_xz: f64,
    pub censor_target: f64,
    pub censor_interval: CensorInterval,
    #[serde(default = "default_error_dist")]
    pub error_dist: ErrorDistribution,
    pub sigma2_eps: f64,
    pub sigma2_nu: f64,
    pub sigma_eps_nu: f64,
    pub alpha: [f64; 3],
    pub gamma: [f64; 3],
    #[serde(default)]
    pub misclass: Option<Misclassification>,
    pub error_mode: ErrorMode,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    /// Bootstrap replicates for RC, GRRC and GRN (0 disables ASE and CP).
    #[serde(default)]
    pub bootstrap: usize,
    /// Bootstrap replicates for RSRC.
    #[serde(default = "default_rsrc_bootstrap")]
    pub rsrc_bootstrap: usize,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The shared simulation design: n = 2000, SRS validation of 200,
    /// λ0 = 0.1, ρ = 0.5, β_Z = log 2, α = (0, 0.9, -0.2) and
    /// γ = (3σ_ν, 0.2, -0.3), correlated error in both `X` and `U`.
    pub fn base(beta_x: f64, sigma2_eps: f64, sigma2_nu: f64, sigma_eps_nu: f64) -> Self {
        Self {
            name: String::new(),
            n: 2000,
            validation: ValidationPlan::Srs(200),
            beta_x,
            beta_z: 2f64.ln(),
            lambda0: 0.1,
            rho_xz: 0.5,
            censor_target: 0.25,
            censor_interval: CensorInterval::none(),
            error_dist: ErrorDistribution::Normal,
            sigma2_eps,
            sigma2_nu,
            sigma_eps_nu,
            alpha: [0.0, 0.9, -0.2],
            gamma: [3.0 * sigma2_nu.sqrt(), 0.2, -0.3],
            misclass: None,
            error_mode: ErrorMode::Both,
            estimators: default_estimators(),
            bootstrap: 0,
            rsrc_bootstrap: 100,
            reps: 500,
            seed: 1,
        }
    }

    /// Event-time error only: `X* = X`.
    pub fn outcome_only(beta_x: f64, sigma2_nu: f64) -> Self {
        Self {
            alpha: [0.0, 1.0, 0.0],
            error_mode: ErrorMode::OutcomeOnly,
            ..Self::base(beta_x, 0.0, sigma2_nu, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n = {} too small", self.n));
        }
        if self.sigma2_eps < 0.0 || self.sigma2_nu < 0.0 {
            return bad("error variances must be nonnegative".into());
        }
        let det = self.sigma2_eps * self.sigma2_nu - self.sigma_eps_nu * self.sigma_eps_nu;
        if det < -1e-12 {
            return bad("error covariance matrix is not positive semidefinite".into());
        }
        if !(-1.0 < self.rho_xz && self.rho_xz < 1.0) {
            return bad(format!("rho_xz = {} outside (-1, 1)", self.rho_xz));
        }
        if self.lambda0 <= 0.0 {
            return bad("lambda0 must be positive".into());
        }
        if let ErrorDistribution::GammaMixture { mix_p, shape } = self.error_dist {
            if !(0.0 < mix_p && mix_p < 1.0) {
                return bad(format!("mix_p = {mix_p} outside (0, 1)"));
            }
            if shape <= 0.0 {
                return bad("gamma shape must be positive".into());
            }
        }
        if let Some(m) = self.misclass {
            for v in [m.sensitivity, m.specificity] {
                if !(0.0 < v && v <= 1.0) {
                    return bad(format!("sensitivity/specificity {v} outside (0, 1]"));
                }
            }
        }
        if !self.censor_interval.is_none() && (self.censor_interval.lower < 0.0 || self.censor_interval.length < 0.0) {
            return bad("censoring interval must be nonnegative".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators requested".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }
}

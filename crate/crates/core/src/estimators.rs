//! One entry point for every estimator, shared by the simulation harness,
//! the bootstrap and the command line.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::calibration::{rc_fit, rsrc_fit, ErrorModelSpec, RsrcOptions, Weighting};
use crate::data::CohortData;
use crate::design_bootstrap::{stratified_bootstrap, BootstrapResult};
use crate::error::{Error, Result};
use crate::raking::{grn_estimate, grrc_estimate, ht_estimate, ht_model_std_errors, RakingOptions, TwoPhaseDesign};
use crate::survival_core::{fit_cox, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Full-cohort fit on the validated values (simulation only).
    True,
    /// Phase-one fit on the error-prone values.
    Naive,
    /// Validated subset weighted by `1/π` (the complete-case fit under SRS).
    #[serde(alias = "ht")]
    Complete,
    Rc,
    Rsrc,
    Grrc,
    Grn,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::True,
        Estimator::Rc,
        Estimator::Rsrc,
        Estimator::Grrc,
        Estimator::Grn,
        Estimator::Naive,
        Estimator::Complete,
    ];

    /// Estimators whose standard error comes from the bootstrap.
    pub fn needs_bootstrap_se(self) -> bool {
        matches!(self, Estimator::Rc | Estimator::Rsrc | Estimator::Grrc | Estimator::Grn)
    }

    pub fn label(self) -> &'static str {
        match self {
            Estimator::True => "True",
            Estimator::Naive => "Naive",
            Estimator::Complete => "Complete",
            Estimator::Rc => "RC",
            Estimator::Rsrc => "RSRC",
            Estimator::Grrc => "GRRC",
            Estimator::Grn => "GRN",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "true" => Ok(Estimator::True),
            "naive" => Ok(Estimator::Naive),
            "complete" | "ht" => Ok(Estimator::Complete),
            "rc" => Ok(Estimator::Rc),
            "rsrc" => Ok(Estimator::Rsrc),
            "grrc" => Ok(Estimator::Grrc),
            "grn" => Ok(Estimator::Grn),
            other => Err(Error::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    pub spec: ErrorModelSpec,
    /// Calibration weighting; `None` picks IPW exactly when the design's
    /// selection probabilities vary.
    pub weighting: Option<Weighting>,
    pub rsrc_grid: Vec<f64>,
    pub rsrc_recalibrate_omega: bool,
    pub raking: RakingOptions,
}

impl EstimatorSettings {
    pub fn new(spec: ErrorModelSpec) -> Self {
        Self {
            spec,
            weighting: None,
            rsrc_grid: RsrcOptions::deciles(Weighting::Unweighted).grid,
            rsrc_recalibrate_omega: true,
            raking: RakingOptions::default(),
        }
    }

    fn weighting_for(&self, design: &TwoPhaseDesign) -> Weighting {
        self.weighting.unwrap_or_else(|| design.default_weighting())
    }
}

/// Point estimate and, where the estimator has one, its model-based SE.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub beta: DVector<f64>,
    pub model_se: Option<DVector<f64>>,
}

/// Runs one estimator on a cohort and its two-phase design.
pub fn estimate(
    estimator: Estimator,
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    settings: &EstimatorSettings,
) -> Result<Estimate> {
    let opts = FitOptions::default();
    let weighting = settings.weighting_for(design);
    match estimator {
        Estimator::True => {
            let fit = fit_cox(&cohort.all_true_records()?, &opts)?.require_converged()?;
            let se = fit.std_errors()?;
            Ok(Estimate {
                beta: fit.beta,
                model_se: Some(se),
            })
        }
        Estimator::Naive => {
            let fit = fit_cox(&cohort.naive_records(), &opts)?.require_converged()?;
            let se = fit.std_errors()?;
            Ok(Estimate {
                beta: fit.beta,
                model_se: Some(se),
            })
        }
        Estimator::Complete => {
            let fit = ht_estimate(cohort, design)?;
            let se = ht_model_std_errors(&fit, design)?;
            Ok(Estimate {
                beta: fit.beta,
                model_se: Some(se),
            })
        }
        Estimator::Rc => {
            let (fit, _) = rc_fit(cohort, design, &settings.spec, weighting)?;
            Ok(Estimate {
                beta: fit.beta,
                model_se: None,
            })
        }
        Estimator::Rsrc => {
            let options = RsrcOptions {
                grid: settings.rsrc_grid.clone(),
                recalibrate_omega: settings.rsrc_recalibrate_omega,
                weighting,
            };
            let fit = rsrc_fit(cohort, design, &settings.spec, &options)?;
            Ok(Estimate {
                beta: fit.fit.beta,
                model_se: None,
            })
        }
        Estimator::Grrc => {
            let (fit, _) = grrc_estimate(cohort, design, &settings.spec, weighting, &settings.raking)?;
            Ok(Estimate {
                beta: fit.beta,
                model_se: None,
            })
        }
        Estimator::Grn => {
            let (fit, _) = grn_estimate(cohort, design, &settings.raking)?;
            Ok(Estimate {
                beta: fit.beta,
                model_se: None,
            })
        }
    }
}

/// Stratified-bootstrap distribution of one estimator.
pub fn bootstrap_estimator(
    estimator: Estimator,
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    settings: &EstimatorSettings,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    stratified_bootstrap(
        cohort,
        design,
        |c, d| estimate(estimator, c, d, settings).map(|e| e.beta),
        b,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_case_insensitively() {
        for e in Estimator::ALL {
            assert_eq!(e.label().parse::<Estimator>().unwrap(), e);
        }
        assert_eq!("HT".parse::<Estimator>().unwrap(), Estimator::Complete);
        assert!("ols".parse::<Estimator>().is_err());
    }

    #[test]
    fn bootstrap_se_split() {
        let boot: Vec<_> = Estimator::ALL.into_iter().filter(|e| e.needs_bootstrap_se()).collect();
        assert_eq!(boot, [Estimator::Rc, Estimator::Rsrc, Estimator::Grrc, Estimator::Grn]);
    }
}

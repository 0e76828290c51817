use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::generate::{generate_with_sampler, ErrorSampler};
use crate::calibration::ErrorModelSpec;
use crate::design_bootstrap::{draw_with_rng, stream_rng};
use crate::error::{Error, Result};
use crate::estimators::{bootstrap_estimator, estimate, Estimator, EstimatorSettings};

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Estimate of `β_X` and its standard error from one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateValue {
    pub beta: f64,
    pub se: Option<f64>,
}

/// Per-replicate output: one entry per requested estimator, `None` where
/// that estimator failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub values: Vec<Option<ReplicateValue>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub estimator: Estimator,
    /// `100·(mean − β)/β`; `None` when `β = 0`.
    pub pct_bias: Option<f64>,
    pub ase: Option<f64>,
    pub ese: f64,
    pub mse: f64,
    pub cp: Option<f64>,
    /// Rejection rate of `H0: β = 0` at level 0.05, reported when `β = 0`.
    pub type1: Option<f64>,
    /// The same rejection rate when `β ≠ 0`.
    pub power: Option<f64>,
    pub mean: f64,
    pub reps_used: usize,
    pub reps_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub beta_x: f64,
    pub rows: Vec<EstimatorRow>,
    pub reps_requested: usize,
    pub runtime: Duration,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Table metrics for one estimator from its replicate values.
///
/// ESE is the standard deviation with divisor `R`, so that
/// `ESE² + (mean − β)² = MSE` holds exactly up to rounding.
pub fn summarize(estimator: Estimator, beta: f64, values: &[ReplicateValue], failed: usize) -> EstimatorRow {
    let r = values.len() as f64;
    if values.is_empty() {
        return EstimatorRow {
            estimator,
            pct_bias: None,
            ase: None,
            ese: f64::NAN,
            mse: f64::NAN,
            cp: None,
            type1: None,
            power: None,
            mean: f64::NAN,
            reps_used: 0,
            reps_failed: failed,
        };
    }
    let mean = compensated_sum(values.iter().map(|v| v.beta)) / r;
    let ese = (compensated_sum(values.iter().map(|v| (v.beta - mean).powi(2))) / r).sqrt();
    let mse = compensated_sum(values.iter().map(|v| (v.beta - beta).powi(2))) / r;
    let with_se: Vec<(f64, f64)> = values.iter().filter_map(|v| v.se.map(|s| (v.beta, s))).collect();
    let (ase, cp, reject) = if with_se.len() == values.len() {
        let ase = compensated_sum(with_se.iter().map(|p| p.1)) / r;
        let cover = with_se.iter().filter(|(b, s)| (b - beta).abs() <= Z_975 * s).count();
        let reject = with_se.iter().filter(|(b, s)| b.abs() > Z_975 * s).count();
        (Some(ase), Some(cover as f64 / r), Some(reject as f64 / r))
    } else {
        (None, None, None)
    };
    let null = beta == 0.0;
    EstimatorRow {
        estimator,
        pct_bias: (!null).then(|| 100.0 * (mean - beta) / beta),
        ase,
        ese,
        mse,
        cp,
        type1: if null { reject } else { None },
        power: if null { None } else { reject },
        mean,
        reps_used: values.len(),
        reps_failed: failed,
    }
}

fn settings_for(config: &ScenarioConfig) -> Result<EstimatorSettings> {
    Ok(EstimatorSettings::new(ErrorModelSpec::for_mode(config.error_mode)))
}

/// Runs replicate `index`: generate, draw the validation subset, fit each
/// estimator and, if requested, bootstrap it.
pub fn run_replicate(config: &ScenarioConfig, sampler: &ErrorSampler, index: u64) -> Result<Replicate> {
    let settings = settings_for(config)?;
    let mut rng = stream_rng(config.seed, index);
    let cohort = generate_with_sampler(config, sampler, &mut rng)?;
    let design = draw_with_rng(&cohort, &config.validation.into(), &mut rng)?;
    let boot_seed: u64 = rng.random();
    let values = config
        .estimators
        .iter()
        .map(|&est| {
            let point = estimate(est, &cohort, &design, &settings).ok()?;
            let beta = point.beta[0];
            let se = if est.needs_bootstrap_se() {
                let b = if est == Estimator::Rsrc {
                    config.rsrc_bootstrap
                } else {
                    config.bootstrap
                };
                if config.bootstrap == 0 || b == 0 {
                    None
                } else {
                    Some(bootstrap_estimator(est, &cohort, &design, &settings, b, boot_seed).ok()?.se[0])
                }
            } else {
                point.model_se.map(|s| s[0])
            };
            Some(ReplicateValue { beta, se })
        })
        .collect();
    Ok(Replicate { values })
}

/// Monte Carlo run of one scenario.
///
/// Replicates run in parallel; each draws from its own stream of
/// `config.seed`, so the result does not depend on the thread count.
/// Failed replicates are dropped and counted per estimator.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    config.validate()?;
    if config.reps == 0 {
        return Err(Error::InvalidConfig("reps must be positive".into()));
    }
    settings_for(config)?;
    let start = Instant::now();
    let sampler = ErrorSampler::new(config)?;
    let reps: Vec<Option<Replicate>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|i| run_replicate(config, &sampler, i).ok())
        .collect();
    let rows = config
        .estimators
        .iter()
        .enumerate()
        .map(|(k, &est)| {
            let values: Vec<ReplicateValue> = reps.iter().flatten().filter_map(|r| r.values[k]).collect();
            let failed = config.reps - values.len();
            summarize(est, config.beta_x, &values, failed)
        })
        .collect();
    Ok(ScenarioResult {
        name: config.name.clone(),
        beta_x: config.beta_x,
        rows,
        reps_requested: config.reps,
        runtime: start.elapsed(),
    })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        _ => String::new(),
    }
}

impl ScenarioResult {
    pub fn row(&self, estimator: Estimator) -> Option<&EstimatorRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }

    /// Machine-readable table. Runtime is left out so reruns are
    /// byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,estimator,pct_bias,ase,ese,mse,cp,type1,power,mean,reps_used,reps_failed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.name,
                r.estimator.label(),
                cell(r.pct_bias, 6),
                cell(r.ase, 6),
                cell(Some(r.ese), 6),
                cell(Some(r.mse), 6),
                cell(r.cp, 3),
                cell(r.type1, 3),
                cell(r.power, 3),
                cell(Some(r.mean), 6),
                r.reps_used,
                r.reps_failed
            );
        }
        out
    }

    /// Aligned text in the usual column order; the first column is the
    /// type-1 error rate instead of %bias when `β_X = 0`.
    pub fn to_table(&self) -> String {
        let null = self.beta_x == 0.0;
        let first = if null { "Type1" } else { "%Bias" };
        let mut out = String::new();
        let _ = writeln!(out, "{} (beta_x = {:.4}, reps = {})", self.name, self.beta_x, self.reps_requested);
        let _ = writeln!(
            out,
            "{:<10}{:>10}{:>8}{:>8}{:>8}{:>7}{:>7}{:>7}",
            "Method", first, "ASE", "ESE", "MSE", "CP", "Power", "Used"
        );
        for r in &self.rows {
            let lead = if null { cell(r.type1, 3) } else { cell(r.pct_bias, 3) };
            let _ = writeln!(
                out,
                "{:<10}{:>10}{:>8}{:>8}{:>8}{:>7}{:>7}{:>7}",
                r.estimator.label(),
                lead,
                cell(r.ase, 3),
                cell(Some(r.ese), 3),
                cell(Some(r.mse), 3),
                cell(r.cp, 3),
                cell(r.power, 3),
                r.reps_used
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(b: &[f64], se: Option<f64>) -> Vec<ReplicateValue> {
        b.iter().map(|&beta| ReplicateValue { beta, se }).collect()
    }

    #[test]
    fn mse_decomposes() {
        let v = vals(&[0.31, 0.45, 0.38, 0.52, 0.29], Some(0.05));
        let r = summarize(Estimator::Rc, 0.4, &v, 0);
        let bias = r.mean - 0.4;
        assert!((r.ese * r.ese + bias * bias - r.mse).abs() < 1e-12);
        assert!(r.power.is_some() && r.type1.is_none());
    }

    #[test]
    fn null_reports_type1_not_bias() {
        let v = vals(&[0.5, -0.01, 0.02], Some(0.1));
        let r = summarize(Estimator::Naive, 0.0, &v, 1);
        assert!(r.pct_bias.is_none());
        assert!((r.type1.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.reps_failed, 1);
    }

    #[test]
    fn missing_se_blanks_ase_and_cp() {
        let r = summarize(Estimator::Grn, 0.4, &vals(&[0.4, 0.41], None), 0);
        assert!(r.ase.is_none() && r.cp.is_none());
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let s = compensated_sum([1e16, 1.0, -1e16]);
        assert_eq!(s, 1.0);
    }
}

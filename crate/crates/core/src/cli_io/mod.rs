//! File formats and the commands behind the `rakecal` binary.
//!
//! Exit codes: 0 on success, 2 for schema, parse, configuration or I/O
//! problems with the inputs, 3 when estimation itself fails.

mod dataset;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use dataset::{load_dataset, read_dataset, write_dataset, AnalysisDataset};

use crate::calibration::{ErrorMode, ErrorModelSpec, OmegaRegressor, Weighting};
use crate::design_bootstrap::BootstrapResult;
use crate::estimators::{bootstrap_estimator, estimate, Estimator, EstimatorSettings};
use crate::simulation::{bundled_scenario, run_scenario, tune_censoring, ScenarioConfig, ScenarioResult, TunedCensoring};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at line {line}, column '{column}': {message}")]
    Parse { line: u64, column: String, message: String },
    #[error("dataset has a header but no rows")]
    EmptyDataset,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("estimation failed: {0}")]
    Estimation(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Estimation(_) => 3,
            _ => 2,
        }
    }
}

/// Environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "RAKECAL_THREADS";

pub fn version_string() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Everything that determines a run's output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    /// SHA-256 of each input's bytes, so edits to inputs change the hash.
    pub input_digests: Vec<String>,
    pub estimators: Vec<String>,
    pub error_model: String,
    pub bootstrap: usize,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest always serializes")
    }

    /// SHA-256 of the manifest's TOML form, as lowercase hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    fn header(&self) -> String {
        format!("# manifest_sha256={} seed={} version={}\n", self.hash(), self.seed, self.version)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn digest_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRequest {
    pub estimator: Estimator,
    pub mode: ErrorMode,
    /// Defaults to the regressor that goes with `mode`.
    pub omega_regressor: Option<OmegaRegressor>,
    /// Defaults to IPW exactly when selection probabilities vary.
    pub weighting: Option<Weighting>,
    /// Bootstrap replicates; 0 for none.
    pub bootstrap: usize,
    pub seed: u64,
}

impl FitRequest {
    pub fn new(estimator: Estimator, mode: ErrorMode) -> Self {
        Self {
            estimator,
            mode,
            omega_regressor: None,
            weighting: None,
            bootstrap: 0,
            seed: 1,
        }
    }

    pub fn settings(&self) -> Result<EstimatorSettings, CliError> {
        let spec = match self.omega_regressor {
            Some(r) => ErrorModelSpec::new(self.mode, r).map_err(|e| CliError::Config(e.to_string()))?,
            None => ErrorModelSpec::for_mode(self.mode),
        };
        let mut settings = EstimatorSettings::new(spec);
        settings.weighting = self.weighting;
        Ok(settings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub term: String,
    pub beta: f64,
    pub se: Option<f64>,
    /// "model", "bootstrap" or empty.
    pub se_source: &'static str,
    /// 95% interval for the log hazard ratio.
    pub ci: Option<(f64, f64)>,
}

impl CoefficientRow {
    pub fn hazard_ratio(&self) -> f64 {
        self.beta.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub estimator: Estimator,
    pub rows: Vec<CoefficientRow>,
    pub bootstrap: Option<BootstrapResult>,
}

/// Fits one estimator to a loaded dataset; the library half of `fit`.
///
/// With bootstrap replicates the SE is the bootstrap SE and the interval
/// is the percentile interval; otherwise model-based estimators report
/// their model SE with a normal interval.
pub fn fit_dataset(data: &AnalysisDataset, request: &FitRequest) -> Result<FitReport, CliError> {
    let settings = request.settings()?;
    let point = estimate(request.estimator, &data.cohort, &data.design, &settings)?;
    let boot = if request.bootstrap > 0 {
        Some(bootstrap_estimator(
            request.estimator,
            &data.cohort,
            &data.design,
            &settings,
            request.bootstrap,
            request.seed,
        )?)
    } else {
        None
    };
    const Z: f64 = crate::simulation::Z_975;
    let names = data.x_names.iter().chain(&data.z_names);
    let rows = names
        .enumerate()
        .map(|(k, name)| {
            let beta = point.beta[k];
            let (se, se_source, ci) = match (&boot, &point.model_se) {
                (Some(b), _) => (Some(b.se[k]), "bootstrap", Some(b.ci[k])),
                (None, Some(s)) => (Some(s[k]), "model", Some((beta - Z * s[k], beta + Z * s[k]))),
                (None, None) => (None, "", None),
            };
            CoefficientRow {
                term: name.clone(),
                beta,
                se,
                se_source,
                ci,
            }
        })
        .collect();
    Ok(FitReport {
        estimator: request.estimator,
        rows,
        bootstrap: boot,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10}")).unwrap_or_default()
}

impl FitReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,term,beta,se,se_source,hazard_ratio,hr_lower,hr_upper\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.10},{},{},{:.10},{},{}",
                self.estimator.label(),
                r.term,
                r.beta,
                opt(r.se),
                r.se_source,
                r.hazard_ratio(),
                opt(r.ci.map(|c| c.0.exp())),
                opt(r.ci.map(|c| c.1.exp()))
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} estimator\n", self.estimator.label());
        let _ = writeln!(
            out,
            "{:<12}{:>10}{:>10}{:>10}{:>18}",
            "term", "beta", "se", "HR", "95% CI (HR)"
        );
        for r in &self.rows {
            let ci = r
                .ci
                .map(|(a, b)| format!("({:.3}, {:.3})", a.exp(), b.exp()))
                .unwrap_or_default();
            let se = r.se.map(|s| format!("{s:.4}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:<12}{:>10.4}{:>10}{:>10.4}{:>18}",
                r.term,
                r.beta,
                se,
                r.hazard_ratio(),
                ci
            );
        }
        if let Some(b) = &self.bootstrap {
            let _ = writeln!(out, "bootstrap: {} of {} replicates used", b.b_effective, b.b_requested);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
}

/// `fit`: load a dataset, fit, and write `<estimator>.csv`,
/// `<estimator>.txt` and `manifest.toml` into `out_dir`.
pub fn cmd_fit(data_path: &Path, request: &FitRequest, out_dir: &Path) -> Result<RunOutput, CliError> {
    let bytes = std::fs::read(data_path).map_err(|e| CliError::Io(format!("{}: {e}", data_path.display())))?;
    let data = read_dataset(bytes.as_slice())?;
    let report = fit_dataset(&data, request)?;
    ensure_dir(out_dir)?;
    let stem = request.estimator.label().to_ascii_lowercase();
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let txt_path = out_dir.join(format!("{stem}.txt"));
    let settings = request.settings()?;
    let manifest = RunManifest {
        command: "fit".into(),
        inputs: vec![data_path.display().to_string()],
        input_digests: vec![digest_bytes(&bytes)],
        estimators: vec![request.estimator.label().into()],
        error_model: format!(
            "{:?}/{:?}/{:?}",
            settings.spec.mode(),
            settings.spec.regress_omega_on(),
            request.weighting
        ),
        bootstrap: request.bootstrap,
        seed: request.seed,
        outputs: vec![csv_path.display().to_string(), txt_path.display().to_string()],
        version: version_string(),
    };
    let header = manifest.header();
    write_file(&csv_path, &format!("{header}{}", report.to_csv()))?;
    write_file(&txt_path, &format!("{header}{}", report.to_text()))?;
    let manifest_path = out_dir.join("manifest.toml");
    write_file(&manifest_path, &format!("{header}{}", manifest.to_toml()))?;
    Ok(RunOutput {
        manifest,
        files: vec![csv_path, txt_path, manifest_path],
    })
}

/// A scenario file path, or the name of a bundled scenario.
pub fn resolve_scenario(which: &str) -> Result<ScenarioConfig, CliError> {
    let path = Path::new(which);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{which}: {e}")))?;
        ScenarioConfig::from_toml_str(&text).map_err(|e| CliError::Config(e.to_string()))
    } else {
        bundled_scenario(which).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulateOverrides {
    pub reps: Option<usize>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
}

/// `simulate`: run a scenario and write `<name>.csv`, `<name>.txt` and
/// `manifest.toml`. Reruns with the same inputs give identical files.
pub fn cmd_simulate(
    which: &str,
    overrides: &SimulateOverrides,
    out_dir: &Path,
) -> Result<(ScenarioResult, RunOutput), CliError> {
    let mut cfg = resolve_scenario(which)?;
    if let Some(r) = overrides.reps {
        cfg.reps = r;
    }
    if let Some(b) = overrides.bootstrap {
        cfg.bootstrap = b;
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if cfg.name.is_empty() {
        cfg.name = "scenario".into();
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let result = run_scenario(&cfg).map_err(|e| match e {
        crate::Error::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Estimation(other),
    })?;
    ensure_dir(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", cfg.name));
    let txt_path = out_dir.join(format!("{}.txt", cfg.name));
    let manifest = RunManifest {
        command: "simulate".into(),
        inputs: vec![which.to_string()],
        input_digests: vec![digest_bytes(cfg.to_toml_string().as_bytes())],
        estimators: cfg.estimators.iter().map(|e| e.label().to_string()).collect(),
        error_model: format!("{:?}/{:?}", cfg.error_mode, cfg.error_dist),
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
        outputs: vec![csv_path.display().to_string(), txt_path.display().to_string()],
        version: version_string(),
    };
    let header = manifest.header();
    write_file(&csv_path, &format!("{header}{}", result.to_csv()))?;
    write_file(&txt_path, &format!("{header}{}", result.to_table()))?;
    let manifest_path = out_dir.join("manifest.toml");
    write_file(&manifest_path, &format!("{header}{}", manifest.to_toml()))?;
    Ok((
        result,
        RunOutput {
            manifest,
            files: vec![csv_path, txt_path, manifest_path],
        },
    ))
}

/// `tune-censoring`: the interval for a scenario's effect size and a
/// censoring target, with the achieved rate.
pub fn cmd_tune_censoring(which: &str, target: Option<f64>, tolerance: f64) -> Result<TunedCensoring, CliError> {
    let cfg = resolve_scenario(which)?;
    let target = target.unwrap_or(cfg.censor_target);
    tune_censoring(&cfg, target, tolerance).map_err(|e| match e {
        crate::Error::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Estimation(other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::EmptyDataset.exit_code(), 2);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Estimation(crate::Error::NoEvents).exit_code(), 3);
    }

    #[test]
    fn manifest_hash_tracks_content() {
        let m = RunManifest {
            command: "fit".into(),
            inputs: vec!["a.csv".into()],
            input_digests: vec!["00".into()],
            estimators: vec!["GRN".into()],
            error_model: "Both".into(),
            bootstrap: 0,
            seed: 7,
            outputs: vec![],
            version: version_string(),
        };
        let mut m2 = m.clone();
        assert_eq!(m.hash(), m2.hash());
        m2.seed = 8;
        assert_ne!(m.hash(), m2.hash());
        assert_eq!(m.hash().len(), 64);
    }
}

//! Regression calibration for covariate error, event-time error, and
//! correlated error in both, plus the two-stage risk-set recalibration
//! (RSRC) estimator.
//!
//! Calibration models are (optionally inverse-probability weighted) least
//! squares fits on the validation subset. With plug-in sample moments the
//! conditional-mean formulas are algebraically the same regression, and the
//! QR route is better conditioned.

use nalgebra::DMatrix;

use crate::data::CohortData;
use crate::error::{Error, Result};
use crate::linalg::{intercept_design, quantile_sorted, weighted_least_squares};
use crate::raking::TwoPhaseDesign;
use crate::survival_core::{fit_cox, CoxFit, FitOptions, SurvivalRecord};

/// Which variables carry error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    CovariateOnly,
    OutcomeOnly,
    Both,
}

/// Regressor block used to predict the outcome error ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaRegressor {
    /// The true `X`. Only valid when `X` is observed for everyone, in which
    /// case the cohort's `x_star` column carries it.
    TrueX,
    ErrorProneX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErrorModelSpec {
    mode: ErrorMode,
    regress_omega_on: OmegaRegressor,
}

impl ErrorModelSpec {
    pub fn new(mode: ErrorMode, regress_omega_on: OmegaRegressor) -> Result<Self> {
        match (mode, regress_omega_on) {
            (ErrorMode::OutcomeOnly, OmegaRegressor::ErrorProneX) => Err(Error::InvalidInput(
                "outcome-only error regresses omega on the true X".into(),
            )),
            (ErrorMode::Both, OmegaRegressor::TrueX) => Err(Error::InvalidInput(
                "correlated error regresses omega on the error-prone X".into(),
            )),
            _ => Ok(Self {
                mode,
                regress_omega_on,
            }),
        }
    }

    /// The regressor that goes with each mode.
    pub fn for_mode(mode: ErrorMode) -> Self {
        let regress_omega_on = match mode {
            ErrorMode::OutcomeOnly => OmegaRegressor::TrueX,
            _ => OmegaRegressor::ErrorProneX,
        };
        Self {
            mode,
            regress_omega_on,
        }
    }

    pub fn mode(&self) -> ErrorMode {
        self.mode
    }

    pub fn regress_omega_on(&self) -> OmegaRegressor {
        self.regress_omega_on
    }

    fn calibrates_x(&self) -> bool {
        self.mode != ErrorMode::OutcomeOnly
    }

    fn calibrates_u(&self) -> bool {
        self.mode != ErrorMode::CovariateOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights `1/π_i` on validation records.
    Ipw,
}

/// Coefficients of a linear map `[1, a, z] → outputs`, stored as a
/// `(1 + dim a + dim z) × outputs` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub coefficients: DMatrix<f64>,
}

impl LinearMap {
    fn predict(&self, a: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if 1 + a.ncols() + z.ncols() != self.coefficients.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "calibration map expects {} regressors, got {}",
                self.coefficients.nrows(),
                1 + a.ncols() + z.ncols()
            )));
        }
        let rows: Vec<usize> = (0..a.nrows()).collect();
        Ok(intercept_design(a, z, &rows) * &self.coefficients)
    }

    pub fn intercept(&self) -> Vec<f64> {
        self.coefficients.row(0).iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    pub zeta_x: Option<LinearMap>,
    pub zeta_omega: Option<LinearMap>,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedCohort {
    pub x_hat: DMatrix<f64>,
    pub u_hat: Vec<f64>,
    pub event: Vec<bool>,
    /// Imputed times that fell below the positive floor before shifting.
    pub n_below_floor: usize,
    /// Amount added to every `Û` (zero unless some fell below the floor).
    pub time_shift: f64,
    pub model: CalibrationModel,
}

impl CalibratedCohort {
    pub fn records(&self, cohort: &CohortData) -> Vec<SurvivalRecord> {
        (0..self.u_hat.len())
            .map(|i| {
                let cov = self
                    .x_hat
                    .row(i)
                    .iter()
                    .chain(cohort.z.row(i).iter())
                    .copied()
                    .collect();
                SurvivalRecord::new(self.u_hat[i], self.event[i], cov)
            })
            .collect()
    }
}

fn calibration_weights(design: &TwoPhaseDesign, rows: &[usize], weighting: Weighting) -> Option<Vec<f64>> {
    match weighting {
        Weighting::Unweighted => None,
        Weighting::Ipw => Some(rows.iter().map(|&i| 1.0 / design.pi[i]).collect()),
    }
}

fn validation_rows(cohort: &CohortData, design: &TwoPhaseDesign) -> Result<Vec<usize>> {
    if design.selected.len() != cohort.len() {
        return Err(Error::DimensionMismatch("design and cohort sizes differ".into()));
    }
    let rows = design.validation_rows();
    if rows.is_empty() {
        return Err(Error::EmptyValidation);
    }
    if let Some(&i) = rows.iter().find(|&&i| !cohort.known[i]) {
        return Err(Error::InvalidInput(format!("selected subject {i} lacks validated data")));
    }
    Ok(rows)
}

fn fit_x_on_rows(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    rows: &[usize],
    weighting: Weighting,
) -> Result<LinearMap> {
    let d = intercept_design(&cohort.x_star, &cohort.z, rows);
    let y = cohort.x.select_rows(rows);
    let w = calibration_weights(design, rows, weighting);
    let coefficients = weighted_least_squares(&d, &y, w.as_deref())?;
    Ok(LinearMap { coefficients })
}

fn fit_omega_on_rows(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    rows: &[usize],
    spec: &ErrorModelSpec,
    weighting: Weighting,
) -> Result<LinearMap> {
    let regressor = match spec.regress_omega_on {
        OmegaRegressor::TrueX => &cohort.x,
        OmegaRegressor::ErrorProneX => &cohort.x_star,
    };
    let d = intercept_design(regressor, &cohort.z, rows);
    let y = DMatrix::from_iterator(rows.len(), 1, rows.iter().map(|&i| cohort.omega(i)));
    let w = calibration_weights(design, rows, weighting);
    let coefficients = weighted_least_squares(&d, &y, w.as_deref())?;
    Ok(LinearMap { coefficients })
}

/// Least-squares calibration of each `X` column on `(1, X*, Z)` over the
/// validation subset.
pub fn fit_x_calibration(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    weighting: Weighting,
) -> Result<LinearMap> {
    let rows = validation_rows(cohort, design)?;
    fit_x_on_rows(cohort, design, &rows, weighting)
}

/// Least-squares calibration of `ω = U* - U` on `(1, X, Z)` or `(1, X*, Z)`.
pub fn fit_omega_calibration(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    spec: &ErrorModelSpec,
    weighting: Weighting,
) -> Result<LinearMap> {
    let rows = validation_rows(cohort, design)?;
    fit_omega_on_rows(cohort, design, &rows, spec, weighting)
}

/// Fits whichever calibration maps `spec` calls for.
pub fn fit_calibration(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    spec: &ErrorModelSpec,
    weighting: Weighting,
) -> Result<CalibrationModel> {
    let rows = validation_rows(cohort, design)?;
    fit_model_on_rows(cohort, design, &rows, spec, weighting)
}

fn fit_model_on_rows(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    rows: &[usize],
    spec: &ErrorModelSpec,
    weighting: Weighting,
) -> Result<CalibrationModel> {
    let zeta_x = if spec.calibrates_x() {
        Some(fit_x_on_rows(cohort, design, rows, weighting)?)
    } else {
        None
    };
    let zeta_omega = if spec.calibrates_u() {
        Some(fit_omega_on_rows(cohort, design, rows, spec, weighting)?)
    } else {
        None
    };
    Ok(CalibrationModel {
        zeta_x,
        zeta_omega,
        weighting,
    })
}

/// Smallest imputed time allowed, relative to the largest observed time.
pub const TIME_FLOOR_FRACTION: f64 = 1e-8;

fn time_floor(cohort: &CohortData) -> f64 {
    TIME_FLOOR_FRACTION * cohort.time_star.iter().copied().fold(0.0, f64::max)
}

/// Imputations `X̂` and `Û = U* - Ê(ω | ·)` for every phase-one record.
fn impute(
    cohort: &CohortData,
    model: &CalibrationModel,
    spec: &ErrorModelSpec,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let x_hat = match (&model.zeta_x, spec.calibrates_x()) {
        (Some(map), true) => map.predict(&cohort.x_star, &cohort.z)?,
        (None, true) => {
            return Err(Error::DimensionMismatch("model lacks the covariate calibration".into()))
        }
        (_, false) => cohort.x_star.clone(),
    };
    if x_hat.ncols() != cohort.p() {
        return Err(Error::DimensionMismatch(format!(
            "calibration predicts {} columns, cohort has {}",
            x_hat.ncols(),
            cohort.p()
        )));
    }
    let u_hat = match (&model.zeta_omega, spec.calibrates_u()) {
        (Some(map), true) => {
            // Under TrueX, X is observed for all and lives in x_star.
            let pred = map.predict(&cohort.x_star, &cohort.z)?;
            cohort
                .time_star
                .iter()
                .zip(pred.column(0).iter())
                .map(|(u, w)| u - w)
                .collect()
        }
        (None, true) => {
            return Err(Error::DimensionMismatch("model lacks the outcome calibration".into()))
        }
        (_, false) => cohort.time_star.clone(),
    };
    Ok((x_hat, u_hat))
}

/// Common shift that lifts every time to at least `floor`. The partial
/// likelihood only sees the ordering of times, so a shift leaves it
/// unchanged while keeping times nonnegative.
fn floor_shift(times: impl Iterator<Item = f64>, floor: f64) -> f64 {
    let lowest = times.fold(f64::INFINITY, f64::min);
    if lowest < floor {
        floor - lowest
    } else {
        0.0
    }
}

/// Applies a fitted calibration model to every phase-one record.
///
/// Imputed times below the floor are not clamped (that would tie them all
/// at the floor); instead every `Û` moves up by the same amount.
pub fn apply_rc(
    cohort: &CohortData,
    model: &CalibrationModel,
    spec: &ErrorModelSpec,
) -> Result<CalibratedCohort> {
    let (x_hat, mut u_hat) = impute(cohort, model, spec)?;
    let floor = time_floor(cohort);
    let n_below_floor = u_hat.iter().filter(|&&u| u < floor).count();
    let shift = floor_shift(u_hat.iter().copied(), floor);
    for u in &mut u_hat {
        *u += shift;
    }
    Ok(CalibratedCohort {
        x_hat,
        u_hat,
        event: cohort.event_star.clone(),
        n_below_floor,
        time_shift: shift,
        model: model.clone(),
    })
}

/// Ordinary regression calibration: calibrate, impute, fit on all phase-one
/// records.
pub fn rc_fit(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    spec: &ErrorModelSpec,
    weighting: Weighting,
) -> Result<(CoxFit, CalibratedCohort)> {
    let model = fit_calibration(cohort, design, spec, weighting)?;
    let calibrated = apply_rc(cohort, &model, spec)?;
    let fit = fit_cox(&calibrated.records(cohort), &FitOptions::default())?.require_converged()?;
    Ok((fit, calibrated))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsrcOptions {
    /// Event-time quantiles of the stage-one `Û` where recalibration happens.
    /// A value of 0 stands for the origin and adds no window.
    pub grid: Vec<f64>,
    /// Refit the outcome calibration in each window (otherwise only `ζ_x`).
    pub recalibrate_omega: bool,
    pub weighting: Weighting,
}

impl RsrcOptions {
    /// Deciles: 0.1, 0.2, ..., 0.9.
    pub fn deciles(weighting: Weighting) -> Self {
        Self {
            grid: (1..10).map(|k| k as f64 / 10.0).collect(),
            recalibrate_omega: true,
            weighting,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsrcFit {
    pub fit: CoxFit,
    /// Recalibration times on the stage-one `Û` scale (before any shift).
    pub boundaries: Vec<f64>,
    /// Windows (1-based, by boundary) whose validation risk set was too
    /// small or singular and reused the previous window's model.
    pub fallbacks: Vec<usize>,
    pub n_episodes: usize,
    /// Shift added to all times before fitting, as in [`apply_rc`].
    pub time_shift: f64,
}

/// Two-stage risk-set regression calibration.
///
/// Stage one computes `Û` by ordinary RC and takes the grid quantiles of
/// `Û` among apparent events as recalibration times `b_1 < ... < b_K`.
/// For each `b_k` the calibration is refit on validation subjects with
/// stage-one `Û ≥ b_k`. A subject whose stage-one `Û` lies in window
/// `(b_k, b_{k+1}]` takes its time from model `k`. The covariate imputation
/// is time-varying: on the final time scale each subject carries model
/// `k`'s `X̂` while in window `k`, so every risk set compares imputations
/// from one model.
pub fn rsrc_fit(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    spec: &ErrorModelSpec,
    options: &RsrcOptions,
) -> Result<RsrcFit> {
    if options.grid.iter().any(|&q| !(0.0..1.0).contains(&q)) {
        return Err(Error::InvalidInput("recalibration quantiles must lie in [0, 1)".into()));
    }
    if options.grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("recalibration quantiles must be strictly increasing".into()));
    }
    let rows = validation_rows(cohort, design)?;
    let global = fit_model_on_rows(cohort, design, &rows, spec, options.weighting)?;
    let (_, stage_one) = impute(cohort, &global, spec)?;

    let mut event_times: Vec<f64> = (0..cohort.len())
        .filter(|&i| cohort.event_star[i])
        .map(|i| stage_one[i])
        .collect();
    if event_times.is_empty() {
        return Err(Error::NoEvents);
    }
    event_times.sort_by(f64::total_cmp);
    let mut boundaries: Vec<f64> = Vec::new();
    for &q in options.grid.iter().filter(|&&q| q > 0.0) {
        let t = quantile_sorted(&event_times, q);
        if boundaries.last().is_none_or(|&last| t > last) {
            boundaries.push(t);
        }
    }

    let need = cohort.p() + cohort.q() + 2;
    let mut models = Vec::with_capacity(boundaries.len() + 1);
    let mut fallbacks = Vec::new();
    models.push(global.clone());
    for (k, &t) in boundaries.iter().enumerate() {
        let at_risk: Vec<usize> = rows.iter().copied().filter(|&i| stage_one[i] >= t).collect();
        let fitted = if at_risk.len() < need {
            None
        } else {
            fit_model_on_rows(cohort, design, &at_risk, spec, options.weighting)
                .ok()
                .map(|mut m| {
                    if !options.recalibrate_omega {
                        m.zeta_omega = global.zeta_omega.clone();
                    }
                    m
                })
        };
        let model = fitted.unwrap_or_else(|| {
            fallbacks.push(k + 1);
            models[k].clone()
        });
        models.push(model);
    }

    let imputations: Vec<(DMatrix<f64>, Vec<f64>)> = models
        .iter()
        .map(|m| impute(cohort, m, spec))
        .collect::<Result<_>>()?;
    let window_of = |t: f64| boundaries.iter().filter(|&&b| b < t).count();
    let final_time: Vec<f64> = (0..cohort.len())
        .map(|i| imputations[window_of(stage_one[i])].1[i])
        .collect();
    let shift = floor_shift(
        final_time.iter().chain(boundaries.first()).copied(),
        time_floor(cohort),
    );

    let split = spec.calibrates_x();
    let mut records = Vec::with_capacity(cohort.len() * if split { 2 } else { 1 });
    for (i, &t) in final_time.iter().enumerate() {
        let covariates = |k: usize| -> Vec<f64> {
            imputations[k].0.row(i).iter().chain(cohort.z.row(i).iter()).copied().collect()
        };
        if !split {
            records.push(SurvivalRecord::new(t + shift, cohort.event_star[i], covariates(0)));
            continue;
        }
        let reach = window_of(t);
        for k in 0..=reach {
            let entry = (k > 0).then(|| boundaries[k - 1] + shift);
            let (exit, event) = if k == reach {
                (t + shift, cohort.event_star[i])
            } else {
                (boundaries[k] + shift, false)
            };
            let mut rec = SurvivalRecord::new(exit, event, covariates(k));
            rec.entry = entry;
            records.push(rec);
        }
    }
    let n_episodes = records.len();
    let fit = fit_cox(&records, &FitOptions::default())?.require_converged()?;
    Ok(RsrcFit {
        fit,
        boundaries,
        fallbacks,
        n_episodes,
        time_shift: shift,
    })
}

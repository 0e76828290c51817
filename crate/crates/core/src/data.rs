//! Phase-one cohort data with optional validated values.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::survival_core::SurvivalRecord;

/// Error-prone phase-one data for every subject plus the validated
/// `(X, U, Δ)` where known.
///
/// `x_star` is `n × p`, `z` is `n × q`. Validated fields hold `NaN` /
/// `false` where `known[i]` is false. In simulation every record is known
/// (so the true-data fit can be computed) while estimators only look at the
/// truth of subjects selected by the two-phase design.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortData {
    pub time_star: Vec<f64>,
    pub event_star: Vec<bool>,
    pub x_star: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    pub x: DMatrix<f64>,
    pub known: Vec<bool>,
}

impl CohortData {
    /// Builds a cohort and checks shapes and value ranges.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        time_star: Vec<f64>,
        event_star: Vec<bool>,
        x_star: DMatrix<f64>,
        z: DMatrix<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
        x: DMatrix<f64>,
        known: Vec<bool>,
    ) -> Result<Self> {
        let cohort = Self {
            time_star,
            event_star,
            x_star,
            z,
            time,
            event,
            x,
            known,
        };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.time_star.len();
        let lens = [
            self.event_star.len(),
            self.x_star.nrows(),
            self.z.nrows(),
            self.time.len(),
            self.event.len(),
            self.x.nrows(),
            self.known.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::DimensionMismatch(format!(
                "cohort columns have unequal lengths: {n} vs {lens:?}"
            )));
        }
        if self.x.ncols() != self.x_star.ncols() {
            return Err(Error::DimensionMismatch("x and x_star widths differ".into()));
        }
        if self.x_star.ncols() == 0 {
            return Err(Error::DimensionMismatch("at least one error-prone covariate required".into()));
        }
        for i in 0..n {
            let t = self.time_star[i];
            if !t.is_finite() || t < 0.0 {
                return Err(Error::NonFiniteInput(format!("time_star of subject {i}")));
            }
            if self.x_star.row(i).iter().chain(self.z.row(i).iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("covariates of subject {i}")));
            }
            if self.known[i] {
                let t = self.time[i];
                if !t.is_finite() || t < 0.0 {
                    return Err(Error::NonFiniteInput(format!("time of subject {i}")));
                }
                if self.x.row(i).iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteInput(format!("x of subject {i}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.time_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_star.is_empty()
    }

    /// Number of error-prone covariates.
    pub fn p(&self) -> usize {
        self.x_star.ncols()
    }

    /// Number of precisely measured covariates.
    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    /// Outcome error `U* - U`; only meaningful for known subjects.
    pub fn omega(&self, i: usize) -> f64 {
        self.time_star[i] - self.time[i]
    }

    /// Subset of rows, in the given order (indices may repeat).
    pub fn select(&self, rows: &[usize]) -> Self {
        let pick_f = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_b = |v: &[bool]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            time_star: pick_f(&self.time_star),
            event_star: pick_b(&self.event_star),
            x_star: self.x_star.select_rows(rows),
            z: self.z.select_rows(rows),
            time: pick_f(&self.time),
            event: pick_b(&self.event),
            x: self.x.select_rows(rows),
            known: pick_b(&self.known),
        }
    }

    fn covariates(&self, xs: &DMatrix<f64>, i: usize) -> Vec<f64> {
        xs.row(i).iter().chain(self.z.row(i).iter()).copied().collect()
    }

    /// Records built from the error-prone data `(X*, Z, U*, Δ*)`.
    pub fn naive_records(&self) -> Vec<SurvivalRecord> {
        (0..self.len())
            .map(|i| SurvivalRecord::new(self.time_star[i], self.event_star[i], self.covariates(&self.x_star, i)))
            .collect()
    }

    /// Records built from the validated data `(X, Z, U, Δ)` of the given subjects.
    pub fn true_records(&self, rows: &[usize]) -> Result<Vec<SurvivalRecord>> {
        rows.iter()
            .map(|&i| {
                if !self.known[i] {
                    return Err(Error::InvalidInput(format!("subject {i} has no validated data")));
                }
                Ok(SurvivalRecord::new(self.time[i], self.event[i], self.covariates(&self.x, i)))
            })
            .collect()
    }

    /// True-data records for the whole cohort.
    pub fn all_true_records(&self) -> Result<Vec<SurvivalRecord>> {
        let rows: Vec<usize> = (0..self.len()).collect();
        self.true_records(&rows)
    }
}

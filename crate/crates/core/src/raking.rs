//! Generalized raking of two-phase design weights and the raking-based Cox
//! estimators (GRN, GRRC), plus the plain Horvitz-Thompson fit.
//!
//! Raking uses the distance `d(a, b) = a log(a/b) + (b - a)`, which gives
//! multiplicative adjustments `g_i = exp(-λ'A_i)` and so strictly positive
//! weights. `λ` is found by Newton's method on the convex dual
//!
//! ```text
//! D(λ) = Σ_i R_i exp(-λ'A_i) / π_i + λ' Σ_i A_i
//! ```
//!
//! whose gradient is minus the calibration-equation residual. Newton starts
//! from the usual first-order value `B⁻¹(Σ R_i A_i / π_i - Σ A_i)`.

use nalgebra::{DMatrix, DVector};

use crate::calibration::{apply_rc, fit_calibration, ErrorModelSpec, Weighting};
use crate::data::CohortData;
use crate::error::{Error, Result};
use crate::survival_core::{fit_cox, CoxFit, FitOptions, SurvivalRecord};

/// Phase-two selection indicators and sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseDesign {
    pub selected: Vec<bool>,
    /// Known for every subject, selected or not.
    pub pi: Vec<f64>,
    pub strata: Option<Vec<u32>>,
}

impl TwoPhaseDesign {
    pub fn new(selected: Vec<bool>, pi: Vec<f64>) -> Result<Self> {
        if selected.len() != pi.len() {
            return Err(Error::DimensionMismatch("selected and pi lengths differ".into()));
        }
        if let Some(i) = pi.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidPlan(format!("pi[{i}] = {} outside (0, 1]", pi[i])));
        }
        Ok(Self {
            selected,
            pi,
            strata: None,
        })
    }

    /// Everyone selected with probability one.
    pub fn full(n: usize) -> Self {
        Self {
            selected: vec![true; n],
            pi: vec![1.0; n],
            strata: None,
        }
    }

    pub fn with_strata(mut self, strata: Vec<u32>) -> Self {
        self.strata = Some(strata);
        self
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn validation_rows(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }

    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    /// IPW calibration when selection probabilities differ among the
    /// validated subjects, plain least squares otherwise.
    pub fn default_weighting(&self) -> Weighting {
        let mut it = self.validation_rows().into_iter().map(|i| self.pi[i]);
        match it.next() {
            Some(first) if it.any(|p| p != first) => Weighting::Ipw,
            _ => Weighting::Unweighted,
        }
    }

    pub(crate) fn check(&self, cohort: &CohortData) -> Result<Vec<usize>> {
        if self.len() != cohort.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} subjects, cohort has {}",
                self.len(),
                cohort.len()
            )));
        }
        let rows = self.validation_rows();
        if rows.is_empty() {
            return Err(Error::EmptyValidation);
        }
        if let Some(&i) = rows.iter().find(|&&i| !cohort.known[i]) {
            return Err(Error::InvalidInput(format!("selected subject {i} lacks validated data")));
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxiliarySource {
    NaiveInfluence,
    RcInfluence,
    Custom,
}

/// Auxiliary variables known for every phase-one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryMatrix {
    pub a: DMatrix<f64>,
    pub source: AuxiliarySource,
}

impl AuxiliaryMatrix {
    pub fn new(a: DMatrix<f64>, source: AuxiliarySource) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("auxiliary matrix".into()));
        }
        for (j, col) in a.column_iter().enumerate() {
            if col.amax() == 0.0 {
                return Err(Error::AuxiliaryDegenerate(j));
            }
        }
        Ok(Self { a, source })
    }

    /// Influence auxiliaries from a phase-one fit's dfbetas, with a leading
    /// column of ones so the raked weights also reproduce the cohort size.
    pub fn from_dfbetas(dfbetas: &DMatrix<f64>, source: AuxiliarySource, intercept: bool) -> Result<Self> {
        let scale = dfbetas.amax();
        for (j, col) in dfbetas.column_iter().enumerate() {
            if col.amax() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::AuxiliaryDegenerate(j));
            }
        }
        let a = if intercept {
            let n = dfbetas.nrows();
            let mut a = DMatrix::from_element(n, dfbetas.ncols() + 1, 1.0);
            a.columns_mut(1, dfbetas.ncols()).copy_from(dfbetas);
            a
        } else {
            dfbetas.clone()
        };
        Self::new(a, source)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RakingSolution {
    pub lambda: DVector<f64>,
    /// `g_i = exp(-λ'A_i)` for every subject.
    pub g: Vec<f64>,
    /// `R_i g_i / π_i`, zero for unselected subjects.
    pub weights: Vec<f64>,
    /// `‖Σ A_i - Σ R_i (g_i/π_i) A_i‖∞`.
    pub constraint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RakingOptions {
    /// Relative tolerance on the calibration equations.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Prepend a constant auxiliary to the influence columns.
    pub intercept: bool,
}

impl Default for RakingOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            intercept: true,
        }
    }
}

struct RakingProblem<'a> {
    a: &'a DMatrix<f64>,
    rows: Vec<usize>,
    design_weight: Vec<f64>,
    totals: DVector<f64>,
}

impl RakingProblem<'_> {
    fn tilt(&self, lambda: &DVector<f64>) -> Vec<f64> {
        self.rows
            .iter()
            .map(|&i| (-self.a.row(i).dot(&lambda.transpose())).exp())
            .collect()
    }

    fn dual(&self, lambda: &DVector<f64>) -> f64 {
        let g = self.tilt(lambda);
        g.iter().zip(&self.design_weight).map(|(g, d)| g * d).sum::<f64>() + lambda.dot(&self.totals)
    }

    /// Calibration residual `Σ R g A / π - Σ A` and its (negated) Jacobian.
    fn residual_and_hessian(&self, lambda: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.a.ncols();
        let g = self.tilt(lambda);
        let mut f = -self.totals.clone();
        let mut h = DMatrix::zeros(k, k);
        for ((&i, gi), di) in self.rows.iter().zip(&g).zip(&self.design_weight) {
            let ai = self.a.row(i).transpose();
            let w = gi * di;
            f.axpy(w, &ai, 1.0);
            h.ger(w, &ai, &ai, 1.0);
        }
        (f, h)
    }
}

/// Solves the raking calibration equations
/// `Σ_i R_i (g_i/π_i) A_i = Σ_i A_i` with `g_i = exp(-λ'A_i)`.
pub fn solve_raking(
    design: &TwoPhaseDesign,
    aux: &AuxiliaryMatrix,
    tolerance: f64,
    max_iterations: usize,
) -> Result<RakingSolution> {
    let n = design.len();
    if aux.a.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "auxiliaries have {} rows, design has {n}",
            aux.a.nrows()
        )));
    }
    let rows = design.validation_rows();
    if rows.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let k = aux.a.ncols();
    let mut totals = DVector::zeros(k);
    for i in 0..n {
        totals += aux.a.row(i).transpose();
    }
    let design_weight: Vec<f64> = rows.iter().map(|&i| 1.0 / design.pi[i]).collect();
    let problem = RakingProblem {
        a: &aux.a,
        rows,
        design_weight,
        totals,
    };
    let threshold = tolerance * (1.0 + problem.totals.amax());

    let zero = DVector::zeros(k);
    let (f0, b) = problem.residual_and_hessian(&zero);
    let b_chol = b.cholesky().ok_or(Error::SingularB)?;
    let first_order = b_chol.solve(&f0);
    let mut lambda = if problem.dual(&first_order) <= problem.dual(&zero) {
        first_order
    } else {
        zero
    };

    let (mut f, mut h) = problem.residual_and_hessian(&lambda);
    let mut iterations = 0;
    let mut converged = f.amax() <= threshold;
    while !converged && iterations < max_iterations {
        iterations += 1;
        let step = h.clone().cholesky().ok_or(Error::SingularB)?.solve(&f);
        let current = problem.dual(&lambda);
        let mut scale = 1.0;
        let mut next = &lambda + &step;
        for _ in 0..30 {
            let d = problem.dual(&next);
            if d.is_finite() && d <= current + 1e-14 * current.abs() {
                break;
            }
            scale *= 0.5;
            next = &lambda + &step * scale;
        }
        lambda = next;
        (f, h) = problem.residual_and_hessian(&lambda);
        converged = f.amax() <= threshold;
    }

    let g: Vec<f64> = (0..n)
        .map(|i| (-aux.a.row(i).dot(&lambda.transpose())).exp())
        .collect();
    let weights = (0..n)
        .map(|i| if design.selected[i] { g[i] / design.pi[i] } else { 0.0 })
        .collect();
    Ok(RakingSolution {
        lambda,
        g,
        weights,
        constraint_residual: f.amax(),
        iterations,
        converged,
    })
}

fn weighted_validation_fit(
    cohort: &CohortData,
    rows: &[usize],
    weight: impl Fn(usize) -> f64,
) -> Result<CoxFit> {
    let records: Vec<SurvivalRecord> = cohort
        .true_records(rows)?
        .into_iter()
        .zip(rows)
        .map(|(r, &i)| r.with_weight(weight(i)))
        .collect();
    fit_cox(&records, &FitOptions::default())?.require_converged()
}

/// Horvitz-Thompson fit: validated data weighted by `1/π_i`.
pub fn ht_estimate(cohort: &CohortData, design: &TwoPhaseDesign) -> Result<CoxFit> {
    let rows = design.check(cohort)?;
    weighted_validation_fit(cohort, &rows, |i| 1.0 / design.pi[i])
}

/// Model-based standard errors for an HT fit, with the design weights
/// rescaled to average one over the validated subjects. Under simple
/// random sampling this is the complete-case model SE.
pub fn ht_model_std_errors(fit: &CoxFit, design: &TwoPhaseDesign) -> Result<DVector<f64>> {
    let rows = design.validation_rows();
    let mean_w = rows.iter().map(|&i| 1.0 / design.pi[i]).sum::<f64>() / rows.len() as f64;
    Ok(fit.std_errors()? * mean_w.sqrt())
}

fn rake_and_fit(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    rows: &[usize],
    phase_one: &CoxFit,
    source: AuxiliarySource,
    options: &RakingOptions,
) -> Result<(CoxFit, RakingSolution)> {
    let aux = AuxiliaryMatrix::from_dfbetas(&phase_one.dfbetas, source, options.intercept)?;
    let solution = solve_raking(design, &aux, options.tolerance, options.max_iterations)?;
    if !solution.converged {
        return Err(Error::RakingNotConverged {
            residual: solution.constraint_residual,
            iterations: solution.iterations,
        });
    }
    let fit = weighted_validation_fit(cohort, rows, |i| solution.weights[i])?;
    Ok((fit, solution))
}

/// Generalized raking with naive-fit influence auxiliaries (GRN).
pub fn grn_estimate(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    options: &RakingOptions,
) -> Result<(CoxFit, RakingSolution)> {
    let rows = design.check(cohort)?;
    let naive = fit_cox(&cohort.naive_records(), &FitOptions::default())?.require_converged()?;
    rake_and_fit(cohort, design, &rows, &naive, AuxiliarySource::NaiveInfluence, options)
}

/// Generalized raking with regression-calibration influence auxiliaries
/// (GRRC). The calibration maps are fit with `weighting`; the phase-one Cox
/// fit on the imputed data is unweighted.
pub fn grrc_estimate(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    spec: &ErrorModelSpec,
    weighting: Weighting,
    options: &RakingOptions,
) -> Result<(CoxFit, RakingSolution)> {
    let rows = design.check(cohort)?;
    let model = fit_calibration(cohort, design, spec, weighting)?;
    let calibrated = apply_rc(cohort, &model, spec)?;
    let rc = fit_cox(&calibrated.records(cohort), &FitOptions::default())?.require_converged()?;
    rake_and_fit(cohort, design, &rows, &rc, AuxiliarySource::RcInfluence, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aux(n: usize) -> AuxiliaryMatrix {
        let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.37).sin() });
        AuxiliaryMatrix::new(a, AuxiliarySource::Custom).unwrap()
    }

    #[test]
    fn full_design_needs_no_adjustment() {
        let sol = solve_raking(&TwoPhaseDesign::full(25), &aux(25), 1e-10, 50).unwrap();
        assert!(sol.converged);
        assert!(sol.lambda.amax() < 1e-12);
        assert!(sol.g.iter().all(|g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn raked_weights_hit_totals() {
        let n = 40;
        let selected: Vec<bool> = (0..n).map(|i| i % 3 != 1).collect();
        let design = TwoPhaseDesign::new(selected, vec![0.6; n]).unwrap();
        let a = aux(n);
        let sol = solve_raking(&design, &a, 1e-10, 50).unwrap();
        assert!(sol.converged);
        assert!(sol.g.iter().all(|&g| g > 0.0));
        for j in 0..2 {
            let total: f64 = a.a.column(j).sum();
            let raked: f64 = (0..n).map(|i| sol.weights[i] * a.a[(i, j)]).sum();
            assert!((total - raked).abs() < 1e-8 * (1.0 + total.abs()));
        }
    }

    #[test]
    fn dfbeta_auxiliaries_get_intercept() {
        let d = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 - 2.0);
        let a = AuxiliaryMatrix::from_dfbetas(&d, AuxiliarySource::NaiveInfluence, true).unwrap();
        assert_eq!(a.a.ncols(), 3);
        assert!(a.a.column(0).iter().all(|&v| v == 1.0));
        assert_eq!(a.a.columns(1, 2), d);
    }

    #[test]
    fn zero_auxiliary_column_is_degenerate() {
        let mut d = DMatrix::from_element(4, 2, 1.0);
        d.column_mut(1).fill(0.0);
        assert!(matches!(
            AuxiliaryMatrix::from_dfbetas(&d, AuxiliarySource::Custom, false),
            Err(Error::AuxiliaryDegenerate(1))
        ));
    }

    #[test]
    fn design_checks_pi_range() {
        assert!(TwoPhaseDesign::new(vec![true, false], vec![0.5, 0.0]).is_err());
        assert!(TwoPhaseDesign::new(vec![true], vec![1.5]).is_err());
        assert!(TwoPhaseDesign::new(vec![true], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn default_weighting_follows_pi() {
        let d = TwoPhaseDesign::new(vec![true, true, false], vec![0.5, 0.5, 0.1]).unwrap();
        assert_eq!(d.default_weighting(), Weighting::Unweighted);
        let d = TwoPhaseDesign::new(vec![true, true, false], vec![1.0, 0.5, 0.5]).unwrap();
        assert_eq!(d.default_weighting(), Weighting::Ipw);
    }
}

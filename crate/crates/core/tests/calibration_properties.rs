mod common;

use common::{error_free_cohort, max_abs_diff, moment_form, sim_cohort, unequal_design};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rakecal::calibration::{
    apply_rc, fit_calibration, fit_omega_calibration, fit_x_calibration, rc_fit, rsrc_fit, ErrorMode,
    ErrorModelSpec, RsrcOptions, Weighting,
};
use rakecal::data::CohortData;
use rakecal::design_bootstrap::{draw_validation, PlanKind, SamplingPlan};
use rakecal::raking::TwoPhaseDesign;
use rakecal::survival_core::{fit_cox, FitOptions};

fn regressors(a: &DMatrix<f64>, cohort: &CohortData, rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&i| a.row(i).iter().chain(cohort.z.row(i).iter()).copied().collect())
        .collect()
}

fn check_moment_form(cohort: &CohortData, design: &TwoPhaseDesign, weighting: Weighting) {
    let rows = design.validation_rows();
    let weights: Vec<f64> = match weighting {
        Weighting::Unweighted => vec![1.0; rows.len()],
        Weighting::Ipw => rows.iter().map(|&i| 1.0 / design.pi[i]).collect(),
    };
    let w = regressors(&cohort.x_star, cohort, &rows);

    let x: Vec<f64> = rows.iter().map(|&i| cohort.x[(i, 0)]).collect();
    let oracle = moment_form(&w, &x, &weights);
    let ls = fit_x_calibration(cohort, design, weighting).unwrap();
    let got: Vec<f64> = ls.coefficients.column(0).iter().copied().collect();
    assert!(max_abs_diff(&oracle, &got) < 1e-10, "{oracle:?} vs {got:?}");

    let omega: Vec<f64> = rows.iter().map(|&i| cohort.omega(i)).collect();
    let oracle = moment_form(&w, &omega, &weights);
    let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    let ls = fit_omega_calibration(cohort, design, &spec, weighting).unwrap();
    let got: Vec<f64> = ls.coefficients.column(0).iter().copied().collect();
    assert!(max_abs_diff(&oracle, &got) < 1e-10, "{oracle:?} vs {got:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn least_squares_equals_moment_form(seed in 0u64..10_000) {
        let cohort = sim_cohort(seed, 600);
        let srs = draw_validation(&cohort, &SamplingPlan::new(PlanKind::Srs(120), seed)).unwrap();
        check_moment_form(&cohort, &srs, Weighting::Unweighted);
        let biased = unequal_design(&cohort, seed);
        check_moment_form(&cohort, &biased, Weighting::Ipw);
    }

    #[test]
    fn calibration_residuals_are_orthogonal(seed in 0u64..10_000) {
        let cohort = sim_cohort(seed, 500);
        let design = draw_validation(&cohort, &SamplingPlan::new(PlanKind::Srs(100), seed)).unwrap();
        let map = fit_x_calibration(&cohort, &design, Weighting::Unweighted).unwrap();
        let c = map.coefficients.column(0);
        let rows = design.validation_rows();
        let w = regressors(&cohort.x_star, &cohort, &rows);
        let mut dots = vec![0.0; 3];
        for (r, &i) in rows.iter().enumerate() {
            let fitted = c[0] + c[1] * w[r][0] + c[2] * w[r][1];
            let e = cohort.x[(i, 0)] - fitted;
            dots[0] += e;
            dots[1] += e * w[r][0];
            dots[2] += e * w[r][1];
        }
        prop_assert!(dots.iter().all(|d| d.abs() < 1e-8), "{dots:?}");
    }

    #[test]
    fn error_free_data_collapses_to_true_fit(seed in 0u64..10_000) {
        let cohort = error_free_cohort(seed, 400);
        let design = draw_validation(&cohort, &SamplingPlan::new(PlanKind::Srs(80), seed)).unwrap();
        let truth = fit_cox(&cohort.all_true_records().unwrap(), &FitOptions::default()).unwrap();
        let naive = fit_cox(&cohort.naive_records(), &FitOptions::default()).unwrap();
        let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
        let (rc, _) = rc_fit(&cohort, &design, &spec, Weighting::Unweighted).unwrap();
        let rsrc = rsrc_fit(&cohort, &design, &spec, &RsrcOptions::deciles(Weighting::Unweighted)).unwrap();
        for b in [&naive.beta, &rc.beta, &rsrc.fit.beta] {
            prop_assert!(max_abs_diff(b.as_slice(), truth.beta.as_slice()) < 1e-8);
        }
    }
}

#[test]
fn full_validation_makes_ipw_irrelevant() {
    let cohort = sim_cohort(2, 300);
    let design = TwoPhaseDesign::full(cohort.len());
    let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    let a = fit_calibration(&cohort, &design, &spec, Weighting::Unweighted).unwrap();
    let b = fit_calibration(&cohort, &design, &spec, Weighting::Ipw).unwrap();
    let za = a.zeta_x.unwrap().coefficients;
    let zb = b.zeta_x.unwrap().coefficients;
    assert!((za - zb).amax() < 1e-10);
    let wa = a.zeta_omega.unwrap().coefficients;
    let wb = b.zeta_omega.unwrap().coefficients;
    assert!((wa - wb).amax() < 1e-10);
}

#[test]
fn imputed_time_error_is_linear_in_regressors() {
    let cohort = sim_cohort(3, 500);
    let design = draw_validation(&cohort, &SamplingPlan::new(PlanKind::Srs(100), 3)).unwrap();
    let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    let model = fit_calibration(&cohort, &design, &spec, Weighting::Unweighted).unwrap();
    let rc = apply_rc(&cohort, &model, &spec).unwrap();
    let c = model.zeta_omega.as_ref().unwrap().coefficients.column(0);
    let worst = (0..cohort.len())
        .map(|i| {
            let pred = c[0] + c[1] * cohort.x_star[(i, 0)] + c[2] * cohort.z[(i, 0)];
            ((rc.u_hat[i] - cohort.time_star[i]) - (rc.time_shift - pred)).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn rsrc_with_origin_only_grid_is_rc() {
    let cohort = sim_cohort(4, 800);
    let design = draw_validation(&cohort, &SamplingPlan::new(PlanKind::Srs(160), 4)).unwrap();
    let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    let opts = RsrcOptions {
        grid: vec![0.0],
        recalibrate_omega: true,
        weighting: Weighting::Unweighted,
    };
    let rsrc = rsrc_fit(&cohort, &design, &spec, &opts).unwrap();
    let (rc, _) = rc_fit(&cohort, &design, &spec, Weighting::Unweighted).unwrap();
    assert!(rsrc.boundaries.is_empty());
    assert!(max_abs_diff(rsrc.fit.beta.as_slice(), rc.beta.as_slice()) < 1e-10);
}

#[test]
fn calibration_is_deterministic() {
    let cohort = sim_cohort(5, 600);
    let design = unequal_design(&cohort, 5);
    let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    let opts = RsrcOptions::deciles(Weighting::Ipw);
    let a = rsrc_fit(&cohort, &design, &spec, &opts).unwrap();
    let b = rsrc_fit(&cohort, &design, &spec, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn event_indicators_are_never_modified() {
    let cohort = sim_cohort(6, 300);
    let design = draw_validation(&cohort, &SamplingPlan::new(PlanKind::Srs(60), 6)).unwrap();
    let spec = ErrorModelSpec::for_mode(ErrorMode::Both);
    let (_, rc) = rc_fit(&cohort, &design, &spec, Weighting::Unweighted).unwrap();
    assert_eq!(rc.event, cohort.event_star);
}

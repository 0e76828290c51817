mod common;

use common::{column_sums, max_abs_diff, random_records};
use proptest::prelude::*;
use rakecal::survival_core::{
    dfbeta_residuals, fit_cox, log_partial_likelihood, score_and_information, FitOptions, SurvivalRecord,
};

fn fit(records: &[SurvivalRecord]) -> rakecal::survival_core::CoxFit {
    fit_cox(records, &FitOptions::default()).unwrap().require_converged().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_matches_finite_differences(seed in 0u64..10_000, n in 10usize..60, b0 in -1.0f64..1.0, b1 in -1.0f64..1.0) {
        let recs = random_records(seed, n, 2);
        prop_assume!(recs.iter().any(|r| r.event));
        let beta = [b0, b1];
        let (score, info) = score_and_information(&beta, &recs).unwrap();
        let h = 1e-5;
        for a in 0..2 {
            let mut up = beta;
            let mut dn = beta;
            up[a] += h;
            dn[a] -= h;
            let fd = (log_partial_likelihood(&up, &recs).unwrap() - log_partial_likelihood(&dn, &recs).unwrap()) / (2.0 * h);
            prop_assert!((fd - score[a]).abs() <= 1e-6 * score[a].abs().max(1.0), "score {} vs fd {}", score[a], fd);
            let (su, _) = score_and_information(&up, &recs).unwrap();
            let (sd, _) = score_and_information(&dn, &recs).unwrap();
            for c in 0..2 {
                let fd_info = -(su[c] - sd[c]) / (2.0 * h);
                prop_assert!((fd_info - info[(c, a)]).abs() <= 1e-4 * info[(c, a)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn dfbeta_columns_sum_to_zero(seed in 0u64..10_000, n in 20usize..120) {
        let recs = random_records(seed, n, 2);
        let f = fit_cox(&recs, &FitOptions::default());
        prop_assume!(f.as_ref().map(|f| f.converged).unwrap_or(false));
        let f = f.unwrap();
        let dfb = dfbeta_residuals(&f, &recs).unwrap();
        for s in column_sums(&dfb) {
            prop_assert!(s.abs() < 1e-6 * n as f64, "column sum {s}");
        }
    }

    #[test]
    fn common_weight_scale_leaves_beta(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let recs = random_records(seed, 80, 2);
        let scaled: Vec<_> = recs.iter().map(|r| r.clone().with_weight(c)).collect();
        let a = fit(&recs);
        let b = fit(&scaled);
        prop_assert!(max_abs_diff(a.beta.as_slice(), b.beta.as_slice()) < 1e-8);
    }

    #[test]
    fn covariate_shift_leaves_beta(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let recs = random_records(seed, 80, 2);
        let moved: Vec<_> = recs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.covariates[1] += shift;
                r
            })
            .collect();
        let a = fit(&recs);
        let b = fit(&moved);
        prop_assert!(max_abs_diff(a.beta.as_slice(), b.beta.as_slice()) < 1e-8);
    }

    #[test]
    fn splitting_a_record_changes_nothing(seed in 0u64..10_000, frac in 0.05f64..0.95) {
        let recs = random_records(seed, 60, 2);
        let mut split = Vec::new();
        for r in &recs {
            let cut = r.time * frac;
            let mut first = r.clone();
            first.time = cut;
            first.event = false;
            split.push(first);
            split.push(r.clone().with_entry(cut));
        }
        let a = fit(&recs);
        let b = fit(&split);
        prop_assert!(max_abs_diff(a.beta.as_slice(), b.beta.as_slice()) < 1e-9);
        prop_assert!((a.loglik - b.loglik).abs() < 1e-9 * a.loglik.abs().max(1.0));
    }
}

#[test]
fn unit_weights_equal_unweighted_exactly() {
    let recs = random_records(3, 100, 2);
    let weighted: Vec<_> = recs.iter().map(|r| r.clone().with_weight(1.0)).collect();
    assert_eq!(fit(&recs).beta, fit(&weighted).beta);
}

#[test]
fn integer_weights_match_duplicated_records() {
    let recs = random_records(4, 60, 2);
    let weighted: Vec<_> = recs.iter().enumerate().map(|(i, r)| r.clone().with_weight((1 + i % 3) as f64)).collect();
    let duplicated: Vec<_> = recs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| std::iter::repeat_n(r.clone(), 1 + i % 3))
        .collect();
    let a = fit(&weighted);
    let b = fit(&duplicated);
    assert!(max_abs_diff(a.beta.as_slice(), b.beta.as_slice()) < 1e-9);
}

/// dfbeta approximates the change in β̂ when a subject is left out.
#[test]
fn dfbeta_tracks_leave_one_out() {
    let recs = random_records(11, 300, 2);
    let full = fit(&recs);
    let dfb = dfbeta_residuals(&full, &recs).unwrap();
    let scale = dfb.amax();
    let mut worst: f64 = 0.0;
    for i in (0..recs.len()).step_by(7) {
        let rest: Vec<_> = recs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r.clone()).collect();
        let loo = fit(&rest);
        for a in 0..2 {
            let exact = full.beta[a] - loo.beta[a];
            worst = worst.max((exact - dfb[(i, a)]).abs());
        }
    }
    assert!(worst < 0.1 * scale, "worst {worst:e} vs max dfbeta {scale:e}");
}

#[test]
fn loglik_rises_along_newton_path() {
    let recs = random_records(21, 150, 2);
    let mut last = f64::NEG_INFINITY;
    for it in 0..8 {
        let opts = FitOptions {
            max_iterations: it,
            ..FitOptions::default()
        };
        let f = fit_cox(&recs, &opts).unwrap();
        assert!(f.loglik >= last - 1e-12);
        last = f.loglik;
    }
}

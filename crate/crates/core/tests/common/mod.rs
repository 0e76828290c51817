#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rakecal::data::CohortData;
use rakecal::design_bootstrap::stream_rng;
use rakecal::raking::TwoPhaseDesign;
use rakecal::simulation::{generate_cohort, CensorInterval, ScenarioConfig};
use rakecal::survival_core::SurvivalRecord;
use rand::Rng;

/// Random survival records with `k` covariates, continuous times and
/// roughly 70% events.
pub fn random_records(seed: u64, n: usize, k: usize) -> Vec<SurvivalRecord> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let cov: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let rate = (0.5 * cov[0]).exp();
            let t = -rng.random::<f64>().ln() / rate;
            SurvivalRecord::new(t, rng.random::<f64>() < 0.7, cov)
        })
        .collect()
}

/// Small simulated cohort with the shared design's error model.
pub fn sim_cohort(seed: u64, n: usize) -> CohortData {
    let mut cfg = ScenarioConfig::base(1.5f64.ln(), 0.5, 0.5, 0.15);
    cfg.n = n;
    cfg.censor_interval = CensorInterval { lower: 3.25, length: 2.0 };
    generate_cohort(&cfg, &mut stream_rng(seed, 0)).unwrap()
}

/// The same generator with every error switched off.
pub fn error_free_cohort(seed: u64, n: usize) -> CohortData {
    let mut cfg = ScenarioConfig::base(1.5f64.ln(), 0.0, 0.0, 0.0);
    cfg.n = n;
    cfg.alpha = [0.0, 1.0, 0.0];
    cfg.gamma = [0.0, 0.0, 0.0];
    cfg.censor_interval = CensorInterval { lower: 3.25, length: 2.0 };
    generate_cohort(&cfg, &mut stream_rng(seed, 0)).unwrap()
}

/// Bernoulli-style design with unequal probabilities that depend on the
/// error-prone event indicator.
pub fn unequal_design(cohort: &CohortData, seed: u64) -> TwoPhaseDesign {
    let mut rng = stream_rng(seed, 1);
    let pi: Vec<f64> = cohort.event_star.iter().map(|&d| if d { 0.4 } else { 0.15 }).collect();
    let selected = pi.iter().map(|&p| rng.random::<f64>() < p).collect();
    TwoPhaseDesign::new(selected, pi).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn column_sums(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.sum()).collect()
}

/// Random raking instance: intercept plus `k - 1` skewed auxiliaries, and
/// a design with unequal probabilities.
pub fn raking_instance(seed: u64, n: usize, k: usize) -> (TwoPhaseDesign, DMatrix<f64>) {
    let mut rng = stream_rng(seed, 7);
    let a = DMatrix::from_fn(n, k, |_, j| {
        if j == 0 {
            1.0
        } else {
            let u: f64 = rng.random();
            (-u.ln() - 1.0) * j as f64
        }
    });
    let pi: Vec<f64> = (0..n).map(|_| 0.3 + 0.5 * rng.random::<f64>()).collect();
    let mut selected: Vec<bool> = pi.iter().map(|&p| rng.random::<f64>() < p).collect();
    // Keep enough selected rows for the system to be well posed.
    for s in selected.iter_mut().take(2 * k + 2) {
        *s = true;
    }
    (TwoPhaseDesign::new(selected, pi).unwrap(), a)
}

/// `D(λ) = Σ R exp(-λ'A)/π + λ'ΣA`, evaluated independently of the solver.
pub fn dual(design: &TwoPhaseDesign, a: &DMatrix<f64>, lambda: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.nrows() {
        let eta: f64 = (0..a.ncols()).map(|j| a[(i, j)] * lambda[j]).sum();
        if design.selected[i] {
            d += (-eta).exp() / design.pi[i];
        }
        d += eta;
    }
    d
}

/// Coarse-to-fine grid search for the dual minimizer in two dimensions.
pub fn grid_minimizer(design: &TwoPhaseDesign, a: &DMatrix<f64>) -> [f64; 2] {
    let mut center = [0.0, 0.0];
    let mut half = 4.0;
    while half > 1e-6 {
        let steps = 20;
        let mut best = (f64::INFINITY, center);
        for i in -steps..=steps {
            for j in -steps..=steps {
                let l = [
                    center[0] + half * i as f64 / steps as f64,
                    center[1] + half * j as f64 / steps as f64,
                ];
                let d = dual(design, a, &l);
                if d < best.0 {
                    best = (d, l);
                }
            }
        }
        center = best.1;
        half *= 0.25;
    }
    center
}

/// Conditional-mean calibration from weighted sample moments:
/// `μ_y + Σ_yw Σ_ww⁻¹ (w − μ_w)`, returned as `[intercept, slopes...]`.
pub fn moment_form(w: &[Vec<f64>], y: &[f64], weights: &[f64]) -> Vec<f64> {
    let k = w[0].len();
    let total: f64 = weights.iter().sum();
    let mean = |f: &dyn Fn(usize) -> f64| (0..y.len()).map(|i| weights[i] * f(i)).sum::<f64>() / total;
    let mu_w: Vec<f64> = (0..k).map(|a| mean(&|i| w[i][a])).collect();
    let mu_y = mean(&|i| y[i]);
    let s_ww = DMatrix::from_fn(k, k, |a, b| mean(&|i| (w[i][a] - mu_w[a]) * (w[i][b] - mu_w[b])));
    let s_yw = DVector::from_fn(k, |a, _| mean(&|i| (y[i] - mu_y) * (w[i][a] - mu_w[a])));
    let slopes = s_ww.cholesky().unwrap().solve(&s_yw);
    let intercept = mu_y - slopes.dot(&DVector::from_vec(mu_w));
    std::iter::once(intercept).chain(slopes.iter().copied()).collect()
}

//! Validation-subset sampling plans and the stratified bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::CohortData;
use crate::error::{Error, Result};
use crate::linalg::quantile_sorted;
use crate::raking::TwoPhaseDesign;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanKind {
    /// Simple random sample of fixed size.
    Srs(usize),
    /// Independent selection with a common probability.
    Bernoulli(f64),
    /// Simple random subcohort of the given fraction plus every subject with
    /// an error-prone event.
    CaseCohort(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub kind: PlanKind,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(kind: PlanKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.kind {
            PlanKind::Srs(m) if m == 0 || m > n => {
                Err(Error::InvalidPlan(format!("SRS size {m} not in 1..={n}")))
            }
            PlanKind::Bernoulli(p) if !(p > 0.0 && p <= 1.0) => {
                Err(Error::InvalidPlan(format!("Bernoulli probability {p} not in (0, 1]")))
            }
            PlanKind::CaseCohort(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::InvalidPlan(format!("subcohort fraction {f} not in (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// Rng for stream `stream` of `seed`. Streams are independent, so the
/// `b`-th bootstrap replicate or simulation run does not depend on how the
/// others are scheduled.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the phase-two subset.
///
/// Under case-cohort sampling every error-prone case is selected with
/// probability one; non-cases enter only through the subcohort, with
/// probability equal to the subcohort fraction. Stratum labels are 1 for
/// cases and 0 otherwise.
pub fn draw_validation(cohort: &CohortData, plan: &SamplingPlan) -> Result<TwoPhaseDesign> {
    let n = cohort.len();
    plan.check(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    draw_with_rng(cohort, &plan.kind, &mut rng)
}

pub(crate) fn draw_with_rng<R: Rng>(
    cohort: &CohortData,
    kind: &PlanKind,
    rng: &mut R,
) -> Result<TwoPhaseDesign> {
    let n = cohort.len();
    SamplingPlan::new(*kind, 0).check(n)?;
    match *kind {
        PlanKind::Srs(m) => {
            let mut selected = vec![false; n];
            for i in sample(rng, n, m) {
                selected[i] = true;
            }
            TwoPhaseDesign::new(selected, vec![m as f64 / n as f64; n])
        }
        PlanKind::Bernoulli(p) => {
            let selected = (0..n).map(|_| rng.random::<f64>() < p).collect();
            TwoPhaseDesign::new(selected, vec![p; n])
        }
        PlanKind::CaseCohort(f) => {
            let m = ((f * n as f64).round() as usize).clamp(1, n);
            let mut selected = cohort.event_star.clone();
            for i in sample(rng, n, m) {
                selected[i] = true;
            }
            let pi = cohort.event_star.iter().map(|&case| if case { 1.0 } else { f }).collect();
            let strata = cohort.event_star.iter().map(|&case| u32::from(case)).collect();
            Ok(TwoPhaseDesign::new(selected, pi)?.with_strata(strata))
        }
    }
}

/// Replicate estimates and their summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// One row per successful replicate.
    pub estimates: DMatrix<f64>,
    pub se: DVector<f64>,
    /// 2.5% and 97.5% percentiles per coefficient.
    pub ci: Vec<(f64, f64)>,
    pub b_requested: usize,
    pub b_effective: usize,
}

impl BootstrapResult {
    /// `point ± z·se` with `z = 1.959964`.
    pub fn normal_interval(&self, point: &DVector<f64>) -> Vec<(f64, f64)> {
        const Z: f64 = 1.959_963_984_540_054;
        point
            .iter()
            .zip(self.se.iter())
            .map(|(b, s)| (b - Z * s, b + Z * s))
            .collect()
    }
}

/// Largest fraction of failed replicates tolerated before giving up.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Resampled row indices: with replacement, separately within the
/// validated and the unvalidated stratum, so both keep their size.
pub fn resample_rows<R: Rng>(design: &TwoPhaseDesign, rng: &mut R) -> Vec<usize> {
    let validated: Vec<usize> = design.validation_rows();
    let rest: Vec<usize> = (0..design.len()).filter(|&i| !design.selected[i]).collect();
    let mut rows = Vec::with_capacity(design.len());
    for stratum in [&validated, &rest] {
        for _ in 0..stratum.len() {
            rows.push(stratum[rng.random_range(0..stratum.len())]);
        }
    }
    rows
}

fn resample_design(design: &TwoPhaseDesign, rows: &[usize]) -> TwoPhaseDesign {
    TwoPhaseDesign {
        selected: rows.iter().map(|&i| design.selected[i]).collect(),
        pi: rows.iter().map(|&i| design.pi[i]).collect(),
        strata: design.strata.as_ref().map(|s| rows.iter().map(|&i| s[i]).collect()),
    }
}

/// Runs the estimator on replicate `index` of the stream seeded by `seed`.
pub fn bootstrap_replicate<F>(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    estimator: &F,
    seed: u64,
    index: u64,
) -> Result<DVector<f64>>
where
    F: Fn(&CohortData, &TwoPhaseDesign) -> Result<DVector<f64>>,
{
    let mut rng = stream_rng(seed, index);
    let rows = resample_rows(design, &mut rng);
    estimator(&cohort.select(&rows), &resample_design(design, &rows))
}

/// Stratified bootstrap of an arbitrary estimator.
///
/// Each replicate re-runs the whole estimator (calibration refits, raking
/// re-solve) on the resampled cohort. Failed replicates are dropped and
/// counted; more than [`MAX_FAILURE_FRACTION`] failures is an error.
pub fn stratified_bootstrap<F>(
    cohort: &CohortData,
    design: &TwoPhaseDesign,
    estimator: F,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult>
where
    F: Fn(&CohortData, &TwoPhaseDesign) -> Result<DVector<f64>> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidInput("at least two bootstrap replicates required".into()));
    }
    if design.len() != cohort.len() {
        return Err(Error::DimensionMismatch("design and cohort sizes differ".into()));
    }
    let results: Vec<Option<DVector<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|index| bootstrap_replicate(cohort, design, &estimator, seed, index).ok())
        .collect();
    let good: Vec<&DVector<f64>> = results.iter().flatten().filter(|v| v.iter().all(|x| x.is_finite())).collect();
    let failed = b - good.len();
    if good.len() < 2 || failed as f64 > MAX_FAILURE_FRACTION * b as f64 {
        return Err(Error::AllReplicatesFailed { failed, total: b });
    }
    let k = good[0].len();
    let estimates = DMatrix::from_fn(good.len(), k, |r, c| good[r][c]);
    let mut se = DVector::zeros(k);
    let mut ci = Vec::with_capacity(k);
    for c in 0..k {
        let col: Vec<f64> = estimates.column(c).iter().copied().collect();
        se[c] = shifted_sd(&col);
        let mut sorted = col;
        sorted.sort_by(f64::total_cmp);
        ci.push((quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975)));
    }
    Ok(BootstrapResult {
        estimates,
        se,
        ci,
        b_requested: b,
        b_effective: good.len(),
    })
}

/// Sample standard deviation computed on data shifted by the first value,
/// which is exactly zero for constant input.
pub(crate) fn shifted_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let shift = values[0];
    let (s, ss) = values.iter().fold((0.0, 0.0), |(s, ss), v| {
        let d = v - shift;
        (s + d, ss + d * d)
    });
    ((ss - s * s / n) / (n - 1.0)).max(0.0).sqrt()
}

//! Weighted Cox proportional-hazards fitting.
//!
//! The fitter maximizes the Breslow log partial likelihood by Newton-Raphson
//! with step-halving. Records may carry an entry time, giving counting-process
//! `(entry, time]` episodes; this is how piecewise-constant covariates are fed
//! in by the risk-set recalibration estimator.
//!
//! Covariates are centered by their weighted means before any sweep. Cox
//! coefficients are invariant to that shift, so nothing is undone afterwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One subject (or one episode of a subject) in a Cox fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    /// Left end of the at-risk interval. `None` means at risk from the origin.
    pub entry: Option<f64>,
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
    pub weight: f64,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self {
            entry: None,
            time,
            event,
            covariates,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_entry(mut self, entry: f64) -> Self {
        self.entry = Some(entry);
        self
    }
}

/// Newton-Raphson settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Score tolerance, scaled by `max(1, weighted event count)`.
    pub score_tolerance: f64,
    pub step_tolerance: f64,
    pub max_halvings: usize,
    pub initial: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            score_tolerance: 1e-9,
            step_tolerance: 1e-8,
            max_halvings: 10,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: DVector<f64>,
    pub loglik: f64,
    pub score_at_solution: DVector<f64>,
    pub information: DMatrix<f64>,
    /// One row per input record, in input order. Empty when not converged.
    pub dfbetas: DMatrix<f64>,
    pub n_events: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl CoxFit {
    /// Turns a non-converged fit into [`Error::NotConverged`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
            })
        }
    }

    /// Model-based standard errors from the inverse information.
    pub fn std_errors(&self) -> Result<DVector<f64>> {
        let inv = invert_spd(&self.information)?;
        Ok(inv.diagonal().map(f64::sqrt))
    }

    pub fn hazard_ratios(&self) -> DVector<f64> {
        self.beta.map(f64::exp)
    }
}

/// Records laid out for sweeping: centered covariates in a flat row-major
/// buffer plus stop-time and entry-time orderings.
struct Prepared {
    n: usize,
    k: usize,
    x: Vec<f64>,
    weight: Vec<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
    entry: Vec<Option<f64>>,
    /// Indices sorted by (time descending, event flag, original index).
    by_time: Vec<usize>,
    /// Records with an entry time, sorted by entry descending.
    by_entry: Vec<usize>,
    weighted_events: f64,
    n_events: usize,
}

impl Prepared {
    fn new(records: &[SurvivalRecord]) -> Result<Self> {
        let n = records.len();
        if n == 0 {
            return Err(Error::InvalidInput("no records".into()));
        }
        let k = records[0].covariates.len();
        let mut x = Vec::with_capacity(n * k);
        let mut weight = Vec::with_capacity(n);
        let mut time = Vec::with_capacity(n);
        let mut event = Vec::with_capacity(n);
        let mut entry = Vec::with_capacity(n);
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "record {i} has {} covariates, expected {k}",
                    r.covariates.len()
                )));
            }
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(Error::NonFiniteInput(format!("time of record {i}")));
            }
            if !r.weight.is_finite() || r.weight <= 0.0 {
                return Err(Error::NonFiniteInput(format!("weight of record {i}")));
            }
            if let Some(e) = r.entry {
                if !e.is_finite() || e >= r.time {
                    return Err(Error::InvalidInput(format!(
                        "record {i} has entry {e} not before time {}",
                        r.time
                    )));
                }
            }
            if r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("covariates of record {i}")));
            }
            x.extend_from_slice(&r.covariates);
            weight.push(r.weight);
            time.push(r.time);
            event.push(r.event);
            entry.push(r.entry);
        }

        let total_w: f64 = weight.iter().sum();
        for j in 0..k {
            let mean = (0..n).map(|i| weight[i] * x[i * k + j]).sum::<f64>() / total_w;
            for i in 0..n {
                x[i * k + j] -= mean;
            }
        }

        let mut by_time: Vec<usize> = (0..n).collect();
        by_time.sort_by(|&a, &b| {
            time[b]
                .total_cmp(&time[a])
                .then(event[a].cmp(&event[b]))
                .then(a.cmp(&b))
        });
        let mut by_entry: Vec<usize> = (0..n).filter(|&i| entry[i].is_some()).collect();
        by_entry.sort_by(|&a, &b| entry[b].unwrap().total_cmp(&entry[a].unwrap()).then(a.cmp(&b)));

        let n_events = event.iter().filter(|&&e| e).count();
        let weighted_events = (0..n).filter(|&i| event[i]).map(|i| weight[i]).sum();
        Ok(Self {
            n,
            k,
            x,
            weight,
            time,
            event,
            entry,
            by_time,
            by_entry,
            weighted_events,
            n_events,
        })
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Walks distinct event times from latest to earliest, maintaining the
    /// weighted risk-set sums S0, S1, S2, and hands each event time to `visit`.
    fn sweep<F>(&self, eta: &[f64], with_s2: bool, mut visit: F)
    where
        F: FnMut(&EventTime<'_>),
    {
        let k = self.k;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; if with_s2 { k * k } else { 0 }];
        let mut entry_ptr = 0;
        let mut pos = 0;
        let mut group: Vec<usize> = Vec::new();

        let accumulate = |i: usize, sign: f64, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
            let r = sign * self.weight[i] * eta[i].exp();
            let xi = self.row(i);
            *s0 += r;
            for a in 0..k {
                s1[a] += r * xi[a];
                if with_s2 {
                    for b in 0..=a {
                        s2[a * k + b] += r * xi[a] * xi[b];
                    }
                }
            }
        };

        while pos < self.n {
            let t = self.time[self.by_time[pos]];
            group.clear();
            while pos < self.n && self.time[self.by_time[pos]] == t {
                let i = self.by_time[pos];
                accumulate(i, 1.0, &mut s0, &mut s1, &mut s2);
                if self.event[i] {
                    group.push(i);
                }
                pos += 1;
            }
            if group.is_empty() {
                continue;
            }
            while entry_ptr < self.by_entry.len() {
                let i = self.by_entry[entry_ptr];
                if self.entry[i].unwrap() >= t {
                    accumulate(i, -1.0, &mut s0, &mut s1, &mut s2);
                    entry_ptr += 1;
                } else {
                    break;
                }
            }
            visit(&EventTime {
                time: t,
                events: &group,
                s0,
                s1: &s1,
                s2: &s2,
            });
        }
    }

    fn evaluate(&self, beta: &[f64], with_info: bool) -> Evaluation {
        let k = self.k;
        let eta = self.linear_predictor(beta);
        let mut loglik = 0.0;
        let mut score = vec![0.0; k];
        let mut info = vec![0.0; k * k];
        self.sweep(&eta, with_info, |et| {
            let mut d = 0.0;
            for &i in et.events {
                let w = self.weight[i];
                d += w;
                loglik += w * eta[i];
                let xi = self.row(i);
                for a in 0..k {
                    score[a] += w * xi[a];
                }
            }
            loglik -= d * et.s0.ln();
            for a in 0..k {
                let mean_a = et.s1[a] / et.s0;
                score[a] -= d * mean_a;
                if with_info {
                    for b in 0..=a {
                        let mean_b = et.s1[b] / et.s0;
                        info[a * k + b] += d * (et.s2[a * k + b] / et.s0 - mean_a * mean_b);
                    }
                }
            }
        });
        for a in 0..k {
            for b in 0..a {
                info[b * k + a] = info[a * k + b];
            }
        }
        Evaluation {
            loglik,
            score: DVector::from_vec(score),
            information: DMatrix::from_row_slice(k, k, &info),
        }
    }

    /// Per-record weighted score residuals `w_i * r_i`, rows in input order.
    fn score_residuals(&self, beta: &[f64]) -> DMatrix<f64> {
        let k = self.k;
        let eta = self.linear_predictor(beta);
        // Event times ascending with hazard increments and risk-set means.
        let mut times = Vec::new();
        let mut d_lambda = Vec::new();
        let mut means: Vec<Vec<f64>> = Vec::new();
        self.sweep(&eta, false, |et| {
            let d: f64 = et.events.iter().map(|&i| self.weight[i]).sum();
            times.push(et.time);
            d_lambda.push(d / et.s0);
            means.push(et.s1.iter().map(|v| v / et.s0).collect());
        });
        times.reverse();
        d_lambda.reverse();
        means.reverse();
        let m = times.len();
        // Cumulative hazard H and its covariate-weighted companion G.
        let mut cum_h = vec![0.0; m + 1];
        let mut cum_g = vec![0.0; (m + 1) * k];
        for j in 0..m {
            cum_h[j + 1] = cum_h[j] + d_lambda[j];
            for a in 0..k {
                cum_g[(j + 1) * k + a] = cum_g[j * k + a] + means[j][a] * d_lambda[j];
            }
        }
        // Number of event times <= t.
        let upto = |t: f64| times.partition_point(|&s| s <= t);
        let mut out = DMatrix::zeros(self.n, k);
        for i in 0..self.n {
            let xi = self.row(i);
            let hi = upto(self.time[i]);
            let lo = self.entry[i].map_or(0, upto);
            let risk = eta[i].exp();
            let w = self.weight[i];
            let own = if self.event[i] {
                Some(times.partition_point(|&s| s < self.time[i]))
            } else {
                None
            };
            for a in 0..k {
                let mut r = -risk
                    * (xi[a] * (cum_h[hi] - cum_h[lo]) - (cum_g[hi * k + a] - cum_g[lo * k + a]));
                if let Some(j) = own {
                    r += xi[a] - means[j][a];
                }
                out[(i, a)] = w * r;
            }
        }
        out
    }
}

struct EventTime<'a> {
    time: f64,
    events: &'a [usize],
    s0: f64,
    s1: &'a [f64],
    s2: &'a [f64],
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

pub(crate) fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularInformation)
}

fn check_beta(beta: &[f64], k: usize) -> Result<()> {
    if beta.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, records have {k} covariates",
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteInput("beta".into()));
    }
    Ok(())
}

/// Weighted Breslow log partial likelihood at `beta`.
pub fn log_partial_likelihood(beta: &[f64], records: &[SurvivalRecord]) -> Result<f64> {
    let prep = Prepared::new(records)?;
    check_beta(beta, prep.k)?;
    Ok(prep.evaluate(beta, false).loglik)
}

/// Score vector and observed information at `beta`, from one sweep over the
/// event times.
pub fn score_and_information(
    beta: &[f64],
    records: &[SurvivalRecord],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let prep = Prepared::new(records)?;
    check_beta(beta, prep.k)?;
    let ev = prep.evaluate(beta, true);
    Ok((ev.score, ev.information))
}

/// Fits the weighted Cox model.
///
/// A fit that hits the iteration cap is returned with `converged = false`;
/// use [`CoxFit::require_converged`] where that should be an error.
pub fn fit_cox(records: &[SurvivalRecord], options: &FitOptions) -> Result<CoxFit> {
    let prep = Prepared::new(records)?;
    if prep.n_events == 0 {
        return Err(Error::NoEvents);
    }
    let k = prep.k;
    let mut beta = match &options.initial {
        Some(init) => {
            check_beta(init, k)?;
            init.clone()
        }
        None => vec![0.0; k],
    };
    let score_tol = options.score_tolerance * prep.weighted_events.max(1.0);
    let mut current = prep.evaluate(&beta, true);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let chol = current
            .information
            .clone()
            .cholesky()
            .ok_or(Error::SingularInformation)?;
        let step = chol.solve(&current.score);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let ev = prep.evaluate(&trial, true);
            if ev.loglik.is_finite() && ev.loglik >= current.loglik - 1e-12 * current.loglik.abs() {
                accepted = Some((trial, ev));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, ev)) = accepted else {
            // No ascent available: we are at the optimum up to rounding.
            converged = current.score.amax() < score_tol;
            break;
        };
        let max_step = step.amax() * scale;
        beta = trial;
        current = ev;
        if max_step < options.step_tolerance && current.score.amax() < score_tol {
            converged = true;
            break;
        }
    }

    let beta_v = DVector::from_vec(beta.clone());
    let dfbetas = if converged {
        let inv = invert_spd(&current.information)?;
        prep.score_residuals(&beta) * inv
    } else {
        DMatrix::zeros(0, k)
    };
    Ok(CoxFit {
        beta: beta_v,
        loglik: current.loglik,
        score_at_solution: current.score,
        information: current.information,
        dfbetas,
        n_events: prep.n_events,
        converged,
        iterations,
    })
}

/// Influence (dfbeta) residuals: row `i` is the inverse information times the
/// weighted score residual of record `i`, evaluated at `fit.beta`.
pub fn dfbeta_residuals(fit: &CoxFit, records: &[SurvivalRecord]) -> Result<DMatrix<f64>> {
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    let prep = Prepared::new(records)?;
    check_beta(fit.beta.as_slice(), prep.k)?;
    let inv = invert_spd(&fit.information)?;
    Ok(prep.score_residuals(fit.beta.as_slice()) * inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_group() -> Vec<SurvivalRecord> {
        (1..=8)
            .map(|t| SurvivalRecord::new(t as f64, true, vec![if t <= 4 { 0.0 } else { 1.0 }]))
            .collect()
    }

    #[test]
    fn zero_iterations_returns_start() {
        let opts = FitOptions {
            max_iterations: 0,
            ..Default::default()
        };
        let fit = fit_cox(&two_group(), &opts).unwrap();
        assert_eq!(fit.beta[0], 0.0);
        assert!(!fit.converged);
        assert!(fit.clone().require_converged().is_err());
    }

    #[test]
    fn no_events_is_an_error() {
        let recs = vec![
            SurvivalRecord::new(1.0, false, vec![0.3]),
            SurvivalRecord::new(2.0, false, vec![0.1]),
        ];
        assert_eq!(fit_cox(&recs, &FitOptions::default()), Err(Error::NoEvents));
    }

    #[test]
    fn zero_column_is_singular() {
        let recs: Vec<_> = two_group()
            .into_iter()
            .map(|mut r| {
                r.covariates.push(0.0);
                r
            })
            .collect();
        assert_eq!(
            fit_cox(&recs, &FitOptions::default()),
            Err(Error::SingularInformation)
        );
    }

    #[test]
    fn rejects_bad_input() {
        let mut recs = two_group();
        recs[2].weight = 0.0;
        assert!(matches!(fit_cox(&recs, &FitOptions::default()), Err(Error::NonFiniteInput(_))));
        let mut recs = two_group();
        recs[1].covariates[0] = f64::NAN;
        assert!(matches!(fit_cox(&recs, &FitOptions::default()), Err(Error::NonFiniteInput(_))));
        let mut recs = two_group();
        recs[1].covariates.push(1.0);
        assert!(matches!(fit_cox(&recs, &FitOptions::default()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn score_at_zero_is_observed_minus_risk_set_mean() {
        let recs = vec![
            SurvivalRecord::new(1.0, true, vec![2.0]),
            SurvivalRecord::new(2.0, false, vec![-1.0]),
            SurvivalRecord::new(3.0, true, vec![0.5]),
            SurvivalRecord::new(4.0, true, vec![1.5]),
        ];
        // Risk sets: {all}, {0.5, 1.5}, {1.5}.
        let expected = (2.0 - 3.0 / 4.0) + (0.5 - 1.0) + 0.0;
        let (score, _) = score_and_information(&[0.0], &recs).unwrap();
        assert!((score[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn single_event_dfbeta_matches_hand_expansion() {
        let recs = vec![
            SurvivalRecord::new(1.0, false, vec![0.2, 1.0]),
            SurvivalRecord::new(2.0, true, vec![1.0, -0.5]),
            SurvivalRecord::new(3.0, false, vec![-0.7, 0.4]),
            SurvivalRecord::new(4.0, false, vec![0.3, 2.0]),
        ];
        // With one event the MLE does not exist; evaluate at a fixed beta by
        // building the fit by hand.
        let beta = [0.4, -0.3];
        let (score, info) = score_and_information(&beta, &recs).unwrap();
        let fit = CoxFit {
            beta: DVector::from_row_slice(&beta),
            loglik: 0.0,
            score_at_solution: score,
            information: info.clone(),
            dfbetas: DMatrix::zeros(0, 2),
            n_events: 1,
            converged: true,
            iterations: 0,
        };
        let dfb = dfbeta_residuals(&fit, &recs).unwrap();
        let at_risk = &recs[1..];
        let wts: Vec<f64> = at_risk
            .iter()
            .map(|r| (beta[0] * r.covariates[0] + beta[1] * r.covariates[1]).exp())
            .collect();
        let s0: f64 = wts.iter().sum();
        let mean: Vec<f64> = (0..2)
            .map(|a| at_risk.iter().zip(&wts).map(|(r, w)| w * r.covariates[a]).sum::<f64>() / s0)
            .collect();
        // Subject 1 is in its own risk set, so the compensator takes a share.
        let keep = 1.0 - wts[0] / s0;
        let resid = DVector::from_vec(vec![(1.0 - mean[0]) * keep, (-0.5 - mean[1]) * keep]);
        let expected = info.cholesky().unwrap().inverse() * resid;
        for a in 0..2 {
            assert!((dfb[(1, a)] - expected[a]).abs() < 1e-12);
        }
    }
}

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::config::{CensorInterval, ScenarioConfig};
use crate::design_bootstrap::stream_rng;
use crate::error::{Error, Result};

/// Subjects in the pre-run used to tune the censoring interval.
pub const TUNING_SUBJECTS: usize = 100_000;

/// Interval length used when the config does not fix one: 2 for light
/// censoring, 0.4 for heavy.
pub fn default_length(target: f64) -> f64 {
    if target <= 0.5 {
        2.0
    } else {
        0.4
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedCensoring {
    pub interval: CensorInterval,
    pub achieved: f64,
}

/// Common random numbers for the pre-run: event times and the uniform
/// position of each censoring time inside its interval.
struct PreRun {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl PreRun {
    fn new(config: &ScenarioConfig, subjects: usize) -> Self {
        let mut rng = stream_rng(config.seed, u64::MAX);
        let rho = config.rho_xz;
        let rho_c = (1.0 - rho * rho).sqrt();
        let mut t = Vec::with_capacity(subjects);
        let mut v = Vec::with_capacity(subjects);
        for _ in 0..subjects {
            let x: f64 = StandardNormal.sample(&mut rng);
            let z = 2.0 + rho * x + rho_c * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let rate = config.lambda0 * (config.beta_x * x + config.beta_z * z).exp();
            t.push(Distribution::<f64>::sample(&Exp1, &mut rng) / rate);
            v.push(rng.random::<f64>());
        }
        Self { t, v }
    }

    fn censored_fraction(&self, lower: f64, length: f64) -> f64 {
        let censored = self
            .t
            .iter()
            .zip(&self.v)
            .filter(|(&t, &v)| t > lower + length * v)
            .count();
        censored as f64 / self.t.len() as f64
    }
}

/// Finds the lower endpoint of the uniform censoring interval that gives
/// `target` censoring, keeping the interval length fixed.
///
/// Uses the config's interval length if it has one, else
/// [`default_length`]. `target = 0` returns the no-censoring interval.
pub fn tune_censoring(config: &ScenarioConfig, target: f64, tolerance: f64) -> Result<TunedCensoring> {
    tune_with_subjects(config, target, tolerance, TUNING_SUBJECTS)
}

pub fn tune_with_subjects(
    config: &ScenarioConfig,
    target: f64,
    tolerance: f64,
    subjects: usize,
) -> Result<TunedCensoring> {
    if target == 0.0 {
        return Ok(TunedCensoring {
            interval: CensorInterval::none(),
            achieved: 0.0,
        });
    }
    if !(0.0 < target && target < 1.0) {
        return Err(Error::InvalidConfig(format!("censoring target {target} outside (0, 1)")));
    }
    let length = if config.censor_interval.is_none() || config.censor_interval.length <= 0.0 {
        default_length(target)
    } else {
        config.censor_interval.length
    };
    let pre = PreRun::new(config, subjects);
    let f = |a: f64| pre.censored_fraction(a, length);
    let mut lo = 0.0;
    let high_rate = f(lo);
    if high_rate < target - tolerance {
        return Err(Error::NotBracketed {
            target,
            low: 0.0,
            high: high_rate,
        });
    }
    let mut hi = 1.0;
    while f(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NotBracketed {
                target,
                low: f(hi),
                high: high_rate,
            });
        }
    }
    // The fraction falls as the interval moves right.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    let (a, rate) = [lo, hi]
        .into_iter()
        .map(|a| (a, f(a)))
        .min_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()))
        .expect("two candidates");
    if (rate - target).abs() > tolerance {
        return Err(Error::NotBracketed {
            target,
            low: f(hi),
            high: f(lo),
        });
    }
    Ok(TunedCensoring {
        interval: CensorInterval { lower: a, length },
        achieved: rate,
    })
}

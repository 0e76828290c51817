//! Cohort generation under the additive error structure, with optional
//! event misclassification.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use super::config::{ErrorDistribution, ScenarioConfig};
use crate::data::CohortData;
use crate::error::{Error, Result};

/// Draws `(ε, ν)` pairs with the configured covariance.
#[derive(Debug, Clone)]
pub struct ErrorSampler {
    sd_eps: f64,
    sd_nu: f64,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Normal {
        /// `ν = a ε/σ_ε + b Z2`.
        a: f64,
        b: f64,
    },
    GammaMixture {
        mix_p: f64,
        gamma: Gamma,
        shape: f64,
        /// Gaussian-copula correlation giving the target gamma correlation.
        copula_r: f64,
    },
}

impl ErrorSampler {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        let sd_eps = config.sigma2_eps.sqrt();
        let sd_nu = config.sigma2_nu.sqrt();
        let rho = if sd_eps > 0.0 && sd_nu > 0.0 {
            (config.sigma_eps_nu / (sd_eps * sd_nu)).clamp(-1.0, 1.0)
        } else if config.sigma_eps_nu != 0.0 {
            return Err(Error::InvalidConfig("nonzero error covariance with a zero variance".into()));
        } else {
            0.0
        };
        let kind = match config.error_dist {
            ErrorDistribution::Normal => SamplerKind::Normal {
                a: rho * sd_nu,
                b: sd_nu * (1.0 - rho * rho).max(0.0).sqrt(),
            },
            ErrorDistribution::GammaMixture { mix_p, shape } => {
                let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                SamplerKind::GammaMixture {
                    mix_p,
                    gamma,
                    shape,
                    copula_r: copula_correlation(shape, rho)?,
                }
            }
        };
        Ok(Self { sd_eps, sd_nu, kind })
    }

    /// One `(ε, ν)` draw, or `None` for a record measured without error
    /// (the point mass of the gamma mixture).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<(f64, f64)> {
        match &self.kind {
            SamplerKind::Normal { a, b } => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                Some((self.sd_eps * z1, a * z1 + b * z2))
            }
            SamplerKind::GammaMixture {
                mix_p,
                gamma,
                shape,
                copula_r,
            } => {
                let error_free = rng.random::<f64>() < *mix_p;
                let w1: f64 = StandardNormal.sample(rng);
                let w2: f64 = StandardNormal.sample(rng);
                if error_free {
                    return None;
                }
                let w2 = copula_r * w1 + (1.0 - copula_r * copula_r).max(0.0).sqrt() * w2;
                let g1 = standardized_gamma(gamma, *shape, w1);
                let g2 = standardized_gamma(gamma, *shape, w2);
                Some((self.sd_eps * g1, self.sd_nu * g2))
            }
        }
    }
}

/// Gamma variate with unit variance and zero mean, as a function of a
/// standard normal through the probability integral transform.
fn standardized_gamma(gamma: &Gamma, shape: f64, w: f64) -> f64 {
    let u = normal_cdf(w).clamp(1e-300, 1.0 - 1e-16);
    (gamma.inverse_cdf(u) - shape) / shape.sqrt()
}

fn normal_cdf(w: f64) -> f64 {
    Normal::standard().cdf(w)
}

/// Gauss-Hermite nodes and weights for `∫ f(w) φ(w) dw` (probabilists'
/// form), by the Golub-Welsch eigenvalue method.
pub(crate) fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Correlation of the standardized gamma pair under Gaussian copula
/// correlation `r`, by two-dimensional Gauss-Hermite quadrature.
fn gamma_pair_correlation(gamma: &Gamma, shape: f64, r: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let s = (1.0 - r * r).max(0.0).sqrt();
    let g: Vec<f64> = nodes.iter().map(|&w| standardized_gamma(gamma, shape, w)).collect();
    let mut cov = 0.0;
    for (i, (&w1, &p1)) in nodes.iter().zip(weights).enumerate() {
        let inner: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(&v, &p2)| p2 * standardized_gamma(gamma, shape, r * w1 + s * v))
            .sum();
        cov += p1 * g[i] * inner;
    }
    // Normalize by the quadrature's own variance so discretization error
    // in the marginal cancels.
    let mean: f64 = g.iter().zip(weights).map(|(a, p)| a * p).sum();
    let var: f64 = g.iter().zip(weights).map(|(a, p)| p * (a - mean).powi(2)).sum();
    (cov - mean * mean) / var
}

/// Copula correlation that makes the gamma components correlate at `target`.
pub fn copula_correlation(shape: f64, target: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (nodes, weights) = gauss_hermite(80);
    let f = |r: f64| gamma_pair_correlation(&gamma, shape, r, &nodes, &weights);
    let (mut lo, mut hi) = if target > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo.min(f_hi) <= target && target <= f_lo.max(f_hi)) {
        return Err(Error::InvalidConfig(format!(
            "error correlation {target} not attainable with gamma shape {shape}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Phase-one cohort with the truth kept for every subject.
///
/// `(X, Z)` is bivariate normal with means (0, 2), unit variances and
/// correlation ρ; `T` is exponential with rate `λ0 exp(β_X X + β_Z Z)`;
/// censoring is uniform on the configured interval. Then
/// `X* = α0 + α1 X + α2 Z + ε` and `U* = U + γ0 + γ1 X + γ2 Z + ν`, with
/// negative `U*` reflected across zero, and `Δ*` optionally misclassified.
///
/// Under the gamma mixture a record is error-free (`X* = X`, `U* = U`)
/// with probability `mix_p`; otherwise `(ε, ν)` are mean-zero shifted
/// gammas with the configured variances and covariance.
pub fn generate_cohort<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> Result<CohortData> {
    config.validate()?;
    let sampler = ErrorSampler::new(config)?;
    generate_with_sampler(config, &sampler, rng)
}

pub(crate) fn generate_with_sampler<R: Rng>(
    config: &ScenarioConfig,
    sampler: &ErrorSampler,
    rng: &mut R,
) -> Result<CohortData> {
    let n = config.n;
    let rho = config.rho_xz;
    let rho_c = (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut x_star = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut time_star = Vec::with_capacity(n);
    let mut event_star = Vec::with_capacity(n);
    let [a0, a1, a2] = config.alpha;
    let [g0, g1, g2] = config.gamma;
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(rng);
        let zi = 2.0 + rho * xi + rho_c * Distribution::<f64>::sample(&StandardNormal, rng);
        let rate = config.lambda0 * (config.beta_x * xi + config.beta_z * zi).exp();
        let t = Distribution::<f64>::sample(&Exp1, rng) / rate;
        let c = if config.censor_interval.is_none() {
            f64::INFINITY
        } else {
            config.censor_interval.lower + config.censor_interval.length * rng.random::<f64>()
        };
        let (u, d) = if t <= c { (t, true) } else { (c, false) };
        let (xs, us) = match sampler.sample(rng) {
            Some((eps, nu)) => (a0 + a1 * xi + a2 * zi + eps, (u + g0 + g1 * xi + g2 * zi + nu).abs()),
            None => (xi, u),
        };
        let ds = match config.misclass {
            Some(m) => {
                let flip = rng.random::<f64>() < if d { 1.0 - m.sensitivity } else { 1.0 - m.specificity };
                d ^ flip
            }
            None => d,
        };
        x.push(xi);
        z.push(zi);
        x_star.push(xs);
        time.push(u);
        event.push(d);
        time_star.push(us);
        event_star.push(ds);
    }
    CohortData::new(
        time_star,
        event_star,
        DMatrix::from_vec(n, 1, x_star),
        DMatrix::from_vec(n, 1, z),
        time,
        event,
        DMatrix::from_vec(n, 1, x),
        vec![true; n],
    )
}

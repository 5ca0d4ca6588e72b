//! Monte Carlo check that the KL divergence between products of identical
//! per-step factors is the per-step KL times the number of steps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, mean, population_variance, SplitSeed};

use super::report::Estimate;

/// Largest weight-vector dimension accepted by the check.
pub const MAX_KL_DIMENSION: usize = 8;

/// Per-row approximating distribution: `p · N(0, σ²I) + (1 - p) · N(Θ, σ²I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub p: f64,
    pub theta: Vec<f64>,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlCheck {
    pub steps: usize,
    pub mc_samples: usize,
    /// KL between the `steps`-fold products.
    pub product: Estimate,
    /// KL between single factors, from independent draws.
    pub single: Estimate,
    /// `product / single`; `None` when the single-factor estimate is zero.
    pub ratio: Option<f64>,
    pub ratio_per_step: Option<f64>,
    /// Delta-method standard error of `ratio`.
    pub ratio_se: Option<f64>,
    /// Exact single-factor KL when `p = 0` (pure Gaussian).
    pub closed_form_single: Option<f64>,
}

const LN_2PI: f64 = 1.8378770664093453;

fn log_normal(w: &[f64], centre: Option<&[f64]>, sigma: f64) -> f64 {
    let d = w.len() as f64;
    let sq: f64 = match centre {
        Some(c) => w.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
        None => w.iter().map(|a| a * a).sum(),
    };
    -0.5 * d * (LN_2PI + 2.0 * sigma.ln()) - 0.5 * sq / (sigma * sigma)
}

impl GaussianMixture {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::domain(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.theta.is_empty() || self.theta.len() > MAX_KL_DIMENSION {
            return Err(Error::domain(format!(
                "dimension must be between 1 and {MAX_KL_DIMENSION}, got {}",
                self.theta.len()
            )));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("theta must be finite"));
        }
        Ok(())
    }

    fn log_density(&self, w: &[f64]) -> Result<f64> {
        log_sum_exp(&[
            self.p.ln() + log_normal(w, None, self.sigma),
            (-self.p).ln_1p() + log_normal(w, Some(&self.theta), self.sigma),
        ])
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let zero = rng.random::<f64>() < self.p;
        for (o, t) in out.iter_mut().zip(&self.theta) {
            let z: f64 = rng.sample(StandardNormal);
            *o = if zero { 0.0 } else { *t } + self.sigma * z;
        }
    }

    /// `KL(q || N(0, σ_p² I))` in closed form, defined only when `p = 0`.
    pub fn gaussian_kl(&self, sigma_prior: f64) -> Option<f64> {
        (self.p == 0.0).then(|| {
            self.theta
                .iter()
                .map(|t| {
                    (sigma_prior / self.sigma).ln()
                        + (self.sigma * self.sigma + t * t) / (2.0 * sigma_prior * sigma_prior)
                        - 0.5
                })
                .sum()
        })
    }
}

fn estimate_kl(
    q: &GaussianMixture,
    sigma_prior: f64,
    steps: usize,
    mc_samples: usize,
    seed: &SplitSeed,
) -> Result<Estimate> {
    let mut rng = seed.rng();
    let mut w = vec![0.0; q.theta.len()];
    let mut values = Vec::with_capacity(mc_samples);
    for _ in 0..mc_samples {
        let mut total = 0.0;
        for _ in 0..steps {
            q.sample(&mut rng, &mut w);
            total += q.log_density(&w)? - log_normal(&w, None, sigma_prior);
        }
        values.push(total);
    }
    Ok(Estimate {
        value: mean(&values),
        std_error: (population_variance(&values) / mc_samples as f64).sqrt(),
    })
}

/// Estimates `KL(Π_t q || Π_t p')` over `steps` factors and `KL(q || p')`
/// with independent draws (`seed.child(0)` and `seed.child(1)`), where
/// `p' = N(0, σ_p² I)`.
pub fn kl_factorization_check(
    q: &GaussianMixture,
    sigma_prior: f64,
    steps: usize,
    mc_samples: usize,
    seed: &SplitSeed,
) -> Result<KlCheck> {
    q.validate()?;
    if !(sigma_prior > 0.0 && sigma_prior.is_finite()) {
        return Err(Error::domain(format!(
            "prior sigma must be positive, got {sigma_prior}"
        )));
    }
    if steps == 0 || mc_samples < 2 {
        return Err(Error::domain("need at least one step and two samples"));
    }
    let product = estimate_kl(q, sigma_prior, steps, mc_samples, &seed.child(0))?;
    let single = estimate_kl(q, sigma_prior, 1, mc_samples, &seed.child(1))?;
    let ratio = (single.value != 0.0).then(|| product.value / single.value);
    let ratio_se = ratio.map(|r| {
        r.abs()
            * ((product.std_error / product.value).powi(2)
                + (single.std_error / single.value).powi(2))
            .sqrt()
    });
    Ok(KlCheck {
        steps,
        mc_samples,
        product,
        single,
        ratio,
        ratio_per_step: ratio.map(|r| r / steps as f64),
        ratio_se,
        closed_form_single: q.gaussian_kl(sigma_prior),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_distributions_have_zero_kl() {
        let q = GaussianMixture {
            p: 0.4,
            theta: vec![0.0, 0.0],
            sigma: 1.3,
        };
        let r = kl_factorization_check(&q, 1.3, 5, 200, &SplitSeed::new(2)).unwrap();
        assert!(r.product.value.abs() < 1e-12);
        assert!(r.single.value.abs() < 1e-12);
    }

    #[test]
    fn closed_form_gaussian() {
        let q = GaussianMixture {
            p: 0.0,
            theta: vec![1.0],
            sigma: 1.0,
        };
        assert_eq!(q.gaussian_kl(1.0), Some(0.5));
        let r = kl_factorization_check(&q, 1.0, 3, 20_000, &SplitSeed::new(9)).unwrap();
        assert!((r.product.value - 1.5).abs() < 3.0 * r.product.std_error);
        assert!((r.single.value - 0.5).abs() < 3.0 * r.single.std_error);
    }

    #[test]
    fn rejects_degenerate_scales() {
        let mut q = GaussianMixture {
            p: 0.0,
            theta: vec![1.0],
            sigma: 0.0,
        };
        let seed = SplitSeed::new(0);
        assert!(kl_factorization_check(&q, 1.0, 1, 10, &seed).is_err());
        q.sigma = 1.0;
        assert!(kl_factorization_check(&q, 0.0, 1, 10, &seed).is_err());
        q.theta = vec![0.0; 9];
        assert!(kl_factorization_check(&q, 1.0, 1, 10, &seed).is_err());
    }
}

//! Monte Carlo decomposition of the MAP lower bound into the data term, the
//! power-mean term and the normaliser term, with delta-method errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{power_mean_aggregate, PredictionMatrix, ALPHA_SWITCH};
use crate::model::{Example, Model};
use crate::numeric::{mean, population_variance, SplitSeed};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Estimates for one prediction target from a shared set of samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetTerms {
    /// Mean over samples of `ln p_s(y)`.
    pub data: Estimate,
    /// `ln M_alpha(y)`.
    pub power_mean: Estimate,
    /// `ln Z`.
    pub log_z: Estimate,
}

/// Per-sample linearisations of the three estimators. Their sample means
/// are ~0 (or the estimate itself for the data term); the standard error of
/// each estimator is `sd / sqrt(S)`.
struct Influence {
    data: Vec<f64>,
    power_mean: Vec<f64>,
    log_z: Vec<f64>,
}

fn influence(p: &PredictionMatrix, alpha: f64, target: usize) -> Result<(TargetTerms, Influence)> {
    if target >= p.classes() {
        return Err(Error::Input(format!(
            "target {target} outside {} classes",
            p.classes()
        )));
    }
    let agg = power_mean_aggregate(p, alpha)?;
    let q: Vec<f64> = agg.normalized_log.iter().map(|v| v.exp()).collect();
    let geometric = alpha < ALPHA_SWITCH;
    let mut inf = Influence {
        data: Vec::with_capacity(p.samples()),
        power_mean: Vec::with_capacity(p.samples()),
        log_z: Vec::with_capacity(p.samples()),
    };
    for row in p.rows() {
        inf.data.push(row[target]);
        if geometric {
            inf.power_mean.push(row[target]);
            inf.log_z.push(q.iter().zip(row).map(|(q, lp)| q * lp).sum());
        } else {
            // p^alpha / E p^alpha, whose mean is 1
            let ratio = |c: usize| (alpha * (row[c] - agg.unnormalized_log[c])).exp();
            inf.power_mean.push(ratio(target) / alpha);
            inf.log_z.push((0..q.len()).map(|c| q[c] * ratio(c)).sum::<f64>() / alpha);
        }
    }
    let se = |v: &[f64]| (population_variance(v) / v.len() as f64).sqrt();
    let terms = TargetTerms {
        data: Estimate {
            value: mean(&inf.data),
            std_error: se(&inf.data),
        },
        power_mean: Estimate {
            value: agg.unnormalized_log[target],
            std_error: se(&inf.power_mean),
        },
        log_z: Estimate {
            value: agg.log_z,
            std_error: se(&inf.log_z),
        },
    };
    Ok((terms, inf))
}

/// Shared-sample estimates of `E ln p(y)`, `ln M_alpha(y)` and `ln Z` from
/// one prediction matrix.
pub fn mc_terms(p: &PredictionMatrix, alpha: f64, target: usize) -> Result<TargetTerms> {
    Ok(influence(p, alpha, target)?.0)
}

/// Dataset-level decomposition of the lower bound.
///
/// `data_term_mc + prior_term` lower-bounds the log posterior;
/// `power_mean_term - log_z_term` is the log-likelihood of the normalised
/// power-mean model, and `jensen_gap = power_mean_term - data_term_mc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub lambda: f64,
    pub n_samples: usize,
    pub targets: usize,
    pub data_term_mc: f64,
    pub data_term_se: f64,
    pub power_mean_term: f64,
    pub power_mean_se: f64,
    pub log_z_term: f64,
    pub log_z_se: f64,
    pub jensen_gap: f64,
    pub jensen_gap_se: f64,
    /// Log Gaussian prior up to a constant, `-½ · wd · ‖Θ‖²`.
    pub prior_term: f64,
}

/// Estimates the bound terms with one common set of `samples` mask draws
/// per example (example `i`, sample `s` seeded by `seed.child(i).child(s)`),
/// temperature 1.
///
/// Standard errors treat examples as independent; within an example the
/// per-sample contributions of all its targets are summed first, so
/// targets that share masks are handled correctly.
pub fn bound_report(
    model: &Model,
    dataset: &[Example],
    alpha: f64,
    lambda: f64,
    samples: usize,
    seed: &SplitSeed,
    weight_decay: f64,
) -> Result<BoundReport> {
    if dataset.is_empty() {
        return Err(Error::domain("bound report needs a non-empty dataset"));
    }
    if samples == 0 {
        return Err(Error::domain("bound report needs at least one sample"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    crate::model::check_multiplier(lambda)?;
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::domain("weight decay must be finite and non-negative"));
    }
    let classes = model.classes();
    let mut report = BoundReport {
        alpha,
        lambda,
        n_samples: samples,
        targets: 0,
        data_term_mc: 0.0,
        data_term_se: 0.0,
        power_mean_term: 0.0,
        power_mean_se: 0.0,
        log_z_term: 0.0,
        log_z_se: 0.0,
        jensen_gap: 0.0,
        jensen_gap_se: 0.0,
        prior_term: -0.5 * weight_decay * model.params.sum_squares(),
    };
    let (mut var_d, mut var_m, mut var_z, mut var_g) = (0.0, 0.0, 0.0, 0.0);
    for (i, ex) in dataset.iter().enumerate() {
        let input = ex.input();
        let targets = ex.targets();
        if targets.is_empty() {
            return Err(Error::Input(format!("example {i} has no prediction target")));
        }
        let steps = input.steps();
        let base = seed.child(i as u64);
        let mut per_step: Vec<Vec<f64>> = vec![Vec::with_capacity(samples * classes); steps];
        crate::family::for_each_sample(
            samples,
            |s| crate::family::sample_log_probs(model, input, lambda, 1.0, &base.child(s as u64)),
            |_, lps| {
                for (dst, row) in per_step.iter_mut().zip(lps) {
                    dst.extend_from_slice(&row);
                }
            },
        )?;
        let mut sum_d = vec![0.0; samples];
        let mut sum_m = vec![0.0; samples];
        let mut sum_z = vec![0.0; samples];
        for (data, &y) in per_step.into_iter().zip(targets) {
            let p = PredictionMatrix::new(samples, classes, data)?;
            let (terms, inf) = influence(&p, alpha, y)?;
            report.targets += 1;
            report.data_term_mc += terms.data.value;
            report.power_mean_term += terms.power_mean.value;
            report.log_z_term += terms.log_z.value;
            for s in 0..samples {
                sum_d[s] += inf.data[s];
                sum_m[s] += inf.power_mean[s];
                sum_z[s] += inf.log_z[s];
            }
        }
        let gap: Vec<f64> = sum_m.iter().zip(&sum_d).map(|(m, d)| m - d).collect();
        let n = samples as f64;
        var_d += population_variance(&sum_d) / n;
        var_m += population_variance(&sum_m) / n;
        var_z += population_variance(&sum_z) / n;
        var_g += population_variance(&gap) / n;
    }
    report.data_term_se = var_d.sqrt();
    report.power_mean_se = var_m.sqrt();
    report.log_z_se = var_z.sqrt();
    report.jensen_gap = report.power_mean_term - report.data_term_mc;
    report.jensen_gap_se = var_g.sqrt();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, DropoutSpec, ModelParams};

    #[test]
    fn identical_samples_have_zero_error() {
        let p = PredictionMatrix::from_probs(&[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        for alpha in [0.0, 0.5, 1.0] {
            let t = mc_terms(&p, alpha, 1).unwrap();
            assert!((t.data.value - 0.7f64.ln()).abs() < 1e-15);
            assert_eq!(t.power_mean.value, t.data.value);
            assert_eq!(t.log_z.value, 0.0);
            assert!(t.data.std_error == 0.0 && t.power_mean.std_error < 1e-15);
            assert!(t.log_z.std_error < 1e-15);
        }
    }

    #[test]
    fn two_sample_terms() {
        let p = PredictionMatrix::from_probs(&[vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let t = mc_terms(&p, 0.0, 0).unwrap();
        assert!((t.data.value - 0.5 * (0.2f64.ln() + 0.6f64.ln())).abs() < 1e-15);
        assert!((t.log_z.value - 0.912095586463013478f64.ln()).abs() < 1e-12);
        let t = mc_terms(&p, 1.0, 0).unwrap();
        assert!((t.power_mean.value - 0.4f64.ln()).abs() < 1e-15);
        // sd(p) / (sqrt(S) m) = 0.2 / (sqrt 2 · 0.4)
        assert!((t.power_mean.std_error - 0.2 / (2f64.sqrt() * 0.4)).abs() < 1e-12);
        // Z = 1 for every sample at alpha = 1
        assert!(t.log_z.std_error < 1e-12);
    }

    #[test]
    fn no_dropout_means_no_gap() {
        let arch = Architecture::Mlp {
            inputs: 2,
            hidden: vec![3],
            classes: 2,
        };
        let params = ModelParams::init(arch.clone(), &SplitSeed::new(4)).unwrap();
        let model = Model::new(params, DropoutSpec::uniform(&arch.mask_sites(), 0.0)).unwrap();
        let data = vec![
            Example::Labeled {
                features: vec![0.5, -1.0],
                label: 0,
            },
            Example::Labeled {
                features: vec![1.5, 0.2],
                label: 1,
            },
        ];
        let r = bound_report(&model, &data, 0.5, 1.0, 16, &SplitSeed::new(1), 0.1).unwrap();
        assert_eq!(r.jensen_gap, 0.0);
        assert_eq!(r.log_z_term, 0.0);
        assert_eq!(r.targets, 2);
        assert!(r.prior_term < 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let arch = Architecture::Mlp {
            inputs: 1,
            hidden: vec![],
            classes: 2,
        };
        let model = Model::new(
            ModelParams::zeros(arch.clone()).unwrap(),
            DropoutSpec::uniform(&arch.mask_sites(), 0.5),
        )
        .unwrap();
        let ex = vec![Example::Labeled {
            features: vec![1.0],
            label: 0,
        }];
        let seed = SplitSeed::new(0);
        assert!(bound_report(&model, &[], 0.5, 1.0, 4, &seed, 0.0).is_err());
        assert!(bound_report(&model, &ex, 1.5, 1.0, 4, &seed, 0.0).is_err());
        assert!(bound_report(&model, &ex, 0.5, 1.0, 0, &seed, 0.0).is_err());
        assert!(bound_report(&model, &ex, 0.5, 1.0, 4, &seed, -1.0).is_err());
    }
}

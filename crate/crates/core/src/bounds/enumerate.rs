//! Exact expectations over every dropout mask configuration of a small
//! network, used as the oracle for Monte Carlo estimates and bound chains.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::ALPHA_SWITCH;
use crate::model::{forward_logits, Input, MaskSet, Model, RowScales, Sharing, SiteMask};
use crate::numeric::{log_softmax_with_temperature, log_sum_exp};

/// Enumeration cost guard: at most `2^20` configurations.
pub const MAX_ENUMERATED_ROWS: usize = 20;

/// Every mask configuration with its exact probability and the resulting
/// prediction at the last step of the input.
#[derive(Clone, Debug)]
pub struct MaskEnumeration {
    droppable: usize,
    log_weights: Vec<f64>,
    logits: Vec<Vec<f64>>,
    log_probs: Vec<Vec<f64>>,
}

/// Exact per-class quantities for one `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactExpectations {
    /// `ln E p(c)^alpha`.
    pub log_expected_pow: Vec<f64>,
    /// `E ln p(c)`.
    pub expected_log: Vec<f64>,
    /// `ln M_alpha(c)`.
    pub power_mean_log: Vec<f64>,
    /// `ln Σ_c M_alpha(c)`.
    pub log_z: f64,
}

/// Enumerates all masks at effective rates `lambda · p` with Bernoulli
/// weights `Π rate^dropped (1 - rate)^kept`, using the same evaluation
/// scaling as Monte Carlo prediction. Rows with rate 0 or 1 are fixed and do
/// not count towards the [`MAX_ENUMERATED_ROWS`] limit.
pub fn enumerate_masks_exact(
    model: &Model,
    input: Input<'_>,
    lambda: f64,
    temperature: f64,
) -> Result<MaskEnumeration> {
    crate::model::check_multiplier(lambda)?;
    let sites = model.mask_sites();
    let t_steps = input.steps();
    let mut template = MaskSet::all_kept(&sites);
    // (site, flat index, rate) of every row whose fate is random
    let mut slots = Vec::new();
    for (i, site) in sites.iter().enumerate() {
        let steps = if site.time_varying && model.dropout.sharing == Sharing::PerStep {
            t_steps
        } else {
            1
        };
        let rate = lambda * model.dropout.rate(&site.name);
        template.sites[i] = SiteMask {
            name: site.name.clone(),
            rows: site.rows,
            steps,
            keep: vec![rate < 1.0; steps * site.rows],
        };
        if rate > 0.0 && rate < 1.0 {
            slots.extend((0..steps * site.rows).map(|j| (i, j, rate)));
        }
    }
    if slots.len() > MAX_ENUMERATED_ROWS {
        return Err(Error::TooManyRows {
            rows: slots.len(),
            limit: MAX_ENUMERATED_ROWS,
        });
    }
    let configs = 1usize << slots.len();
    let results: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..configs)
        .into_par_iter()
        .map(|bits| {
            let mut masks = template.clone();
            let mut log_w = 0.0;
            for (b, &(site, j, rate)) in slots.iter().enumerate() {
                let dropped = bits >> b & 1 == 1;
                masks.sites[site].keep[j] = !dropped;
                log_w += if dropped { rate.ln() } else { (-rate).ln_1p() };
            }
            let scales = RowScales::evaluation(&masks, &model.dropout, lambda);
            let logits = forward_logits(&model.params, input, &scales)?
                .pop()
                .expect("at least one step");
            let lp = log_softmax_with_temperature(&logits, temperature)?;
            Ok((log_w, logits, lp))
        })
        .collect::<Result<_>>()?;
    let mut log_weights = Vec::with_capacity(configs);
    let mut logits = Vec::with_capacity(configs);
    let mut log_probs = Vec::with_capacity(configs);
    for (w, z, lp) in results {
        log_weights.push(w);
        logits.push(z);
        log_probs.push(lp);
    }
    Ok(MaskEnumeration {
        droppable: slots.len(),
        log_weights,
        logits,
        log_probs,
    })
}

impl MaskEnumeration {
    pub fn droppable_rows(&self) -> usize {
        self.droppable
    }

    pub fn configurations(&self) -> usize {
        self.log_weights.len()
    }

    fn classes(&self) -> usize {
        self.log_probs[0].len()
    }

    fn weighted_sum(&self, values: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; values[0].len()];
        for (lw, v) in self.log_weights.iter().zip(values) {
            let w = lw.exp();
            for (o, x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        out
    }

    /// Exact expected logits at the last step.
    pub fn expected_logits(&self) -> Vec<f64> {
        self.weighted_sum(&self.logits)
    }

    /// Exact `E ln p(c)`.
    pub fn expected_log_prob(&self) -> Vec<f64> {
        self.weighted_sum(&self.log_probs)
    }

    /// Exact `ln E p(c)^alpha`, computed in the log domain.
    pub fn log_expected_pow(&self, alpha: f64) -> Result<Vec<f64>> {
        (0..self.classes())
            .map(|c| {
                let terms: Vec<f64> = self
                    .log_weights
                    .iter()
                    .zip(&self.log_probs)
                    .map(|(lw, lp)| lw + alpha * lp[c])
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }

    pub fn exact(&self, alpha: f64) -> Result<ExactExpectations> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let expected_log = self.expected_log_prob();
        let log_expected_pow = self.log_expected_pow(alpha)?;
        let power_mean_log = if alpha < ALPHA_SWITCH {
            expected_log.clone()
        } else {
            log_expected_pow.iter().map(|v| v / alpha).collect()
        };
        let log_z = log_sum_exp(&power_mean_log)?;
        Ok(ExactExpectations {
            log_expected_pow,
            expected_log,
            power_mean_log,
            log_z,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, DropoutSpec, ModelParams};
    use crate::numeric::{SplitSeed, Tensor};

    #[test]
    fn linear_unit_expectation() {
        let arch = Architecture::Mlp {
            inputs: 1,
            hidden: vec![],
            classes: 1,
        };
        let params = ModelParams::from_tensors(
            arch.clone(),
            vec![Tensor::new(vec![1, 1], vec![2.0]).unwrap(), Tensor::zeros(vec![1])],
        )
        .unwrap();
        let model = Model::new(params, DropoutSpec::uniform(&arch.mask_sites(), 0.5)).unwrap();
        let e = enumerate_masks_exact(&model, Input::Features(&[1.0]), 1.0, 1.0).unwrap();
        assert_eq!(e.configurations(), 2);
        assert!((e.expected_logits()[0] - 1.0).abs() < 1e-15);
    }

    fn mlp(inputs: usize, hidden: usize, rate: f64) -> Model {
        let arch = Architecture::Mlp {
            inputs,
            hidden: vec![hidden],
            classes: 3,
        };
        let params = ModelParams::init(arch.clone(), &SplitSeed::new(17)).unwrap();
        Model::new(params, DropoutSpec::uniform(&arch.mask_sites(), rate)).unwrap()
    }

    #[test]
    fn no_dropout_is_a_single_configuration() {
        let m = mlp(3, 4, 0.0);
        let x = [0.1, -0.4, 0.9];
        let e = enumerate_masks_exact(&m, Input::Features(&x), 1.0, 1.0).unwrap();
        assert_eq!(e.configurations(), 1);
        let det = m.mlp_forward(&x, None).unwrap();
        assert_eq!(e.expected_logits(), det);
    }

    #[test]
    fn refuses_large_networks() {
        let m = mlp(10, 11, 0.5);
        let res = enumerate_masks_exact(&m, Input::Features(&[0.0; 10]), 1.0, 1.0);
        assert!(matches!(res, Err(Error::TooManyRows { rows: 21, .. })));
        // at lambda = 0 nothing is random
        assert!(enumerate_masks_exact(&m, Input::Features(&[0.0; 10]), 0.0, 1.0).is_ok());
    }

    #[test]
    fn weights_sum_to_one() {
        let m = mlp(3, 5, 0.3);
        let e = enumerate_masks_exact(&m, Input::Features(&[1.0, 0.5, -0.5]), 0.7, 1.0).unwrap();
        assert_eq!(e.droppable_rows(), 8);
        let total = log_sum_exp(&e.log_weights).unwrap();
        assert!(total.abs() < 1e-14);
    }

    #[test]
    fn chain_holds_for_eight_rows() {
        let m = mlp(3, 5, 0.4);
        let e = enumerate_masks_exact(&m, Input::Features(&[0.3, -1.0, 0.8]), 1.0, 1.0).unwrap();
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let x = e.exact(alpha).unwrap();
            for c in 0..3 {
                assert!(x.expected_log[c] <= x.power_mean_log[c] + 1e-12);
                assert!(x.power_mean_log[c] <= x.power_mean_log[c] - x.log_z + 1e-12);
            }
        }
        assert!(e.exact(1.0).unwrap().log_z.abs() < 1e-12);
    }
}

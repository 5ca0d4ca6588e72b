use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_softmax_with_temperature;

use super::dropout::{MaskSet, RowScales};
use super::params::{Architecture, ModelParams};
use super::{check_input, lstm, mlp, Example, Input};

/// The MAP objective: data negative log-likelihood under the sampled masks
/// plus the weight-decay (Gaussian prior) term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub prior_term: f64,
    pub total: f64,
    pub targets: usize,
}

fn masks_for<'a>(batch: &[Example], masks: &'a [MaskSet]) -> Result<impl Fn(usize) -> &'a MaskSet> {
    if masks.len() != 1 && masks.len() != batch.len() {
        return Err(Error::shape(format!(
            "need one mask set per example ({}) or one for the batch, got {}",
            batch.len(),
            masks.len()
        )));
    }
    Ok(move |i: usize| if masks.len() == 1 { &masks[0] } else { &masks[i] })
}

fn check_weight_decay(wd: f64) -> Result<()> {
    if !(wd >= 0.0 && wd.is_finite()) {
        return Err(Error::domain(format!("weight decay must be >= 0, got {wd}")));
    }
    Ok(())
}

fn check_example(params: &ModelParams, ex: &Example) -> Result<()> {
    if ex.targets().is_empty() {
        return Err(Error::Input("a sequence needs at least two tokens".into()));
    }
    check_input(params, ex.input())?;
    let classes = params.architecture().classes();
    if let Some(&t) = ex.targets().iter().find(|&&t| t >= classes) {
        return Err(Error::Input(format!("target {t} outside [0, {classes})")));
    }
    Ok(())
}

/// Negative log-likelihood of one example under fixed row scales, plus its
/// gradient accumulated into `grads` when given.
pub(crate) fn example_nll(
    params: &ModelParams,
    example: &Example,
    scales: &RowScales,
    grads: Option<&mut ModelParams>,
) -> Result<f64> {
    check_example(params, example)?;
    let input = example.input();
    scales.check(&params.architecture().mask_sites(), input.steps())?;
    let targets = example.targets();
    match (params.architecture(), input) {
        (Architecture::Mlp { .. }, Input::Features(x)) => {
            let trace = mlp::forward(params, x, scales);
            let (nll, dl) = nll_and_dlogits(&trace.logits, targets[0])?;
            if let Some(g) = grads {
                mlp::backward(params, &trace, scales, &dl, g);
            }
            Ok(nll)
        }
        (Architecture::Lstm { .. }, Input::Tokens(tokens)) => {
            let trace = lstm::forward(params, tokens, scales);
            let mut nll = 0.0;
            let mut dls = Vec::with_capacity(tokens.len());
            for (logits, &y) in trace.logits.iter().zip(targets) {
                let (l, dl) = nll_and_dlogits(logits, y)?;
                nll += l;
                dls.push(Some(dl));
            }
            if let Some(g) = grads {
                lstm::backward(params, &trace, scales, &dls, g);
            }
            Ok(nll)
        }
        _ => unreachable!("check_input rejects mismatched inputs"),
    }
}

fn nll_and_dlogits(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let lp = log_softmax_with_temperature(logits, 1.0)?;
    let mut dl: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    dl[target] -= 1.0;
    Ok((-lp[target], dl))
}

/// `nll = Σ_i -ln softmax(logits_i)[y_i]` under the given masks (vanilla
/// scaling) and `prior_term = ½ · wd · ‖Θ‖²`.
pub fn map_loss(
    params: &ModelParams,
    batch: &[Example],
    masks: &[MaskSet],
    weight_decay: f64,
) -> Result<LossBreakdown> {
    check_weight_decay(weight_decay)?;
    let mask = masks_for(batch, masks)?;
    let mut nll = 0.0;
    let mut targets = 0;
    for (i, ex) in batch.iter().enumerate() {
        nll += example_nll(params, ex, &RowScales::training(mask(i)), None)?;
        targets += ex.targets().len();
    }
    let prior_term = 0.5 * weight_decay * params.sum_squares();
    Ok(LossBreakdown {
        nll,
        prior_term,
        total: nll + prior_term,
        targets,
    })
}

/// Gradient of [`map_loss`]'s `total` with respect to every parameter.
pub fn backward(
    params: &ModelParams,
    batch: &[Example],
    masks: &[MaskSet],
    weight_decay: f64,
) -> Result<ModelParams> {
    check_weight_decay(weight_decay)?;
    let mask = masks_for(batch, masks)?;
    let mut grads = ModelParams::zeros(params.architecture().clone())?;
    for (i, ex) in batch.iter().enumerate() {
        example_nll(params, ex, &RowScales::training(mask(i)), Some(&mut grads))?;
    }
    grads.add_scaled(params, weight_decay);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_masks, DropoutSpec, MaskSet};
    use crate::numeric::{finite_difference_check, SplitSeed, Tensor};

    fn one_class() -> ModelParams {
        ModelParams::zeros(Architecture::Mlp {
            inputs: 2,
            hidden: vec![],
            classes: 1,
        })
        .unwrap()
    }

    #[test]
    fn perfect_prediction_with_zero_params_costs_nothing() {
        let p = one_class();
        let batch = vec![Example::Labeled {
            features: vec![1.0, -1.0],
            label: 0,
        }];
        let masks = vec![MaskSet::all_kept(&p.architecture().mask_sites())];
        let l = map_loss(&p, &batch, &masks, 0.5).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn uniform_two_class_costs_ln2() {
        let p = ModelParams::zeros(Architecture::Mlp {
            inputs: 1,
            hidden: vec![],
            classes: 2,
        })
        .unwrap();
        let masks = vec![MaskSet::all_kept(&p.architecture().mask_sites())];
        for y in 0..2 {
            let batch = vec![Example::Labeled {
                features: vec![3.0],
                label: y,
            }];
            let l = map_loss(&p, &batch, &masks, 0.0).unwrap();
            assert!((l.nll - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn prior_term_is_half_wd_norm() {
        let arch = Architecture::Mlp {
            inputs: 1,
            hidden: vec![],
            classes: 1,
        };
        let p = ModelParams::from_tensors(
            arch.clone(),
            vec![Tensor::new(vec![1, 1], vec![2.0]).unwrap(), Tensor::zeros(vec![1])],
        )
        .unwrap();
        let batch = vec![Example::Labeled {
            features: vec![1.0],
            label: 0,
        }];
        let masks = vec![MaskSet::all_kept(&arch.mask_sites())];
        let l = map_loss(&p, &batch, &masks, 0.1).unwrap();
        assert!((l.prior_term - 0.2).abs() < 1e-15);
        assert_eq!(l.total, l.nll + l.prior_term);
    }

    #[test]
    fn masked_row_gets_only_prior_gradient() {
        let arch = Architecture::Mlp {
            inputs: 3,
            hidden: vec![4],
            classes: 2,
        };
        let p = ModelParams::init(arch.clone(), &SplitSeed::new(2)).unwrap();
        let mut masks = MaskSet::all_kept(&arch.mask_sites());
        masks.sites[0].keep[1] = false;
        masks.sites[1].keep[3] = false;
        let batch = vec![Example::Labeled {
            features: vec![0.2, 0.7, -0.4],
            label: 1,
        }];
        let wd = 0.3;
        let g = backward(&p, &batch, &[masks], wd).unwrap();
        let w0 = &p.tensors()[0];
        let w1 = &p.tensors()[2];
        for (gv, pv) in g.tensors()[0].row(1).iter().zip(w0.row(1)) {
            assert_eq!(*gv, wd * pv);
        }
        for (gv, pv) in g.tensors()[2].row(3).iter().zip(w1.row(3)) {
            assert_eq!(*gv, wd * pv);
        }
    }

    #[test]
    fn zero_params_have_zero_prior_gradient() {
        let p = one_class();
        let batch = vec![Example::Labeled {
            features: vec![1.0, 2.0],
            label: 0,
        }];
        let masks = vec![MaskSet::all_kept(&p.architecture().mask_sites())];
        let g = backward(&p, &batch, &masks, 5.0).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_unit_mlp_gradient_check() {
        let arch = Architecture::Mlp {
            inputs: 2,
            hidden: vec![2],
            classes: 2,
        };
        let p = ModelParams::init(arch.clone(), &SplitSeed::new(11)).unwrap();
        let spec = DropoutSpec::uniform(&arch.mask_sites(), 0.3);
        let batch = vec![
            Example::Labeled { features: vec![0.5, -1.2], label: 0 },
            Example::Labeled { features: vec![-0.3, 0.8], label: 1 },
        ];
        let masks: Vec<MaskSet> = (0..2)
            .map(|i| sample_masks(&spec, &arch.mask_sites(), &SplitSeed::new(i), 1, 1.0).unwrap())
            .collect();
        let wd = 0.01;
        let g = backward(&p, &batch, &masks, wd).unwrap();
        let mut q = p.clone();
        let err = finite_difference_check(
            |theta| {
                q.set_flat(theta).unwrap();
                map_loss(&q, &batch, &masks, wd).unwrap().total
            },
            &p.flatten(),
            &g.flatten(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn batch_order_does_not_matter() {
        let arch = Architecture::Mlp {
            inputs: 2,
            hidden: vec![3],
            classes: 3,
        };
        let p = ModelParams::init(arch.clone(), &SplitSeed::new(1)).unwrap();
        let batch: Vec<Example> = (0..6)
            .map(|i| Example::Labeled {
                features: vec![i as f64 * 0.3, 1.0 - i as f64 * 0.2],
                label: i % 3,
            })
            .collect();
        let masks = vec![MaskSet::all_kept(&arch.mask_sites())];
        let a = map_loss(&p, &batch, &masks, 0.1).unwrap();
        let mut rev = batch.clone();
        rev.reverse();
        let b = map_loss(&p, &rev, &masks, 0.1).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn mask_count_must_match() {
        let p = one_class();
        let batch = vec![
            Example::Labeled { features: vec![1.0, 2.0], label: 0 };
            3
        ];
        let m = MaskSet::all_kept(&p.architecture().mask_sites());
        assert!(map_loss(&p, &batch, &[m.clone(), m], 0.0).is_err());
    }
}

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{forward_logits, sample_masks, Input, Model, RowScales};
use crate::numeric::{log_softmax_with_temperature, SplitSeed};

use super::aggregate::{AggregateResult, PowerMeanAccumulator, PredictionMatrix};
use super::params::{Alpha, FamilyParams};

/// Samples evaluated in parallel before their rows are folded, in index
/// order, into the accumulators. Fixed so results do not depend on the
/// thread count.
const SAMPLE_CHUNK: usize = 32;

/// Deterministic prediction: one pass with every droppable row scaled by its
/// keep probability, logits divided by `temperature`, log-softmax per step.
pub fn deterministic_predict(
    model: &Model,
    input: Input<'_>,
    temperature: f64,
) -> Result<Vec<Vec<f64>>> {
    let logits = deterministic_logits(model, input)?;
    logits
        .iter()
        .map(|z| log_softmax_with_temperature(z, temperature))
        .collect()
}

pub(crate) fn deterministic_logits(model: &Model, input: Input<'_>) -> Result<Vec<Vec<f64>>> {
    let scales = RowScales::deterministic(&model.mask_sites(), &model.dropout);
    forward_logits(&model.params, input, &scales)
}

/// Logits of one Monte Carlo sample: masks drawn from `seed` at rate
/// `lambda · p`, kept rows rescaled to preserve their training expectation.
pub(crate) fn sample_logits(
    model: &Model,
    input: Input<'_>,
    lambda: f64,
    seed: &SplitSeed,
) -> Result<Vec<Vec<f64>>> {
    let masks = sample_masks(
        &model.dropout,
        &model.mask_sites(),
        seed,
        input.steps(),
        lambda,
    )?;
    let scales = RowScales::evaluation(&masks, &model.dropout, lambda);
    forward_logits(&model.params, input, &scales)
}

pub(crate) fn sample_log_probs(
    model: &Model,
    input: Input<'_>,
    lambda: f64,
    temperature: f64,
    seed: &SplitSeed,
) -> Result<Vec<Vec<f64>>> {
    sample_logits(model, input, lambda, seed)?
        .iter()
        .map(|z| log_softmax_with_temperature(z, temperature))
        .collect()
}

/// Runs `samples` stochastic passes (sample `s` seeded by `seed.child(s)`)
/// and hands each result to `sink` in sample order.
pub(crate) fn for_each_sample<T, F, G>(samples: usize, run: F, mut sink: G) -> Result<()>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
    G: FnMut(usize, T),
{
    let mut start = 0;
    while start < samples {
        let end = (start + SAMPLE_CHUNK).min(samples);
        let chunk: Vec<Result<T>> = (start..end).into_par_iter().map(&run).collect();
        for (offset, item) in chunk.into_iter().enumerate() {
            sink(start + offset, item?);
        }
        start = end;
    }
    Ok(())
}

/// Monte Carlo prediction for one step of an input.
#[derive(Clone, Debug, PartialEq)]
pub struct McStep {
    pub aggregate: AggregateResult,
    pub samples: PredictionMatrix,
}

fn power_alpha(fp: &FamilyParams) -> Result<f64> {
    match fp.validate()?.alpha {
        Alpha::Power(a) => Ok(a),
        Alpha::Det => Err(Error::domain(
            "Monte Carlo prediction needs a power-mean alpha, not \"det\"",
        )),
    }
}

/// Draws `S` mask sets at rate `lambda · p`, applies the temperature inside
/// every pass and aggregates per step with the power mean.
pub fn mc_predict(
    model: &Model,
    input: Input<'_>,
    fp: &FamilyParams,
    seed: &SplitSeed,
) -> Result<Vec<McStep>> {
    let alpha = power_alpha(fp)?;
    let steps = input.steps();
    let classes = model.classes();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(fp.samples * classes); steps];
    let mut accs = vec![PowerMeanAccumulator::new(alpha, classes)?; steps];
    for_each_sample(
        fp.samples,
        |s| sample_log_probs(model, input, fp.lambda, fp.temperature, &seed.child(s as u64)),
        |_, lp| {
            for ((row, acc), dst) in lp.iter().zip(&mut accs).zip(&mut rows) {
                acc.push(row);
                dst.extend_from_slice(row);
            }
        },
    )?;
    rows.into_iter()
        .zip(accs)
        .map(|(data, acc)| {
            Ok(McStep {
                aggregate: acc.finish()?,
                samples: PredictionMatrix::new(fp.samples, classes, data)?,
            })
        })
        .collect()
}

/// Normalised log probabilities per step for any family member, without
/// keeping the sample matrices.
pub(crate) fn family_log_probs(
    model: &Model,
    input: Input<'_>,
    fp: &FamilyParams,
    seed: &SplitSeed,
) -> Result<Vec<Vec<f64>>> {
    if fp.validate()?.alpha.is_det() {
        return deterministic_predict(model, input, fp.temperature);
    }
    let alpha = power_alpha(fp)?;
    let mut accs = vec![PowerMeanAccumulator::new(alpha, model.classes())?; input.steps()];
    for_each_sample(
        fp.samples,
        |s| sample_log_probs(model, input, fp.lambda, fp.temperature, &seed.child(s as u64)),
        |_, lp| {
            for (row, acc) in lp.iter().zip(&mut accs) {
                acc.push(row);
            }
        },
    )?;
    accs.iter()
        .map(|a| a.finish().map(|r| r.normalized_log))
        .collect()
}

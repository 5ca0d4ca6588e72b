//! The training loop: minibatch MAP training with one fresh dropout mask
//! set per example per step.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{evaluate_dataset, FamilyParams};
use crate::model::{example_nll, sample_masks, Example, Model, ModelParams, RowScales};
use crate::numeric::SplitSeed;

use super::checkpoint::{Checkpoint, LogEntry, FORMAT_VERSION};
use super::config::ExperimentConfig;
use super::data::{Dataset, SplitData};
use super::optim::{clip_grad_norm, Optimizer};

/// Children of the root seed, one per independent random stream.
pub const INIT_STREAM: u64 = 0;
pub const BATCH_STREAM: u64 = 1;
pub const MASK_STREAM: u64 = 2;
pub const DATA_STREAM: u64 = 3;

/// Loads the configured data and trains on its `train` split.
pub fn train(config: &ExperimentConfig) -> Result<Checkpoint> {
    config.validate()?;
    let root = SplitSeed::new(config.seed);
    let data = Dataset::load(&config.data, &root.child(DATA_STREAM))?;
    train_on(config, &data)
}

/// Example `j` of the batch at `step`: a random `bptt + 1` token window or
/// a random labelled example.
fn draw_example(split: &SplitData, bptt: usize, seed: &SplitSeed) -> Result<Example> {
    let mut rng = seed.rng();
    match split {
        SplitData::Stream(tokens) => {
            if tokens.len() < 2 {
                return Err(Error::config("the training stream needs at least two tokens"));
            }
            let len = (bptt + 1).min(tokens.len());
            let start = rng.random_range(0..=tokens.len() - len);
            Ok(Example::Sequence(tokens[start..start + len].to_vec()))
        }
        SplitData::Examples(examples) => {
            if examples.is_empty() {
                return Err(Error::config("the training split is empty"));
            }
            Ok(examples[rng.random_range(0..examples.len())].clone())
        }
    }
}

pub fn train_on(config: &ExperimentConfig, data: &Dataset) -> Result<Checkpoint> {
    let root = SplitSeed::new(config.seed);
    let arch = config.architecture(data.inputs, data.classes)?;
    let mut params = ModelParams::init(arch.clone(), &root.child(INIT_STREAM))?;
    let sites = arch.mask_sites();
    let train_split = data.split("train")?;
    let log_set = train_split.eval_examples(Some(config.log_targets));
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut history = Vec::new();

    let det = FamilyParams::deterministic(1.0)?;
    let log_point = |params: &ModelParams, step: usize, batch_xe: Option<f64>| -> Result<LogEntry> {
        let model = Model::new(params.clone(), config.dropout.clone())?;
        let train_xe = evaluate_dataset(&model, &log_set, &det, &root)?.xe;
        log::info!("step {step}: train XE {train_xe:.4}");
        Ok(LogEntry {
            step,
            batch_xe,
            train_xe,
        })
    };
    history.push(log_point(&params, 0, None)?);

    let mut window_loss = 0.0;
    let mut window_steps = 0;
    for step in 0..config.steps {
        let batch_seed = root.child(BATCH_STREAM).child(step as u64);
        let mask_seed = root.child(MASK_STREAM).child(step as u64);
        let results: Vec<Result<(f64, usize, ModelParams)>> = (0..config.batch_size)
            .into_par_iter()
            .map(|j| {
                let ex = draw_example(train_split, config.bptt, &batch_seed.child(j as u64))?;
                let steps = ex.input().steps();
                let masks =
                    sample_masks(&config.dropout, &sites, &mask_seed.child(j as u64), steps, 1.0)?;
                let mut grads = ModelParams::zeros(arch.clone())?;
                let nll =
                    example_nll(&params, &ex, &RowScales::training(&masks), Some(&mut grads))?;
                Ok((nll, ex.targets().len(), grads))
            })
            .collect();
        let mut nll = 0.0;
        let mut targets = 0;
        let mut grads = ModelParams::zeros(arch.clone())?;
        for r in results {
            let (l, n, g) = r?;
            nll += l;
            targets += n;
            grads.add_scaled(&g, 1.0);
        }
        let loss = nll / targets as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        grads.scale(1.0 / targets as f64);
        grads.add_scaled(&params, config.weight_decay);
        if let Some(c) = config.grad_clip {
            clip_grad_norm(&mut grads, c);
        }
        optimizer.update(&mut params, &grads);
        if !params.all_finite() {
            return Err(Error::Divergence {
                step,
                loss: f64::NAN,
            });
        }
        window_loss += loss;
        window_steps += 1;
        let done = step + 1;
        if done % config.log_every == 0 || done == config.steps {
            history.push(log_point(&params, done, Some(window_loss / window_steps as f64))?);
            window_loss = 0.0;
            window_steps = 0;
        }
    }
    Ok(Checkpoint {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        step: config.steps,
        rng: root,
        history,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moons_config(steps: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "model": {{"type": "mlp", "hidden": [16]}},
                "dropout": {{"sites": [{{"site": "layer1", "rate": 0.3}}]}},
                "optimizer": {{"type": "sgd", "lr": 0.3}},
                "batch_size": 16,
                "steps": {steps},
                "seed": 11,
                "log_every": 50,
                "data": {{"type": "moons", "samples": 400, "noise": 0.1}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_steps_returns_the_initialisation() {
        let cfg = moons_config(0);
        let ckpt = train(&cfg).unwrap();
        let expected =
            ModelParams::init(ckpt.params.architecture().clone(), &SplitSeed::new(11).child(INIT_STREAM))
                .unwrap();
        assert_eq!(ckpt.params, expected);
        assert_eq!(ckpt.history.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let cfg = moons_config(300);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let first = a.history.first().unwrap().train_xe;
        let last = a.history.last().unwrap().train_xe;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let ckpt = train(&moons_config(20)).unwrap();
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = moons_config(50);
        cfg.optimizer = super::super::config::OptimizerConfig::Sgd { lr: 1e300 };
        cfg.weight_decay = 1.0;
        let r = train(&cfg);
        assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
    }
}

//! Softmax temperature selection by linear search over a grid, reusing one
//! set of cached logits for every grid point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{
    deterministic_logits, for_each_sample, sample_logits, Alpha, Evaluation, FamilyParams,
    PowerMeanAccumulator, TargetNll,
};
use crate::model::{Example, Model};
use crate::numeric::{log_softmax_with_temperature, SplitSeed};

/// Evenly spaced temperatures from `min` to `max` inclusive. Points within
/// 1e-9 of 1.0 are snapped to exactly 1.0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl TemperatureGrid {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min > 0.0 && min.is_finite() && max.is_finite()) {
            return Err(Error::config(format!(
                "temperature grid must lie in (0, inf), got min {min}"
            )));
        }
        if max < min || steps == 0 || (steps == 1 && max != min) {
            return Err(Error::config(format!(
                "bad temperature grid {min},{max},{steps}: need min <= max, steps >= 1, \
                 and min == max when steps == 1"
            )));
        }
        Ok(TemperatureGrid { min, max, steps })
    }

    /// Parses `"tmin,tmax,n"`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::config(format!("temperature grid must be \"tmin,tmax,n\", got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let min = parts[0].parse().map_err(|_| bad())?;
        let max = parts[1].parse().map_err(|_| bad())?;
        let steps = parts[2].parse().map_err(|_| bad())?;
        Self::new(min, max, steps)
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let width = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let t = if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + i as f64 * width
                };
                if (t - 1.0).abs() < 1e-9 {
                    1.0
                } else {
                    t
                }
            })
            .collect()
    }
}

/// Pre-softmax outputs for every prediction target of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum LogitCache {
    Det {
        logits: Vec<Vec<f64>>,
        targets: Vec<usize>,
    },
    /// `logits[i][s]`: sample `s` for target `i`.
    Mc {
        alpha: f64,
        logits: Vec<Vec<Vec<f64>>>,
        targets: Vec<usize>,
    },
}

impl LogitCache {
    /// A deterministic cache from given logits.
    pub fn from_logits(logits: Vec<Vec<f64>>, targets: Vec<usize>) -> Result<Self> {
        if logits.is_empty() || logits.len() != targets.len() {
            return Err(Error::shape(format!(
                "{} logit vectors for {} targets",
                logits.len(),
                targets.len()
            )));
        }
        for (z, &y) in logits.iter().zip(&targets) {
            if y >= z.len() || z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("bad cached logits or target".into()));
            }
        }
        Ok(LogitCache::Det { logits, targets })
    }

    /// Runs the forward passes of `fp` (ignoring its temperature) with the
    /// same seeds as [`crate::family::evaluate_dataset`].
    pub fn build(model: &Model, dataset: &[Example], fp: &FamilyParams, seed: &SplitSeed) -> Result<Self> {
        let fp = fp.validate()?;
        if dataset.is_empty() {
            return Err(Error::domain("cannot evaluate an empty dataset"));
        }
        let mut targets = Vec::new();
        let mut det = Vec::new();
        let mut mc: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, ex) in dataset.iter().enumerate() {
            let ys = ex.targets();
            if ys.is_empty() {
                return Err(Error::Input(format!("example {i} has no prediction target")));
            }
            targets.extend_from_slice(ys);
            let input = ex.input();
            match fp.alpha {
                Alpha::Det => det.extend(deterministic_logits(model, input)?),
                Alpha::Power(_) => {
                    let base = seed.child(i as u64);
                    let offset = mc.len();
                    mc.extend((0..input.steps()).map(|_| Vec::with_capacity(fp.samples)));
                    for_each_sample(
                        fp.samples,
                        |s| sample_logits(model, input, fp.lambda, &base.child(s as u64)),
                        |_, steps| {
                            for (t, z) in steps.into_iter().enumerate() {
                                mc[offset + t].push(z);
                            }
                        },
                    )?;
                }
            }
        }
        Ok(match fp.alpha {
            Alpha::Det => LogitCache::Det {
                logits: det,
                targets,
            },
            Alpha::Power(alpha) => LogitCache::Mc {
                alpha,
                logits: mc,
                targets,
            },
        })
    }

    pub fn targets(&self) -> &[usize] {
        match self {
            LogitCache::Det { targets, .. } | LogitCache::Mc { targets, .. } => targets,
        }
    }

    pub fn evaluate(&self, temperature: f64) -> Result<Evaluation> {
        let nlls: Vec<Result<TargetNll>> = match self {
            LogitCache::Det { logits, targets } => logits
                .par_iter()
                .zip(targets)
                .map(|(z, &y)| {
                    let lp = log_softmax_with_temperature(z, temperature)?;
                    Ok(TargetNll { target: y, nll: -lp[y] })
                })
                .collect(),
            LogitCache::Mc {
                alpha,
                logits,
                targets,
            } => logits
                .par_iter()
                .zip(targets)
                .map(|(samples, &y)| {
                    let mut acc = PowerMeanAccumulator::new(*alpha, samples[0].len())?;
                    for z in samples {
                        acc.push(&log_softmax_with_temperature(z, temperature)?);
                    }
                    let lp = acc.finish()?.normalized_log;
                    Ok(TargetNll { target: y, nll: -lp[y] })
                })
                .collect(),
        };
        Evaluation::from_nlls(&nlls.into_iter().collect::<Result<Vec<_>>>()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSearch {
    pub temperature: f64,
    pub xe: f64,
    /// `(temperature, xe)` for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Grid point with the lowest XE; ties go to the lowest temperature.
pub fn search_cache(cache: &LogitCache, grid: &TemperatureGrid) -> Result<TemperatureSearch> {
    let mut curve = Vec::with_capacity(grid.steps);
    let mut best: Option<(f64, f64)> = None;
    for t in grid.values() {
        let xe = cache.evaluate(t)?.xe;
        curve.push((t, xe));
        match best {
            Some((bt, bx)) if !(xe < bx || (xe == bx && t < bt)) => {}
            _ => best = Some((t, xe)),
        }
    }
    let (temperature, xe) = best.expect("grid has at least one point");
    Ok(TemperatureSearch {
        temperature,
        xe,
        curve,
    })
}

/// Finds the temperature minimising the cross entropy of family member `fp`
/// on `dataset`; forward passes run once.
pub fn temperature_linear_search(
    model: &Model,
    dataset: &[Example],
    fp: &FamilyParams,
    grid: &TemperatureGrid,
    seed: &SplitSeed,
) -> Result<TemperatureSearch> {
    search_cache(&LogitCache::build(model, dataset, fp, seed)?, grid)
}

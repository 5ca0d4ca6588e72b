//! Experiment configuration files (JSON, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Alpha;
use crate::model::{Architecture, DropoutSpec};

/// Network shape; input and output sizes come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mlp {
        hidden: Vec<usize>,
    },
    Lstm {
        embed: usize,
        hidden: usize,
        #[serde(default)]
        tied: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenLevel {
    #[default]
    Char,
    Word,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// A text corpus for language modelling; `path: null` selects the
    /// embedded corpus. `splits` are train/valid/test fractions.
    Text {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        level: TokenLevel,
        #[serde(default = "default_splits")]
        splits: Vec<f64>,
    },
    /// Numeric CSV files whose last column is an integer label.
    Csv {
        train: PathBuf,
        #[serde(default)]
        valid: Option<PathBuf>,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default)]
        classes: Option<usize>,
    },
    /// Synthetic two-moons classification data.
    Moons {
        samples: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default = "default_splits")]
        splits: Vec<f64>,
    },
}

fn default_splits() -> Vec<f64> {
    vec![0.8, 0.1, 0.1]
}

fn default_noise() -> f64 {
    0.1
}

/// Sweep axes stored with an experiment (used by `sweep` when no grid file
/// is given).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalGrid {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<Alpha>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub max_targets: Option<usize>,
}

fn default_alphas() -> Vec<Alpha> {
    vec![Alpha::Det, Alpha::Power(0.0), Alpha::Power(1.0)]
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0]
}

fn default_temperatures() -> Vec<f64> {
    vec![1.0]
}

/// Default Monte Carlo budget S.
pub const DEFAULT_SAMPLES: usize = 200;

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl Default for EvalGrid {
    fn default() -> Self {
        EvalGrid {
            alphas: default_alphas(),
            lambdas: default_lambdas(),
            temperatures: default_temperatures(),
            samples: default_samples(),
            max_targets: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub dropout: DropoutSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Targets of the fixed training prefix scored at every log point.
    #[serde(default = "default_log_targets")]
    pub log_targets: usize,
    /// Training window length for language models.
    #[serde(default = "default_bptt")]
    pub bptt: usize,
    /// Global gradient-norm clipping threshold.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalGrid,
    #[serde(default = "default_buckets")]
    pub buckets: Vec<String>,
}

fn default_log_every() -> usize {
    100
}

fn default_log_targets() -> usize {
    1000
}

fn default_bptt() -> usize {
    32
}

fn default_buckets() -> Vec<String> {
    crate::family::DEFAULT_BUCKETS.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{what} must be positive and finite, got {v}")))
            }
        };
        match &self.model {
            ModelSpec::Mlp { hidden } => {
                if hidden.contains(&0) {
                    return Err(Error::config("hidden layer sizes must be positive"));
                }
            }
            ModelSpec::Lstm { embed, hidden, tied } => {
                if *embed == 0 || *hidden == 0 {
                    return Err(Error::config("LSTM sizes must be positive"));
                }
                if *tied && embed != hidden {
                    return Err(Error::config("tied embeddings need embed == hidden"));
                }
            }
        }
        match self.optimizer {
            OptimizerConfig::Sgd { lr } => positive(lr, "learning rate")?,
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => {
                positive(lr, "learning rate")?;
                positive(epsilon, "adam epsilon")?;
                for b in [beta1, beta2] {
                    if !(0.0..1.0).contains(&b) {
                        return Err(Error::config(format!("adam betas must lie in [0, 1), got {b}")));
                    }
                }
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.log_every == 0 || self.log_targets == 0 {
            return Err(Error::config("log_every and log_targets must be positive"));
        }
        if self.bptt == 0 {
            return Err(Error::config("bptt must be positive"));
        }
        if let Some(c) = self.grad_clip {
            positive(c, "grad_clip")?;
        }
        match &self.data {
            DataConfig::Text { splits, .. } | DataConfig::Moons { splits, .. } => {
                check_fractions(splits)?
            }
            DataConfig::Csv { classes, .. } => {
                if *classes == Some(0) {
                    return Err(Error::config("classes must be positive"));
                }
            }
        }
        if let DataConfig::Moons { samples, noise, .. } = &self.data {
            if *samples == 0 || !(*noise >= 0.0 && noise.is_finite()) {
                return Err(Error::config("moons needs samples > 0 and noise >= 0"));
            }
        }
        let text_data = matches!(self.data, DataConfig::Text { .. });
        let lstm = matches!(self.model, ModelSpec::Lstm { .. });
        if text_data != lstm {
            return Err(Error::config(
                "text data needs an lstm model and classification data an mlp model",
            ));
        }
        self.eval.validate()?;
        for b in &self.buckets {
            b.parse::<crate::family::Bucket>()?;
        }
        Ok(())
    }

    /// The full architecture once the data sizes are known.
    pub fn architecture(&self, inputs: usize, classes: usize) -> Result<Architecture> {
        let arch = match &self.model {
            ModelSpec::Mlp { hidden } => Architecture::Mlp {
                inputs,
                hidden: hidden.clone(),
                classes,
            },
            ModelSpec::Lstm { embed, hidden, tied } => Architecture::Lstm {
                vocab: classes,
                embed: *embed,
                hidden: *hidden,
                tied: *tied,
            },
        };
        arch.validate()?;
        self.dropout.validate(&arch.mask_sites())?;
        Ok(arch)
    }
}

impl EvalGrid {
    /// The configured axes as a sweep over `splits`.
    pub fn to_sweep_grid(&self, splits: Vec<String>, seed: u64) -> super::sweep::SweepGrid {
        super::sweep::SweepGrid {
            splits,
            alphas: self.alphas.clone(),
            lambdas: self.lambdas.clone(),
            temperatures: self.temperatures.clone(),
            samples: vec![self.samples],
            seed,
            max_targets: self.max_targets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.lambdas.is_empty() || self.temperatures.is_empty() {
            return Err(Error::config("evaluation grid axes must be non-empty"));
        }
        for a in &self.alphas {
            a.validate()?;
        }
        for &l in &self.lambdas {
            crate::model::check_multiplier(l)?;
        }
        for &t in &self.temperatures {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(format!("temperatures must be > 0, got {t}")));
            }
        }
        if self.samples == 0 || self.max_targets == Some(0) {
            return Err(Error::config("samples and max_targets must be positive"));
        }
        Ok(())
    }
}

/// Split fractions must be positive and sum to one.
pub fn check_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() || fractions.len() > 3 {
        return Err(Error::config("give one to three split fractions (train, valid, test)"));
    }
    if fractions.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::config(format!("split fractions must be positive, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions must sum to 1, got {total}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "model": {"type": "mlp", "hidden": [8]},
        "dropout": {"sites": [{"site": "layer1", "rate": 0.5}]},
        "optimizer": {"type": "sgd", "lr": 0.1},
        "batch_size": 4,
        "steps": 10,
        "seed": 3,
        "data": {"type": "moons", "samples": 100}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_json(TINY).unwrap();
        assert_eq!(c.bptt, 32);
        assert_eq!(c.eval.samples, DEFAULT_SAMPLES);
        assert_eq!(c.buckets.len(), 6);
        let arch = c.architecture(2, 2).unwrap();
        assert_eq!(arch.classes(), 2);
        let back = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&back).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TINY.replace("\"seed\": 3", "\"seed\": 3, \"sed\": 4");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [
            ("\"lr\": 0.1", "\"lr\": -0.1"),
            ("\"batch_size\": 4", "\"batch_size\": 0"),
            ("\"type\": \"mlp\", \"hidden\": [8]", "\"type\": \"lstm\", \"embed\": 4, \"hidden\": 4"),
        ] {
            let bad = TINY.replace(from, to);
            assert!(ExperimentConfig::from_json(&bad).is_err(), "{to}");
        }
        let c = ExperimentConfig::from_json(&TINY.replace("layer1", "layer7")).unwrap();
        assert!(c.architecture(2, 2).is_err());
    }

    #[test]
    fn fractions() {
        assert!(check_fractions(&[1.0]).is_ok());
        assert!(check_fractions(&[0.8, 0.1, 0.1]).is_ok());
        assert!(check_fractions(&[0.8, 0.3]).is_err());
        assert!(check_fractions(&[1.0, 0.0]).is_err());
        assert!(check_fractions(&[]).is_err());
    }
}

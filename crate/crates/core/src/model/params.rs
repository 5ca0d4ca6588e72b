use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{SplitSeed, Tensor};

use super::dropout::MaskSite;

/// Shape descriptor for the two supported networks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// Fully connected classifier with `tanh` hidden layers.
    Mlp {
        inputs: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    /// Single-layer LSTM language model. With `tied`, the output projection
    /// reuses the embedding matrix (requires `embed == hidden`).
    Lstm {
        vocab: usize,
        embed: usize,
        hidden: usize,
        #[serde(default)]
        tied: bool,
    },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                if *inputs == 0 || *classes == 0 || hidden.contains(&0) {
                    return Err(Error::config("MLP layer sizes must be positive"));
                }
            }
            Architecture::Lstm {
                vocab,
                embed,
                hidden,
                tied,
            } => {
                if *vocab == 0 || *embed == 0 || *hidden == 0 {
                    return Err(Error::config("LSTM sizes must be positive"));
                }
                if *tied && embed != hidden {
                    return Err(Error::config(format!(
                        "tied embeddings need embed == hidden (got {embed} and {hidden})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of output classes (vocabulary size for the language model).
    pub fn classes(&self) -> usize {
        match self {
            Architecture::Mlp { classes, .. } => *classes,
            Architecture::Lstm { vocab, .. } => *vocab,
        }
    }

    /// Names and shapes of the parameter tensors, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                let widths = mlp_widths(*inputs, hidden, *classes);
                let mut out = Vec::new();
                for (l, w) in widths.windows(2).enumerate() {
                    out.push((format!("layer{l}.weight"), vec![w[0], w[1]]));
                    out.push((format!("layer{l}.bias"), vec![w[1]]));
                }
                out
            }
            Architecture::Lstm {
                vocab,
                embed,
                hidden,
                tied,
            } => {
                let mut out = vec![
                    ("embedding".to_string(), vec![*vocab, *embed]),
                    ("lstm.w_input".to_string(), vec![*embed, 4 * hidden]),
                    ("lstm.w_recurrent".to_string(), vec![*hidden, 4 * hidden]),
                    ("lstm.bias".to_string(), vec![4 * hidden]),
                ];
                if !tied {
                    out.push(("output.weight".to_string(), vec![*hidden, *vocab]));
                }
                out.push(("output.bias".to_string(), vec![*vocab]));
                out
            }
        }
    }

    /// Weight matrices whose rows can be dropped, in mask order.
    pub fn mask_sites(&self) -> Vec<MaskSite> {
        match self {
            Architecture::Mlp {
                inputs,
                hidden,
                classes,
            } => {
                let widths = mlp_widths(*inputs, hidden, *classes);
                (0..widths.len() - 1)
                    .map(|l| MaskSite {
                        name: format!("layer{l}"),
                        rows: widths[l],
                        time_varying: false,
                    })
                    .collect()
            }
            Architecture::Lstm { embed, hidden, .. } => vec![
                MaskSite {
                    name: "input".to_string(),
                    rows: *embed,
                    time_varying: true,
                },
                MaskSite {
                    name: "recurrent".to_string(),
                    rows: *hidden,
                    time_varying: true,
                },
            ],
        }
    }
}

pub(crate) fn mlp_widths(inputs: usize, hidden: &[usize], classes: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(inputs);
    w.extend_from_slice(hidden);
    w.push(classes);
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

/// The parameter means of a network, laid out as [`Architecture::layout`].
///
/// Gradients use the same type so optimiser updates are plain zips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    architecture: Architecture,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    architecture: Architecture,
    tensors: Vec<NamedTensor>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let layout = raw.architecture.layout();
        if layout.len() != raw.tensors.len() {
            return Err(Error::shape(format!(
                "architecture needs {} tensors, found {}",
                layout.len(),
                raw.tensors.len()
            )));
        }
        for ((name, _), t) in layout.iter().zip(&raw.tensors) {
            if *name != t.name {
                return Err(Error::shape(format!(
                    "expected tensor {name}, found {}",
                    t.name
                )));
            }
        }
        ModelParams::from_tensors(
            raw.architecture,
            raw.tensors.into_iter().map(|t| t.tensor).collect(),
        )
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        let names = p.architecture.layout().into_iter().map(|(n, _)| n);
        RawParams {
            tensors: names
                .zip(p.tensors)
                .map(|(name, tensor)| NamedTensor { name, tensor })
                .collect(),
            architecture: p.architecture,
        }
    }
}

impl ModelParams {
    pub fn from_tensors(architecture: Architecture, tensors: Vec<Tensor>) -> Result<Self> {
        architecture.validate()?;
        let layout = architecture.layout();
        if layout.len() != tensors.len() {
            return Err(Error::shape(format!(
                "architecture needs {} tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(ModelParams {
            architecture,
            tensors,
        })
    }

    pub fn zeros(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        let tensors = architecture
            .layout()
            .into_iter()
            .map(|(_, shape)| Tensor::zeros(shape))
            .collect();
        Ok(ModelParams {
            architecture,
            tensors,
        })
    }

    /// Uniform initialisation; the LSTM forget-gate bias starts at 1.
    pub fn init(architecture: Architecture, seed: &SplitSeed) -> Result<Self> {
        let mut params = ModelParams::zeros(architecture)?;
        let layout = params.architecture.layout();
        for (i, (name, shape)) in layout.iter().enumerate() {
            let mut rng = seed.child(i as u64).rng();
            let scale = match (&params.architecture, name.as_str()) {
                (_, n) if n.ends_with("bias") => 0.0,
                (Architecture::Lstm { .. }, "embedding") => 0.1,
                (Architecture::Lstm { hidden, .. }, _) => 1.0 / (*hidden as f64).sqrt(),
                (Architecture::Mlp { .. }, _) => 1.0 / (shape[0] as f64).sqrt(),
            };
            for v in params.tensors[i].data_mut() {
                *v = if scale > 0.0 {
                    rng.random_range(-scale..scale)
                } else {
                    0.0
                };
            }
        }
        if let Architecture::Lstm { hidden, .. } = params.architecture {
            let bias = params.tensors[3].data_mut();
            for v in &mut bias[hidden..2 * hidden] {
                *v = 1.0;
            }
        }
        Ok(params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.architecture
            .layout()
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn names(&self) -> Vec<String> {
        self.architecture
            .layout()
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_squares).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// All values concatenated in storage order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::shape(format!(
                "expected {} values, got {}",
                self.num_values(),
                values.len()
            )));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, k: f64) {
        debug_assert_eq!(self.architecture, other.architecture);
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += k * y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            for x in t.data_mut() {
                *x *= k;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lstm(tied: bool) -> Architecture {
        Architecture::Lstm {
            vocab: 5,
            embed: 3,
            hidden: 3,
            tied,
        }
    }

    #[test]
    fn layouts() {
        let mlp = Architecture::Mlp {
            inputs: 4,
            hidden: vec![6],
            classes: 3,
        };
        let shapes: Vec<_> = mlp.layout().into_iter().map(|(_, s)| s).collect();
        assert_eq!(shapes, vec![vec![4, 6], vec![6], vec![6, 3], vec![3]]);
        let rows: Vec<_> = mlp.mask_sites().iter().map(|s| s.rows).collect();
        assert_eq!(rows, vec![4, 6]);
        assert_eq!(lstm(false).layout().len(), 6);
        assert_eq!(lstm(true).layout().len(), 5);
    }

    #[test]
    fn tied_requires_matching_sizes() {
        let bad = Architecture::Lstm {
            vocab: 5,
            embed: 2,
            hidden: 3,
            tied: true,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_json_round_trips() {
        let a = ModelParams::init(lstm(false), &SplitSeed::new(3)).unwrap();
        let b = ModelParams::init(lstm(false), &SplitSeed::new(3)).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn rejects_mismatched_tensors() {
        let arch = Architecture::Mlp {
            inputs: 2,
            hidden: vec![],
            classes: 2,
        };
        let res = ModelParams::from_tensors(arch, vec![Tensor::zeros(vec![3, 2]), Tensor::zeros(vec![2])]);
        assert!(matches!(res, Err(Error::Shape(_))));
    }

    #[test]
    fn flat_round_trip() {
        let mut p = ModelParams::init(lstm(true), &SplitSeed::new(1)).unwrap();
        let flat = p.flatten();
        let mut q = ModelParams::zeros(lstm(true)).unwrap();
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        p.scale(0.0);
        assert_eq!(p.sum_squares(), 0.0);
    }
}

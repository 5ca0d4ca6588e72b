//! Dropout networks: an MLP classifier and an LSTM language model.
//!
//! Dropout removes whole rows of weight matrices (unit dropout). Training
//! uses vanilla masking, i.e. kept rows are not rescaled; rescaling only
//! happens at evaluation (see [`RowScales`]).

mod dropout;
mod loss;
mod lstm;
mod mlp;
mod params;

pub use dropout::{
    sample_masks, DropoutSite, DropoutSpec, MaskSet, MaskSite, RowScales, SiteMask, Sharing,
};
pub use loss::{backward, map_loss, LossBreakdown};
pub use params::{Architecture, ModelParams, NamedTensor};

pub(crate) use dropout::check_multiplier;
pub(crate) use loss::example_nll;

use crate::error::{Error, Result};

/// What a forward pass consumes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Input<'a> {
    Features(&'a [f64]),
    Tokens(&'a [usize]),
}

impl Input<'_> {
    /// Number of time steps (predictions) the input produces.
    pub fn steps(&self) -> usize {
        match self {
            Input::Features(_) => 1,
            Input::Tokens(t) => t.len(),
        }
    }
}

/// A supervised example: a labelled feature vector, or a token sequence
/// whose every position after the first is a prediction target.
#[derive(Clone, Debug, PartialEq)]
pub enum Example {
    Labeled { features: Vec<f64>, label: usize },
    Sequence(Vec<usize>),
}

impl Example {
    pub fn input(&self) -> Input<'_> {
        match self {
            Example::Labeled { features, .. } => Input::Features(features),
            Example::Sequence(tokens) => Input::Tokens(&tokens[..tokens.len().saturating_sub(1)]),
        }
    }

    pub fn targets(&self) -> &[usize] {
        match self {
            Example::Labeled { label, .. } => std::slice::from_ref(label),
            Example::Sequence(tokens) => tokens.get(1..).unwrap_or(&[]),
        }
    }
}

/// Parameters plus the dropout configuration they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub dropout: DropoutSpec,
}

impl Model {
    pub fn new(params: ModelParams, dropout: DropoutSpec) -> Result<Self> {
        dropout.validate(&params.architecture().mask_sites())?;
        Ok(Model { params, dropout })
    }

    pub fn architecture(&self) -> &Architecture {
        self.params.architecture()
    }

    pub fn mask_sites(&self) -> Vec<MaskSite> {
        self.params.architecture().mask_sites()
    }

    pub fn classes(&self) -> usize {
        self.params.architecture().classes()
    }

    /// Pre-softmax outputs, one vector per step.
    pub fn logits(&self, input: Input<'_>, scales: &RowScales) -> Result<Vec<Vec<f64>>> {
        forward_logits(&self.params, input, scales)
    }

    /// MLP forward pass with masks (stochastic mode) or, when `masks` is
    /// `None`, every droppable row scaled by its keep probability.
    pub fn mlp_forward(&self, x: &[f64], masks: Option<&MaskSet>) -> Result<Vec<f64>> {
        if !matches!(self.architecture(), Architecture::Mlp { .. }) {
            return Err(Error::Input("mlp_forward called on an LSTM".into()));
        }
        let scales = self.scales_for(masks);
        Ok(self.logits(Input::Features(x), &scales)?.remove(0))
    }

    /// LSTM forward pass over `tokens`; logits at step `t` predict token `t + 1`.
    pub fn lstm_forward(&self, tokens: &[usize], masks: Option<&MaskSet>) -> Result<Vec<Vec<f64>>> {
        if !matches!(self.architecture(), Architecture::Lstm { .. }) {
            return Err(Error::Input("lstm_forward called on an MLP".into()));
        }
        let scales = self.scales_for(masks);
        self.logits(Input::Tokens(tokens), &scales)
    }

    fn scales_for(&self, masks: Option<&MaskSet>) -> RowScales {
        match masks {
            Some(m) => RowScales::training(m),
            None => RowScales::deterministic(&self.mask_sites(), &self.dropout),
        }
    }
}

pub(crate) fn check_input(params: &ModelParams, input: Input<'_>) -> Result<()> {
    match (params.architecture(), input) {
        (Architecture::Mlp { inputs, .. }, Input::Features(x)) => {
            if x.len() != *inputs {
                return Err(Error::shape(format!(
                    "MLP expects {inputs} features, got {}",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("features must be finite".into()));
            }
        }
        (Architecture::Lstm { vocab, .. }, Input::Tokens(tokens)) => {
            if tokens.is_empty() {
                return Err(Error::Input("token sequence is empty".into()));
            }
            if let Some(&bad) = tokens.iter().find(|&&t| t >= *vocab) {
                return Err(Error::Input(format!(
                    "token id {bad} outside vocabulary of size {vocab}"
                )));
            }
        }
        (Architecture::Mlp { .. }, Input::Tokens(_)) => {
            return Err(Error::Input("MLP needs a feature vector, got tokens".into()))
        }
        (Architecture::Lstm { .. }, Input::Features(_)) => {
            return Err(Error::Input("LSTM needs tokens, got a feature vector".into()))
        }
    }
    Ok(())
}

pub(crate) fn forward_logits(
    params: &ModelParams,
    input: Input<'_>,
    scales: &RowScales,
) -> Result<Vec<Vec<f64>>> {
    check_input(params, input)?;
    scales.check(&params.architecture().mask_sites(), input.steps())?;
    Ok(match input {
        Input::Features(x) => vec![mlp::forward(params, x, scales).logits],
        Input::Tokens(tokens) => lstm::forward(params, tokens, scales).logits,
    })
}

//! Dropout-trained models viewed as a family of evaluation-time models.
//!
//! A network trained with dropout can be evaluated in many ways: a single
//! deterministic pass with expectation-scaled weights, or Monte Carlo
//! averaging over sampled masks with any power mean between the geometric
//! (`alpha = 0`) and arithmetic (`alpha = 1`) mean, at a dropout rate scaled
//! by `lambda` and with a softmax temperature. This crate implements that
//! family together with tools that measure how tight the shared training
//! lower bound is for each member.
//!
//! Modules:
//!
//! - [`numeric`]: tensors, log-domain primitives, seeded RNG derivation and a
//!   finite-difference gradient checker.
//! - [`model`]: MLP classifier and single-layer LSTM language model with row
//!   dropout, forward/backward passes and the MAP training loss.
//! - [`family`]: power-mean aggregation, deterministic and MC prediction,
//!   dataset metrics and frequency buckets.
//! - [`bounds`]: bound decomposition, Jensen-gap estimators and the exact
//!   mask-enumeration oracle.
//! - [`harness`]: data ingestion, training, checkpoints, temperature search
//!   and sweeps.

pub mod bounds;
pub mod error;
pub mod family;
pub mod harness;
pub mod model;
pub mod numeric;

pub use error::{Error, Result};

pub use model::{
    Architecture, DropoutSite, DropoutSpec, Example, Input, LossBreakdown, MaskSet, Model,
    ModelParams, Sharing,
};
pub use family::{AggregateResult, Alpha, FamilyParams, PredictionMatrix};
pub use numeric::{SplitSeed, Tensor};

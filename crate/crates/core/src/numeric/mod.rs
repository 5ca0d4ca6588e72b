//! Deterministic numerical building blocks shared by every other module.

mod gradcheck;
mod ops;
mod rng;
mod tensor;

pub use gradcheck::finite_difference_check;
pub use ops::{
    argmax, log_softmax_with_temperature, log_sum_exp, mean, population_variance,
    softmax_with_temperature, spearman,
};
pub use rng::SplitSeed;
pub use tensor::Tensor;

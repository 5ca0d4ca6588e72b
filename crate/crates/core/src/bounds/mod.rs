//! Lower-bound analysis: Jensen-gap approximations and bounds, the exact
//! mask-enumeration oracle, Monte Carlo bound decomposition and the KL
//! factorisation check.

mod enumerate;
mod gap;
mod kl;
mod report;

pub use enumerate::{enumerate_masks_exact, ExactExpectations, MaskEnumeration, MAX_ENUMERATED_ROWS};
pub use gap::{exact_jensen_gap, h_function, jensen_gap_approx, liao_gap_bounds, GapBounds};
pub use kl::{kl_factorization_check, GaussianMixture, KlCheck, MAX_KL_DIMENSION};
pub use report::{bound_report, mc_terms, BoundReport, Estimate, TargetTerms};

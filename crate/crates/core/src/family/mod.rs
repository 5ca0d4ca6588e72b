//! The extended dropout family: evaluation by a deterministic pass or by
//! power-mean Monte Carlo averaging at a scaled dropout rate, with a softmax
//! temperature, plus dataset-level metrics.

mod aggregate;
mod metrics;
mod params;
mod predict;

pub use aggregate::{
    power_mean_aggregate, AggregateResult, PowerMeanAccumulator, PredictionMatrix, ALPHA_SWITCH,
};
pub use metrics::{
    evaluate_dataset, frequency_bucket_report, target_nlls, Bucket, BucketReport, BucketRow,
    Evaluation, TargetNll, DEFAULT_BUCKETS,
};
pub use params::{Alpha, FamilyParams};
pub use predict::{deterministic_predict, mc_predict, McStep};

pub(crate) use predict::{deterministic_logits, for_each_sample, sample_log_probs, sample_logits};

//! Experiment plumbing: configuration, data ingestion, training,
//! checkpoints, temperature search, sweeps and reports.

mod checkpoint;
mod config;
mod data;
mod optim;
mod selftest;
mod sweep;
mod temperature;
mod train;

use std::path::{Path, PathBuf};

pub use checkpoint::{Checkpoint, LogEntry, FORMAT_VERSION};
pub use config::{
    check_fractions, DataConfig, EvalGrid, ExperimentConfig, ModelSpec, OptimizerConfig,
    TokenLevel, DEFAULT_SAMPLES,
};
pub use data::{
    ingest_classification_csv, ingest_text_corpus, split_bounds, tokenize_corpus, two_moons,
    ClassificationData, Dataset, SplitData, TextCorpus, EMBEDDED_CORPUS, SPLIT_NAMES, UNK,
};
pub use optim::{clip_grad_norm, Optimizer};
pub use selftest::{run_selftest, SelftestCheck};
pub use sweep::{
    sweep, write_bucket_csv, write_sweep_csv, SweepGrid, SweepRow, BUCKET_HEADER, SWEEP_HEADER,
};
pub use temperature::{
    search_cache, temperature_linear_search, LogitCache, TemperatureGrid, TemperatureSearch,
};
pub use train::{train, train_on, BATCH_STREAM, DATA_STREAM, INIT_STREAM, MASK_STREAM};

/// Overrides the directory of relative output paths.
pub const OUT_DIR_ENV: &str = "POWERDROP_OUT_DIR";

/// Resolves an output path: relative paths go under `$POWERDROP_OUT_DIR`
/// when it is set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

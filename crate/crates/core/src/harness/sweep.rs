//! Grid sweeps over family members and CSV report emission.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{evaluate_dataset, Alpha, BucketReport, Evaluation, FamilyParams};
use crate::model::Model;
use crate::numeric::SplitSeed;

use super::config::DEFAULT_SAMPLES;
use super::data::Dataset;

pub const SWEEP_HEADER: [&str; 7] = ["split", "alpha", "lambda", "temperature", "samples", "xe", "perplexity"];

pub const BUCKET_HEADER: [&str; 8] = [
    "split", "bucket", "alpha", "lambda", "temperature", "samples", "targets", "xe",
];

/// Sweep grid file. Rows are the Cartesian product of the axes, in the
/// order split, alpha, lambda, temperature, samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default = "default_splits")]
    pub splits: Vec<String>,
    pub alphas: Vec<Alpha>,
    #[serde(default = "one")]
    pub lambdas: Vec<f64>,
    #[serde(default = "one")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate only the first `max_targets` targets of each split.
    #[serde(default)]
    pub max_targets: Option<usize>,
}

fn default_splits() -> Vec<String> {
    vec!["valid".to_string()]
}

fn one() -> Vec<f64> {
    vec![1.0]
}

fn default_samples() -> Vec<usize> {
    vec![DEFAULT_SAMPLES]
}

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: SweepGrid = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        g.points()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Every family member of the grid, validated.
    pub fn points(&self) -> Result<Vec<FamilyParams>> {
        if self.splits.is_empty() || self.alphas.is_empty() || self.lambdas.is_empty() {
            return Err(Error::config("sweep grid axes must be non-empty"));
        }
        if self.temperatures.is_empty() || self.samples.is_empty() || self.max_targets == Some(0) {
            return Err(Error::config("sweep grid axes must be non-empty"));
        }
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &lambda in &self.lambdas {
                for &t in &self.temperatures {
                    for &s in &self.samples {
                        out.push(FamilyParams::new(alpha, lambda, t, s)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub split: String,
    pub family: FamilyParams,
    pub evaluation: Evaluation,
}

/// Evaluates every grid point. All points of a split share the seed
/// `SplitSeed::new(grid.seed).child(split index)`, so they see common
/// random masks (nested across `lambda`).
pub fn sweep(model: &Model, data: &Dataset, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let points = grid.points()?;
    let root = SplitSeed::new(grid.seed);
    let mut rows = Vec::new();
    for split in &grid.splits {
        let examples = data.split(split)?.eval_examples(grid.max_targets);
        let seed = root.child(data.split_index(split)? as u64);
        for fp in &points {
            let evaluation = evaluate_dataset(model, &examples, fp, &seed)?;
            log::info!(
                "{split} alpha={} lambda={} T={} S={}: xe {:.4}",
                fp.alpha,
                fp.lambda,
                fp.temperature,
                fp.samples,
                evaluation.xe
            );
            rows.push(SweepRow {
                split: split.clone(),
                family: *fp,
                evaluation,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.split.clone(),
            r.family.alpha.to_string(),
            r.family.lambda.to_string(),
            r.family.temperature.to_string(),
            r.family.samples.to_string(),
            r.evaluation.xe.to_string(),
            r.evaluation.perplexity.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

/// Bucket rows with an empty `xe` cell where a bucket has no targets.
pub fn write_bucket_csv<W: Write>(report: &BucketReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BUCKET_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.split.clone(),
            r.bucket.clone(),
            r.family.alpha.to_string(),
            r.family.lambda.to_string(),
            r.family.temperature.to_string(),
            r.family.samples.to_string(),
            r.targets.to_string(),
            r.xe.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = SweepGrid::from_json(r#"{"alphas": ["det", 0, 1], "lambdas": [0, 0.5]}"#).unwrap();
        assert_eq!(g.points().unwrap().len(), 6);
        assert_eq!(g.splits, ["valid"]);
        assert!(SweepGrid::from_json(r#"{"alphas": [1.5]}"#).is_err());
        assert!(SweepGrid::from_json(r#"{"alphas": [1], "extra": 1}"#).is_err());
        assert!(SweepGrid::from_json(r#"{"alphas": []}"#).is_err());
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_sweep_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "split,alpha,lambda,temperature,samples,xe,perplexity\n"
        );
    }
}

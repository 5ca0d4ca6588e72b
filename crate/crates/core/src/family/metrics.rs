use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Example, Model};
use crate::numeric::{mean, SplitSeed};

use super::params::FamilyParams;
use super::predict::family_log_probs;

/// Cross entropy of one prediction target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetNll {
    pub target: usize,
    pub nll: f64,
}

/// Mean cross entropy over all targets and its exponential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub xe: f64,
    pub perplexity: f64,
    pub targets: usize,
}

impl Evaluation {
    pub fn from_nlls(nlls: &[TargetNll]) -> Result<Self> {
        if nlls.is_empty() {
            return Err(Error::domain("cannot evaluate an empty dataset"));
        }
        let xe = mean(&nlls.iter().map(|t| t.nll).collect::<Vec<_>>());
        Ok(Evaluation {
            xe,
            perplexity: xe.exp(),
            targets: nlls.len(),
        })
    }
}

/// Per-target negative log-likelihood under a family member. Example `i`
/// draws its masks from `seed.child(i)`.
pub fn target_nlls(
    model: &Model,
    dataset: &[Example],
    fp: &FamilyParams,
    seed: &SplitSeed,
) -> Result<Vec<TargetNll>> {
    if dataset.is_empty() {
        return Err(Error::domain("cannot evaluate an empty dataset"));
    }
    let mut out = Vec::new();
    for (i, ex) in dataset.iter().enumerate() {
        let targets = ex.targets();
        if targets.is_empty() {
            return Err(Error::Input(format!("example {i} has no prediction target")));
        }
        let lps = family_log_probs(model, ex.input(), fp, &seed.child(i as u64))?;
        for (lp, &y) in lps.iter().zip(targets) {
            let nll = -*lp
                .get(y)
                .ok_or_else(|| Error::Input(format!("target {y} outside the class range")))?;
            out.push(TargetNll { target: y, nll });
        }
    }
    Ok(out)
}

/// Mean cross entropy (and perplexity) of a family member on a dataset.
pub fn evaluate_dataset(
    model: &Model,
    dataset: &[Example],
    fp: &FamilyParams,
    seed: &SplitSeed,
) -> Result<Evaluation> {
    Evaluation::from_nlls(&target_nlls(model, dataset, fp, seed)?)
}

/// Predicate on a target's training-set frequency.
///
/// Text forms: `"N<"` (more than N occurrences), `"<N"` (fewer than N) and
/// `"A..B"` (at least A, fewer than B).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bucket {
    Above(u64),
    Below(u64),
    Range(u64, u64),
}

/// Row labels of the per-frequency table in the reference experiments.
pub const DEFAULT_BUCKETS: [&str; 6] = ["25000<", "5000<", "500<", "<500", "<100", "<20"];

impl Bucket {
    pub fn contains(self, freq: u64) -> bool {
        match self {
            Bucket::Above(n) => freq > n,
            Bucket::Below(n) => freq < n,
            Bucket::Range(a, b) => a <= freq && freq < b,
        }
    }

    pub fn defaults() -> Vec<Bucket> {
        DEFAULT_BUCKETS.iter().map(|s| s.parse().unwrap()).collect()
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::Above(n) => write!(f, "{n}<"),
            Bucket::Below(n) => write!(f, "<{n}"),
            Bucket::Range(a, b) => write!(f, "{a}..{b}"),
        }
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |t: &str| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::config(format!("bad frequency bucket {s:?}")))
        };
        if let Some(n) = s.strip_prefix('<') {
            Ok(Bucket::Below(num(n)?))
        } else if let Some(n) = s.strip_suffix('<') {
            Ok(Bucket::Above(num(n)?))
        } else if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            if a >= b {
                return Err(Error::config(format!("empty frequency range {s:?}")));
            }
            Ok(Bucket::Range(a, b))
        } else {
            Err(Error::config(format!(
                "frequency bucket {s:?} must look like \"N<\", \"<N\" or \"A..B\""
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketRow {
    pub split: String,
    pub bucket: String,
    pub family: FamilyParams,
    pub targets: usize,
    /// `None` when no target falls in the bucket.
    pub xe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BucketReport {
    pub rows: Vec<BucketRow>,
}

impl BucketReport {
    pub fn find(&self, split: &str, bucket: &str, family: &FamilyParams) -> Option<&BucketRow> {
        self.rows
            .iter()
            .find(|r| r.split == split && r.bucket == bucket && r.family == *family)
    }
}

/// Cross entropy per training-frequency bucket for the train and validation
/// splits. A target belongs to every bucket whose predicate its frequency
/// satisfies, so buckets may overlap. `train_frequencies[token]` must come
/// from the training split only.
pub fn frequency_bucket_report(
    model: &Model,
    train: &[Example],
    valid: &[Example],
    families: &[FamilyParams],
    buckets: &[Bucket],
    train_frequencies: &[u64],
    seed: &SplitSeed,
) -> Result<BucketReport> {
    if buckets.is_empty() {
        return Err(Error::domain("at least one frequency bucket is required"));
    }
    let mut rows = Vec::new();
    for (split_idx, (name, data)) in [("train", train), ("valid", valid)].into_iter().enumerate() {
        let split_seed = seed.child(split_idx as u64);
        for fp in families {
            let nlls = target_nlls(model, data, fp, &split_seed)?;
            for &bucket in buckets {
                let mut total = 0.0;
                let mut count = 0;
                for t in &nlls {
                    let freq = train_frequencies.get(t.target).copied().unwrap_or(0);
                    if bucket.contains(freq) {
                        total += t.nll;
                        count += 1;
                    }
                }
                rows.push(BucketRow {
                    split: name.to_string(),
                    bucket: bucket.to_string(),
                    family: *fp,
                    targets: count,
                    xe: (count > 0).then(|| total / count as f64),
                });
            }
        }
    }
    Ok(BucketReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_parsing() {
        assert_eq!("25000<".parse::<Bucket>().unwrap(), Bucket::Above(25000));
        assert_eq!("<20".parse::<Bucket>().unwrap(), Bucket::Below(20));
        assert_eq!("5..9".parse::<Bucket>().unwrap(), Bucket::Range(5, 9));
        assert!("9..5".parse::<Bucket>().is_err());
        assert!("abc".parse::<Bucket>().is_err());
        for s in DEFAULT_BUCKETS {
            assert_eq!(s.parse::<Bucket>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn bucket_predicates() {
        assert!(Bucket::Above(500).contains(501));
        assert!(!Bucket::Above(500).contains(500));
        assert!(Bucket::Below(20).contains(19));
        assert!(!Bucket::Below(20).contains(20));
        assert!(Bucket::Range(20, 100).contains(20));
        assert!(!Bucket::Range(20, 100).contains(100));
    }

    #[test]
    fn empty_dataset_is_a_domain_error() {
        assert!(matches!(Evaluation::from_nlls(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn perplexity_is_exp_xe() {
        let e = Evaluation::from_nlls(&[TargetNll { target: 0, nll: 4.110 }]).unwrap();
        assert!((e.perplexity - 60.95).abs() < 0.01);
    }
}

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// Below this exponent the power mean is evaluated as the geometric mean
/// (mean of logs); `(1/alpha) · logsumexp` loses precision as `alpha → 0`.
pub const ALPHA_SWITCH: f64 = 1e-4;

/// `S × C` matrix of per-sample log class probabilities for one prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    samples: usize,
    classes: usize,
    log_probs: Vec<f64>,
}

impl PredictionMatrix {
    /// Validates that every row is a log distribution (entries finite and
    /// `≤ 0`, exponentials summing to 1 within 1e-9).
    pub fn new(samples: usize, classes: usize, log_probs: Vec<f64>) -> Result<Self> {
        if samples == 0 || classes == 0 {
            return Err(Error::shape("prediction matrix needs S >= 1 and C >= 1"));
        }
        if log_probs.len() != samples * classes {
            return Err(Error::shape(format!(
                "{samples}×{classes} matrix needs {} entries, got {}",
                samples * classes,
                log_probs.len()
            )));
        }
        for (s, row) in log_probs.chunks(classes).enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v > 0.0) {
                return Err(Error::domain(format!(
                    "row {s} has an entry that is not a finite log probability"
                )));
            }
            let total = log_sum_exp(row)?;
            if total.abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "row {s} sums to exp({total}) instead of 1"
                )));
            }
        }
        Ok(PredictionMatrix {
            samples,
            classes,
            log_probs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::shape("ragged prediction rows"));
        }
        PredictionMatrix::new(rows.len(), classes, rows.concat())
    }

    /// Builds the matrix from probabilities (taking logs).
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self> {
        let logs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        PredictionMatrix::from_rows(&logs)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.log_probs[s * self.classes..(s + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.log_probs.chunks(self.classes)
    }

    /// Log probabilities of class `c` across samples.
    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[c])
    }
}

/// Power-mean aggregate of a prediction matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    /// `ln M_alpha` per class.
    pub unnormalized_log: Vec<f64>,
    /// `ln Σ_c M_alpha(c)`; at most 0 for `alpha ≤ 1`.
    pub log_z: f64,
    pub normalized_log: Vec<f64>,
}

/// Streams sample rows into per-class power means.
///
/// Rows must be pushed in sample-index order: the running log-sum-exp is
/// order dependent in its last bits, and a fixed order is what makes results
/// reproducible under parallel sampling.
#[derive(Clone, Debug)]
pub struct PowerMeanAccumulator {
    alpha: f64,
    geometric: bool,
    count: usize,
    max: Vec<f64>,
    sum: Vec<f64>,
    first: Option<Vec<f64>>,
    identical: bool,
}

impl PowerMeanAccumulator {
    pub fn new(alpha: f64, classes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!(
                "alpha must lie in [0, 1] (the lower bound fails for alpha > 1), got {alpha}"
            )));
        }
        Ok(PowerMeanAccumulator {
            alpha,
            geometric: alpha < ALPHA_SWITCH,
            count: 0,
            max: vec![f64::NEG_INFINITY; classes],
            sum: vec![0.0; classes],
            first: None,
            identical: true,
        })
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.sum.len());
        match &self.first {
            None => self.first = Some(row.to_vec()),
            Some(first) => {
                if self.identical && first.iter().zip(row).any(|(a, b)| a.to_bits() != b.to_bits())
                {
                    self.identical = false;
                }
            }
        }
        self.count += 1;
        if self.geometric {
            for (s, v) in self.sum.iter_mut().zip(row) {
                *s += v;
            }
        } else {
            for ((m, s), v) in self.max.iter_mut().zip(&mut self.sum).zip(row) {
                let x = self.alpha * v;
                if x > *m {
                    *s = *s * (*m - x).exp() + 1.0;
                    *m = x;
                } else {
                    *s += (x - *m).exp();
                }
            }
        }
    }

    pub fn finish(&self) -> Result<AggregateResult> {
        let first = self
            .first
            .as_ref()
            .ok_or_else(|| Error::domain("no samples to aggregate"))?;
        if self.identical {
            // The power mean of identical values is that value, and a row
            // is already a normalised distribution.
            return Ok(AggregateResult {
                unnormalized_log: first.clone(),
                log_z: 0.0,
                normalized_log: first.clone(),
            });
        }
        let n = self.count as f64;
        let unnormalized_log: Vec<f64> = if self.geometric {
            self.sum.iter().map(|s| s / n).collect()
        } else {
            let ln_n = n.ln();
            self.max
                .iter()
                .zip(&self.sum)
                .map(|(m, s)| (m + s.ln() - ln_n) / self.alpha)
                .collect()
        };
        let log_z = log_sum_exp(&unnormalized_log)?;
        let normalized_log = unnormalized_log.iter().map(|u| u - log_z).collect();
        Ok(AggregateResult {
            unnormalized_log,
            log_z,
            normalized_log,
        })
    }
}

/// Renormalised power mean of the sample distributions:
/// `ln M_alpha(c) = (1/alpha) · (logsumexp_s(alpha · ln p_sc) - ln S)`, with
/// the geometric mean below [`ALPHA_SWITCH`].
pub fn power_mean_aggregate(p: &PredictionMatrix, alpha: f64) -> Result<AggregateResult> {
    let mut acc = PowerMeanAccumulator::new(alpha, p.classes())?;
    for row in p.rows() {
        acc.push(row);
    }
    acc.finish()
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::SplitSeed;

/// Whether a recurrent model reuses one mask for the whole sequence or draws
/// a fresh one at every step. Single-step models ignore it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    #[default]
    SharedAcrossTime,
    PerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSite {
    pub site: String,
    pub rate: f64,
}

/// Dropout rates per weight matrix, the mask-sharing mode, and the default
/// evaluation-time rate multiplier `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub sites: Vec<DropoutSite>,
    #[serde(default)]
    pub sharing: Sharing,
    #[serde(default = "one")]
    pub eval_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DropoutSpec {
    fn default() -> Self {
        DropoutSpec {
            sites: Vec::new(),
            sharing: Sharing::SharedAcrossTime,
            eval_multiplier: 1.0,
        }
    }
}

impl DropoutSpec {
    pub fn uniform(sites: &[MaskSite], rate: f64) -> Self {
        DropoutSpec {
            sites: sites
                .iter()
                .map(|s| DropoutSite {
                    site: s.name.clone(),
                    rate,
                })
                .collect(),
            ..DropoutSpec::default()
        }
    }

    pub fn with_sharing(mut self, sharing: Sharing) -> Self {
        self.sharing = sharing;
        self
    }

    /// Rate for `site`; sites not listed are never dropped.
    pub fn rate(&self, site: &str) -> f64 {
        self.sites
            .iter()
            .find(|s| s.site == site)
            .map_or(0.0, |s| s.rate)
    }

    /// Checks rates and that every listed site exists in `available`.
    pub fn validate(&self, available: &[MaskSite]) -> Result<()> {
        for s in &self.sites {
            if !(0.0..=1.0).contains(&s.rate) {
                return Err(Error::domain(format!(
                    "dropout rate for {} must lie in [0, 1], got {}",
                    s.site, s.rate
                )));
            }
            if !available.iter().any(|a| a.name == s.site) {
                let names: Vec<_> = available.iter().map(|a| a.name.as_str()).collect();
                return Err(Error::config(format!(
                    "unknown dropout site {:?}; this architecture has {names:?}",
                    s.site
                )));
            }
        }
        for (i, s) in self.sites.iter().enumerate() {
            if self.sites[..i].iter().any(|o| o.site == s.site) {
                return Err(Error::config(format!("dropout site {} listed twice", s.site)));
            }
        }
        check_multiplier(self.eval_multiplier)
    }
}

pub(crate) fn check_multiplier(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!(
            "dropout rate multiplier lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

/// A weight matrix whose rows can be dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSite {
    pub name: String,
    pub rows: usize,
    /// Rows are applied at every step of a sequence.
    pub time_varying: bool,
}

/// Keep bits for one site: `steps × rows`, with `steps == 1` when the mask is
/// shared across time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteMask {
    pub name: String,
    pub rows: usize,
    pub steps: usize,
    pub keep: Vec<bool>,
}

impl SiteMask {
    /// Mask applied at step `t`.
    pub fn at(&self, t: usize) -> &[bool] {
        let t = if self.steps == 1 { 0 } else { t };
        &self.keep[t * self.rows..(t + 1) * self.rows]
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// One sampled set of row masks, aligned with the model's mask sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSet {
    pub sites: Vec<SiteMask>,
}

impl MaskSet {
    pub fn all_kept(sites: &[MaskSite]) -> Self {
        MaskSet {
            sites: sites
                .iter()
                .map(|s| SiteMask {
                    name: s.name.clone(),
                    rows: s.rows,
                    steps: 1,
                    keep: vec![true; s.rows],
                })
                .collect(),
        }
    }
}

/// Draws row masks, keeping each row with probability `1 - rate_scale * p`.
///
/// Site `i` uses the stream `seed.child(i)` and one uniform per row: a row is
/// kept when its uniform is at least the effective rate. Masks drawn from the
/// same seed at different `rate_scale` are therefore nested.
pub fn sample_masks(
    spec: &DropoutSpec,
    sites: &[MaskSite],
    seed: &SplitSeed,
    t_steps: usize,
    rate_scale: f64,
) -> Result<MaskSet> {
    if t_steps == 0 {
        return Err(Error::domain("t_steps must be at least 1"));
    }
    if !(0.0..=1.0).contains(&rate_scale) {
        return Err(Error::domain(format!(
            "rate scale must lie in [0, 1], got {rate_scale}"
        )));
    }
    let mut out = Vec::with_capacity(sites.len());
    for (i, site) in sites.iter().enumerate() {
        let rate = rate_scale * spec.rate(&site.name);
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::domain(format!(
                "effective rate {rate} for {} outside [0, 1]",
                site.name
            )));
        }
        let steps = if site.time_varying && spec.sharing == Sharing::PerStep {
            t_steps
        } else {
            1
        };
        let mut rng = seed.child(i as u64).rng();
        let keep = (0..steps * site.rows)
            .map(|_| rng.random::<f64>() >= rate)
            .collect();
        out.push(SiteMask {
            name: site.name.clone(),
            rows: site.rows,
            steps,
            keep,
        });
    }
    Ok(MaskSet { sites: out })
}

/// Multipliers applied to the rows of each masked weight matrix.
///
/// Dropping row `j` of a weight matrix is the same as scaling the `j`-th
/// input unit, so forward passes take these multipliers instead of masks.
/// Training and every evaluation mode go through the same code path, which
/// keeps e.g. the `lambda = 0` Monte Carlo pass bitwise equal to the
/// deterministic pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RowScales {
    sites: Vec<SiteScales>,
}

#[derive(Clone, Debug, PartialEq)]
struct SiteScales {
    rows: usize,
    steps: usize,
    values: Vec<f64>,
}

impl RowScales {
    fn from_fn(masks: &MaskSet, mut f: impl FnMut(usize, bool) -> f64) -> Self {
        RowScales {
            sites: masks
                .sites
                .iter()
                .enumerate()
                .map(|(i, m)| SiteScales {
                    rows: m.rows,
                    steps: m.steps,
                    values: m.keep.iter().map(|&k| f(i, k)).collect(),
                })
                .collect(),
        }
    }

    /// Training-time masking: kept rows unscaled, dropped rows zeroed.
    pub fn training(masks: &MaskSet) -> Self {
        RowScales::from_fn(masks, |_, k| if k { 1.0 } else { 0.0 })
    }

    /// Evaluation at rate `lambda * p`. Kept rows are scaled by
    /// `(1 - p) / (1 - lambda * p)` so each row's expected contribution
    /// matches training; at `lambda = 1` this is the training mask itself.
    pub fn evaluation(masks: &MaskSet, spec: &DropoutSpec, lambda: f64) -> Self {
        let factors: Vec<f64> = masks
            .sites
            .iter()
            .map(|m| {
                let p = spec.rate(&m.name);
                let eff = lambda * p;
                if eff < 1.0 {
                    (1.0 - p) / (1.0 - eff)
                } else {
                    0.0
                }
            })
            .collect();
        RowScales::from_fn(masks, |i, k| if k { factors[i] } else { 0.0 })
    }

    /// Expectation propagation: every row scaled by its keep probability.
    pub fn deterministic(sites: &[MaskSite], spec: &DropoutSpec) -> Self {
        RowScales {
            sites: sites
                .iter()
                .map(|s| SiteScales {
                    rows: s.rows,
                    steps: 1,
                    values: vec![1.0 - spec.rate(&s.name); s.rows],
                })
                .collect(),
        }
    }

    pub fn ones(sites: &[MaskSite]) -> Self {
        RowScales::training(&MaskSet::all_kept(sites))
    }

    /// Multipliers for site `site` at step `t`.
    pub fn at(&self, site: usize, t: usize) -> &[f64] {
        let s = &self.sites[site];
        let t = if s.steps == 1 { 0 } else { t };
        &s.values[t * s.rows..(t + 1) * s.rows]
    }

    /// Checks the scales fit `sites` for a sequence of `t_steps` steps.
    pub fn check(&self, sites: &[MaskSite], t_steps: usize) -> Result<()> {
        if self.sites.len() != sites.len() {
            return Err(Error::shape(format!(
                "{} mask sites supplied, model has {}",
                self.sites.len(),
                sites.len()
            )));
        }
        for (s, site) in self.sites.iter().zip(sites) {
            if s.rows != site.rows {
                return Err(Error::shape(format!(
                    "mask for {} has {} rows, weight matrix has {}",
                    site.name, s.rows, site.rows
                )));
            }
            if s.steps != 1 && s.steps < t_steps {
                return Err(Error::shape(format!(
                    "per-step mask for {} covers {} steps, sequence has {t_steps}",
                    site.name, s.steps
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sites(rows: usize) -> Vec<MaskSite> {
        vec![MaskSite {
            name: "a".into(),
            rows,
            time_varying: true,
        }]
    }

    fn spec(rate: f64, sharing: Sharing) -> DropoutSpec {
        DropoutSpec::uniform(&sites(1), rate).with_sharing(sharing)
    }

    #[test]
    fn no_dropout_keeps_everything() {
        let m = sample_masks(&spec(0.0, Sharing::PerStep), &sites(50), &SplitSeed::new(1), 3, 1.0)
            .unwrap();
        assert!(m.sites[0].keep.iter().all(|&k| k));
    }

    #[test]
    fn full_dropout_drops_everything() {
        let m = sample_masks(&spec(1.0, Sharing::SharedAcrossTime), &sites(50), &SplitSeed::new(1), 3, 1.0)
            .unwrap();
        assert!(m.sites[0].keep.iter().all(|&k| !k));
    }

    #[test]
    fn kept_fraction_is_binomial() {
        let n = 10_000;
        let m = sample_masks(&spec(0.5, Sharing::SharedAcrossTime), &sites(n), &SplitSeed::new(9), 1, 1.0)
            .unwrap();
        let frac = m.sites[0].kept() as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn sharing_modes() {
        let shared = sample_masks(&spec(0.5, Sharing::SharedAcrossTime), &sites(8), &SplitSeed::new(2), 8, 1.0)
            .unwrap();
        assert_eq!(shared.sites[0].steps, 1);
        for t in 0..8 {
            assert_eq!(shared.sites[0].at(t), shared.sites[0].at(0));
        }
        let per = sample_masks(&spec(0.5, Sharing::PerStep), &sites(8), &SplitSeed::new(2), 8, 1.0)
            .unwrap();
        assert_eq!(per.sites[0].steps, 8);
        assert_eq!(per.sites[0].keep.len(), 64);
    }

    #[test]
    fn rate_scale_nests_masks() {
        let s = spec(0.6, Sharing::SharedAcrossTime);
        let full = sample_masks(&s, &sites(200), &SplitSeed::new(4), 1, 1.0).unwrap();
        let half = sample_masks(&s, &sites(200), &SplitSeed::new(4), 1, 0.5).unwrap();
        for (f, h) in full.sites[0].keep.iter().zip(&half.sites[0].keep) {
            assert!(!f || *h, "a row kept at the full rate must be kept at half rate");
        }
    }

    #[test]
    fn precondition_errors() {
        let s = spec(0.5, Sharing::PerStep);
        assert!(sample_masks(&s, &sites(2), &SplitSeed::new(0), 0, 1.0).is_err());
        assert!(sample_masks(&s, &sites(2), &SplitSeed::new(0), 1, 1.5).is_err());
        assert!(spec(1.5, Sharing::PerStep).validate(&sites(1)).is_err());
        let unknown = DropoutSpec {
            sites: vec![DropoutSite { site: "zz".into(), rate: 0.1 }],
            ..DropoutSpec::default()
        };
        assert!(matches!(unknown.validate(&sites(1)), Err(Error::Config(_))));
    }

    #[test]
    fn evaluation_scales() {
        let s = spec(0.5, Sharing::SharedAcrossTime);
        let masks = MaskSet {
            sites: vec![SiteMask { name: "a".into(), rows: 2, steps: 1, keep: vec![true, false] }],
        };
        assert_eq!(RowScales::evaluation(&masks, &s, 1.0).at(0, 0), &[1.0, 0.0]);
        assert_eq!(RowScales::evaluation(&masks, &s, 0.0).at(0, 0), &[0.5, 0.0]);
        assert_eq!(RowScales::deterministic(&sites(2), &s).at(0, 5), &[0.5, 0.5]);
        assert_eq!(RowScales::training(&masks).at(0, 3), &[1.0, 0.0]);
    }
}

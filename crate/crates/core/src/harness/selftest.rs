//! Quick built-in checks of the enumeration oracle and the Jensen-gap
//! sandwich, run by the `selftest` command.

use rand::Rng;
use serde::Serialize;

use crate::bounds::{enumerate_masks_exact, exact_jensen_gap, liao_gap_bounds, mc_terms};
use crate::error::Result;
use crate::family::{deterministic_predict, mc_predict, FamilyParams};
use crate::model::{Architecture, DropoutSpec, Input, Model, ModelParams};
use crate::numeric::SplitSeed;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_mlp(seed: &SplitSeed) -> Result<Model> {
    let arch = Architecture::Mlp {
        inputs: 3,
        hidden: vec![5],
        classes: 3,
    };
    let params = ModelParams::init(arch.clone(), seed)?;
    Model::new(params, DropoutSpec::uniform(&arch.mask_sites(), 0.4))
}

fn chain_check() -> Result<SelftestCheck> {
    let mut worst: f64 = f64::NEG_INFINITY;
    for m in 0..5u64 {
        let model = small_mlp(&SplitSeed::new(100 + m))?;
        let x = [0.5, -1.0, 1.5];
        let e = enumerate_masks_exact(&model, Input::Features(&x), 1.0, 1.0)?;
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let ex = e.exact(alpha)?;
            worst = worst.max(ex.log_z);
            for c in 0..3 {
                worst = worst.max(ex.expected_log[c] - ex.power_mean_log[c]);
            }
        }
    }
    Ok(SelftestCheck {
        name: "enumeration chain",
        passed: worst <= 1e-12,
        detail: format!("largest violation {worst:.3e} (allowed 1e-12)"),
    })
}

fn mc_vs_enumeration() -> Result<SelftestCheck> {
    let model = small_mlp(&SplitSeed::new(7))?;
    let x = [1.0, 0.2, -0.7];
    let alpha = 0.5;
    let exact = enumerate_masks_exact(&model, Input::Features(&x), 1.0, 1.0)?.exact(alpha)?;
    let fp = FamilyParams::power(alpha, 1.0, 1.0, 20_000)?;
    let step = mc_predict(&model, Input::Features(&x), &fp, &SplitSeed::new(8))?.remove(0);
    let mut worst: f64 = 0.0;
    for c in 0..3 {
        let t = mc_terms(&step.samples, alpha, c)?;
        worst = worst.max((t.power_mean.value - exact.power_mean_log[c]).abs() / t.power_mean.std_error);
    }
    Ok(SelftestCheck {
        name: "monte carlo vs enumeration",
        passed: worst < 3.0,
        detail: format!("largest deviation {worst:.2} standard errors (allowed 3)"),
    })
}

fn sandwich_check() -> Result<SelftestCheck> {
    let mut failures = 0;
    let mut sets = vec![vec![0.4, 0.6]];
    let mut rng = SplitSeed::new(31).rng();
    for _ in 0..100 {
        let n = rng.random_range(2..40);
        sets.push((0..n).map(|_| rng.random_range(0.05..1.0)).collect());
    }
    for s in &sets {
        let b = liao_gap_bounds(s, None)?;
        let gap = exact_jensen_gap(s)?;
        if !(b.lower <= gap && gap <= b.upper) {
            failures += 1;
        }
    }
    Ok(SelftestCheck {
        name: "jensen gap sandwich",
        passed: failures == 0,
        detail: format!("{failures} of {} sample sets outside their bounds", sets.len()),
    })
}

fn collapse_check() -> Result<SelftestCheck> {
    let model = small_mlp(&SplitSeed::new(3))?;
    let x = [0.3, 0.3, -0.3];
    let det = deterministic_predict(&model, Input::Features(&x), 1.0)?;
    let mut same = true;
    for alpha in [0.0, 0.5, 1.0] {
        for s in [1, 7] {
            let fp = FamilyParams::power(alpha, 0.0, 1.0, s)?;
            let mc = mc_predict(&model, Input::Features(&x), &fp, &SplitSeed::new(4))?;
            same &= mc[0].aggregate.normalized_log == det[0];
        }
    }
    Ok(SelftestCheck {
        name: "lambda = 0 collapse",
        passed: same,
        detail: "Monte Carlo at lambda 0 equals the deterministic pass bit for bit".into(),
    })
}

pub fn run_selftest() -> Result<Vec<SelftestCheck>> {
    Ok(vec![
        chain_check()?,
        mc_vs_enumeration()?,
        sandwich_check()?,
        collapse_check()?,
    ])
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::run_selftest().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}

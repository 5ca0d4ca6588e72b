//! Jensen-gap estimators for `φ(l) = -ln l`: the exact discrete gap, the
//! second-order approximation `var / (2 mean²)`, and the variance sandwich
//! `inf h · var ≤ gap ≤ sup h · var`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean, population_variance};

/// Below this relative distance `|l - mu| / mu` the series expansion of `h`
/// is used instead of the closed form.
const SERIES_RADIUS: f64 = 1e-3;

const GRID_POINTS: usize = 1000;

/// `h(l; mu) = (φ(l) - φ(mu)) / (l - mu)² - φ'(mu) / (l - mu)` with
/// `φ = -ln`, continuous at `l = mu` where it equals `1 / (2 mu²)`.
pub fn h_function(l: f64, mu: f64) -> Result<f64> {
    if !(l > 0.0 && mu > 0.0 && l.is_finite() && mu.is_finite()) {
        return Err(Error::domain(format!(
            "h(l; mu) needs l > 0 and mu > 0, got l = {l}, mu = {mu}"
        )));
    }
    let x = (l - mu) / mu;
    // h = (x - ln(1 + x)) / (mu² x²)
    let scaled = if x.abs() < SERIES_RADIUS {
        0.5 - x / 3.0 + x * x / 4.0 - x.powi(3) / 5.0 + x.powi(4) / 6.0 - x.powi(5) / 7.0
    } else {
        (x - x.ln_1p()) / (x * x)
    };
    Ok(scaled / (mu * mu))
}

/// `ln(mean L) - mean(ln L)` on the empirical distribution of `samples`.
pub fn exact_jensen_gap(samples: &[f64]) -> Result<f64> {
    check_positive(samples)?;
    let logs: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
    Ok(mean(samples).ln() - mean(&logs))
}

/// `var(L) / (2 (E L)²)`, with the population variance.
pub fn jensen_gap_approx(samples: &[f64]) -> Result<f64> {
    check_positive(samples)?;
    let m = mean(samples);
    if m == 0.0 {
        return Err(Error::domain("mean of samples is zero"));
    }
    Ok(population_variance(samples) / (2.0 * m * m))
}

fn check_positive(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if let Some(bad) = samples.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::domain(format!(
            "Jensen-gap samples must be positive and finite, found {bad}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
    pub variance: f64,
    pub mean: f64,
    pub support: (f64, f64),
    /// Whether `h` was confirmed monotone on the support, so that the
    /// endpoint values are its extrema.
    pub monotone: bool,
}

/// Variance-multiplicative bounds on the Jensen gap of `-ln`.
///
/// Without an explicit support the observed range widened by a relative
/// margin of 1e-9 is used. `h(·; mu)` is decreasing in `l` for `-ln`, so its
/// extrema sit at the support endpoints; this is checked on a 1000-point grid
/// and the grid extremes are used if the check fails.
pub fn liao_gap_bounds(samples: &[f64], support: Option<(f64, f64)>) -> Result<GapBounds> {
    check_positive(samples)?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(0.0, f64::max);
    let (a, b) = match support {
        Some((a, b)) => {
            if !(a > 0.0 && a < b && b.is_finite()) {
                return Err(Error::domain(format!(
                    "support must satisfy 0 < a < b < inf, got ({a}, {b})"
                )));
            }
            if lo < a || hi > b {
                return Err(Error::domain(format!(
                    "samples span [{lo}, {hi}], outside the support ({a}, {b})"
                )));
            }
            (a, b)
        }
        None => (lo * (1.0 - 1e-9), hi * (1.0 + 1e-9)),
    };
    let mu = mean(samples);
    let variance = population_variance(samples);

    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| {
            let l = a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64;
            h_function(l.max(a).min(b), mu)
        })
        .collect::<Result<_>>()?;
    let h_a = grid[0];
    let h_b = grid[GRID_POINTS - 1];
    let monotone = grid
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    let (inf, sup) = if monotone {
        (h_b, h_a)
    } else {
        let h_mu = h_function(mu, mu)?;
        grid.iter().chain([&h_mu]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| {
            (lo.min(h), hi.max(h))
        })
    };
    Ok(GapBounds {
        lower: inf * variance,
        upper: sup * variance,
        variance,
        mean: mu,
        support: (a, b),
        monotone,
    })
}

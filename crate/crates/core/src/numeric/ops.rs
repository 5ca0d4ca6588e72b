use crate::error::{Error, Result};

/// `ln Σ exp(v_i)` by max-shift. Entries may be `-inf` as long as at least
/// one is finite.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::domain("log_sum_exp of an empty vector"));
    }
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        if x.is_nan() || x == f64::INFINITY {
            return Err(Error::domain(format!("log_sum_exp entry {x} is not allowed")));
        }
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::domain("log_sum_exp of all -inf entries"));
    }
    let mut sum = 0.0;
    for &x in v {
        sum += (x - max).exp();
    }
    Ok(max + sum.ln())
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::domain(format!(
            "softmax temperature must be finite and > 0, got {temperature}"
        )));
    }
    Ok(())
}

/// `log softmax(logits / T)`.
pub fn log_softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::domain("logits must be finite"));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let lse = log_sum_exp(&scaled)?;
    Ok(scaled.into_iter().map(|z| z - lse).collect())
}

/// `softmax(logits / T)`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if logits.is_empty() {
        return Err(Error::domain("softmax of an empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::domain("logits must be finite"));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Arithmetic mean. Finite inputs are accumulated as offsets from the first
/// value, so identical inputs give that value exactly.
pub fn mean(v: &[f64]) -> f64 {
    let first = v.first().copied().unwrap_or(f64::NAN);
    if !first.is_finite() {
        return v.iter().sum::<f64>() / v.len() as f64;
    }
    first + v.iter().map(|x| x - first).sum::<f64>() / v.len() as f64
}

/// Variance with denominator `n`.
pub fn population_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` for mismatched lengths, fewer than two
/// points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lse_of_probabilities_summing_to_one() {
        let v = [0.5f64.ln(), 0.5f64.ln()];
        assert!(log_sum_exp(&v).unwrap().abs() < 1e-15);
    }

    #[test]
    fn spearman_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        // scipy.stats.spearmanr([1,2,3,4,5], [2,1,4,3,5]) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        // with ties: spearmanr([1,2,3,4], [1,1,2,3]) = 0.9486832980505138
        let r = spearman(&x, &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 4]), None);
    }

    #[test]
    fn lse_of_zeros() {
        let got = log_sum_exp(&[0.0, 0.0, 0.0]).unwrap();
        assert!((got - 1.0986122886681098).abs() < 1e-15);
    }

    #[test]
    fn lse_of_very_negative_entries() {
        let got = log_sum_exp(&[-1000.0, -1000.0]).unwrap();
        assert!((got - (-999.3068528194401)).abs() < 1e-12);
    }

    #[test]
    fn lse_domain_errors() {
        assert!(log_sum_exp(&[]).is_err());
        assert!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).is_err());
        assert!(log_sum_exp(&[f64::NAN]).is_err());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_with_temperature(&[0.0, 0.0], 1.0).unwrap(), vec![0.5, 0.5]);
        let p = softmax_with_temperature(&[1.0, 0.0], 2.0).unwrap();
        assert!((p[0] - 0.6224593312018546).abs() < 1e-12);
        assert!((p[1] - 0.3775406687981454).abs() < 1e-12);
        let p = softmax_with_temperature(&[3.0, 1.0, 0.0], 1e9).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(softmax_with_temperature(&[1.0], 0.0).is_err());
        assert!(softmax_with_temperature(&[1.0], -1.0).is_err());
        assert!(log_softmax_with_temperature(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn argmax_ties_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    fn logits() -> impl Strategy<Value = Vec<f64>> {
        // multiples of 1/8 keep distinct logits distinct after scaling
        prop::collection::vec((-160i32..160).prop_map(|k| k as f64 / 8.0), 1..12)
    }

    fn temperature() -> impl Strategy<Value = f64> {
        (-3.0f64..3.0).prop_map(|e| 10f64.powf(e))
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in logits(), t in temperature()) {
            let p = softmax_with_temperature(&z, t).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (x, zi) in p.iter().zip(&z) {
                prop_assert!((0.0..=1.0).contains(x));
                // strictly inside (0, 1) unless the other terms vanish below rounding
                let spread = z.iter().map(|v| (v - zi).abs()).fold(0.0, f64::max) / t;
                if z.len() > 1 && spread < 30.0 {
                    prop_assert!(*x > 0.0 && *x < 1.0);
                }
            }
        }

        #[test]
        fn softmax_preserves_argmax(z in logits(), t in temperature()) {
            let p = softmax_with_temperature(&z, t).unwrap();
            prop_assert_eq!(argmax(&p), argmax(&z));
        }

        #[test]
        fn lse_shift_equivariance(
            v in prop::collection::vec(-50.0f64..50.0, 1..20),
            c in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = log_sum_exp(&shifted).unwrap();
            let rhs = log_sum_exp(&v).unwrap() + c;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}

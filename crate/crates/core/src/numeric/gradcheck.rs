use crate::error::{Error, Result};

/// Compares an analytic gradient against central differences.
///
/// Returns `max_i |fd_i - grad_i| / max(1, |fd_i|, |grad_i|)`. The objective is
/// evaluated twice at `params` first; differing bits mean it is not a pure
/// function of its argument and the comparison would be meaningless.
pub fn finite_difference_check<F>(
    mut f: F,
    params: &[f64],
    analytic_grad: &[f64],
    epsilon: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::domain(format!(
            "finite-difference epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    if params.len() != analytic_grad.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic_grad.len()
        )));
    }
    let first = f(params);
    let second = f(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::Contract(format!(
            "objective is not deterministic: {first} then {second}"
        )));
    }

    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + epsilon;
        let plus = f(&theta);
        theta[i] = orig - epsilon;
        let minus = f(&theta);
        theta[i] = orig;
        let fd = (plus - minus) / (2.0 * epsilon);
        let g = analytic_grad[i];
        let err = (fd - g).abs() / 1.0f64.max(fd.abs()).max(g.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = finite_difference_check(|t| t[0] * t[0], &[3.0], &[6.0], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn planted_bug_is_caught() {
        let err = finite_difference_check(|t| t[0] * t[0], &[3.0], &[12.0], 1e-5).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn rejects_nondeterministic_objective() {
        let mut calls = 0u32;
        let res = finite_difference_check(
            |t| {
                calls += 1;
                t[0] + calls as f64
            },
            &[1.0],
            &[1.0],
            1e-5,
        );
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn epsilon_domain() {
        assert!(finite_difference_check(|t| t[0], &[1.0], &[1.0], 1e-2).is_err());
        assert!(finite_difference_check(|t| t[0], &[1.0], &[1.0], 1e-8).is_err());
        assert!(finite_difference_check(|t| t[0], &[1.0], &[1.0, 2.0], 1e-5).is_err());
    }
}

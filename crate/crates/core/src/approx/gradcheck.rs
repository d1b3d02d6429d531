use crate::{Error, Result, Scalar};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FdReport<T> {
    pub analytic: Vec<T>,
    pub numeric: Vec<T>,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, floor)` per coordinate.
    pub rel_errors: Vec<T>,
    pub max_rel_error: T,
    pub worst_index: usize,
    /// Coordinates whose relative error exceeds the tolerance.
    pub failed: Vec<usize>,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `loss` around `params`.
pub fn finite_diff_check<T, F>(params: &[T], analytic: &[T], mut loss: F, h: T, tol: T) -> Result<FdReport<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let floor = T::lit(REL_ERROR_FLOOR);
    let two = T::lit(2.0);
    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut rel_errors = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(&x);
        x[i] = orig - h;
        let down = loss(&x);
        x[i] = orig;
        let n = (up - down) / (two * h);
        let a = analytic[i];
        let denom = a.abs().max(n.abs()).max(floor);
        numeric.push(n);
        rel_errors.push((a - n).abs() / denom);
    }
    let mut worst_index = 0;
    for (i, e) in rel_errors.iter().enumerate() {
        if *e > rel_errors[worst_index] {
            worst_index = i;
        }
    }
    let max_rel_error = rel_errors.get(worst_index).copied().unwrap_or(T::zero());
    let failed: Vec<usize> = rel_errors
        .iter()
        .enumerate()
        .filter(|(_, e)| !(**e < tol))
        .map(|(i, _)| i)
        .collect();
    Ok(FdReport {
        analytic: analytic.to_vec(),
        numeric,
        rel_errors,
        max_rel_error,
        worst_index,
        passed: failed.is_empty(),
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_has_identity_gradient() {
        let theta = [0.3, -1.2, 2.5];
        let rep = finite_diff_check(&theta, &theta, |p| p.iter().map(|v| v * v).sum::<f64>() / 2.0, 1e-5, 1e-4).unwrap();
        assert!(rep.passed);
        assert!(rep.max_rel_error < 1e-9);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let rep = finite_diff_check(&[1.0, 2.0], &[0.0, 0.0], |_| 4.2f64, 1e-5, 1e-4).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.numeric, vec![0.0, 0.0]);
    }

    #[test]
    fn corrupted_coordinate_is_flagged() {
        let theta = [0.5, -0.25, 1.0];
        let mut g = theta.to_vec();
        g[1] *= 2.0;
        let rep = finite_diff_check(&theta, &g, |p| p.iter().map(|v| v * v).sum::<f64>() / 2.0, 1e-5, 1e-4).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.failed, vec![1]);
        assert_eq!(rep.worst_index, 1);
    }

    #[test]
    fn non_positive_step_is_rejected() {
        assert!(finite_diff_check(&[1.0], &[1.0], |_| 0.0f64, 0.0, 1e-4).is_err());
    }
}

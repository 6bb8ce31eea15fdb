use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{DidError, Result};
use crate::linalg::{symmetric_pinv, Matrix};
use crate::scalar::Scalar;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const WALD_EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest<T> {
    pub statistic: T,
    /// Retained rank of the covariance.
    pub df: usize,
    pub p_value: f64,
}

/// Joint test of `theta = 0` using the pseudo-inverse of `cov`.
pub fn pretrend_wald_test<T: Scalar>(theta: &[T], cov: &Matrix<T>) -> Result<WaldTest<T>> {
    let k = theta.len();
    if k == 0 {
        return Err(DidError::EmptyInput("pre-period estimates"));
    }
    if cov.rows() != k || cov.cols() != k {
        return Err(DidError::InvalidMatrix(format!(
            "covariance is {}x{}, expected {k}x{k}",
            cov.rows(),
            cov.cols()
        )));
    }
    if !cov.is_finite() || theta.iter().any(|t| !t.is_finite()) {
        return Err(DidError::InvalidMatrix("non-finite pre-period estimates or covariance".into()));
    }
    let mut sym = cov.clone();
    sym.symmetrize();
    let (pinv, df) = symmetric_pinv(&sym, T::of(WALD_EIGEN_TOL));
    if theta.iter().all(|t| t.is_zero()) {
        return Ok(WaldTest {
            statistic: T::zero(),
            df,
            p_value: 1.0,
        });
    }
    if df == 0 {
        return Err(DidError::DegenerateCovariance(
            "pre-period covariance is zero; Wald statistic undefined".into(),
        ));
    }
    let v = pinv.matvec(theta);
    let statistic: T = theta.iter().zip(&v).map(|(&a, &b)| a * b).sum();
    let statistic = statistic.max(T::zero());
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(WaldTest {
        statistic,
        df,
        p_value: chi.sf(statistic.as_f64()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_theta() {
        let w = pretrend_wald_test(&[0.0, 0.0], &Matrix::identity(2)).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert_eq!(w.p_value, 1.0);
    }

    #[test]
    fn one_point_96_sigma_has_five_percent_p() {
        let sigma: f64 = 0.3;
        let w = pretrend_wald_test(&[1.959963984540054 * sigma], &Matrix::from_diagonal(&[sigma * sigma])).unwrap();
        assert_eq!(w.df, 1);
        assert!((w.p_value - 0.05).abs() < 1e-3);
    }

    #[test]
    fn rank_deficient_covariance_uses_retained_rank() {
        // Second statistic duplicates the first.
        let cov: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let w = pretrend_wald_test(&[2.0, 2.0], &cov).unwrap();
        assert_eq!(w.df, 1);
        assert!((w.statistic - 4.0).abs() < 1e-10);
    }

    #[test]
    fn scale_equivariance() {
        let theta = [0.1, -0.05, 0.2];
        let cov = Matrix::from_rows(&[vec![0.04, 0.01, 0.0], vec![0.01, 0.09, 0.02], vec![0.0, 0.02, 0.16]]);
        let a = pretrend_wald_test(&theta, &cov).unwrap();
        let c = 7.5;
        let scaled: Vec<f64> = theta.iter().map(|t| t * c).collect();
        let b = pretrend_wald_test(&scaled, &cov.scale(c * c)).unwrap();
        assert!((a.p_value - b.p_value).abs() < 1e-12);
        assert_eq!(a.df, 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pretrend_wald_test::<f64>(&[], &Matrix::zeros(0, 0)),
            Err(DidError::EmptyInput(_))
        ));
        assert!(matches!(
            pretrend_wald_test(&[1.0], &Matrix::zeros(1, 1)),
            Err(DidError::DegenerateCovariance(_))
        ));
        assert!(pretrend_wald_test(&[1.0, 2.0], &Matrix::identity(3)).is_err());
    }
}

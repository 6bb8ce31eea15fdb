//! Restricted (natural) cubic spline basis in the truncated-power form.

use crate::error::{DidError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Default knot quantiles for 3 to 7 knots.
pub fn default_knot_quantiles(n_knots: usize) -> Vec<f64> {
    match n_knots {
        3 => vec![0.10, 0.50, 0.90],
        4 => vec![0.05, 0.35, 0.65, 0.95],
        5 => vec![0.05, 0.275, 0.50, 0.725, 0.95],
        6 => vec![0.05, 0.23, 0.41, 0.59, 0.77, 0.95],
        7 => vec![0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975],
        k => (0..k).map(|i| 0.05 + 0.90 * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Linear-interpolation sample quantile (`(n - 1) p` positioning) of sorted data.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::of(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcsBasis<T> {
    knots: Vec<T>,
}

impl<T: Scalar> RcsBasis<T> {
    /// Places knots at the default quantiles of `x`.
    pub fn from_data(x: &[T], n_knots: usize) -> Result<Self> {
        if n_knots < 3 {
            return Err(DidError::InvalidConfig(format!(
                "restricted cubic splines need at least 3 knots, got {n_knots}"
            )));
        }
        let mut sorted: Vec<T> = x.to_vec();
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(DidError::InvalidMatrix("spline input is not finite".into()));
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < n_knots {
            return Err(DidError::InvalidConfig(format!(
                "{} distinct values cannot support {n_knots} knots",
                distinct.len()
            )));
        }
        let knots: Vec<T> = default_knot_quantiles(n_knots)
            .into_iter()
            .map(|p| quantile_sorted(&sorted, p))
            .collect();
        Self::with_knots(knots)
    }

    pub fn with_knots(knots: Vec<T>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(DidError::InvalidConfig("need at least 3 knots".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DidError::InvalidConfig(
                "spline knots are not strictly increasing (too many tied values)".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn n_columns(&self) -> usize {
        self.knots.len() - 1
    }

    /// Basis row at `x`: the linear term followed by `k - 2` nonlinear terms,
    /// each scaled by `(t_k - t_1)^2`.
    pub fn eval_row(&self, x: T) -> Vec<T> {
        let k = self.knots.len();
        let t = &self.knots;
        let (t_last, t_pen) = (t[k - 1], t[k - 2]);
        let norm = (t_last - t[0]) * (t_last - t[0]);
        let cube = |v: T| {
            let p = v.max(T::zero());
            p * p * p
        };
        let mut row = Vec::with_capacity(k - 1);
        row.push(x);
        for &tj in &t[..k - 2] {
            let h = cube(x - tj) - cube(x - t_pen) * (t_last - tj) / (t_last - t_pen)
                + cube(x - t_last) * (t_pen - tj) / (t_last - t_pen);
            row.push(h / norm);
        }
        row
    }

    pub fn eval(&self, xs: &[T]) -> Matrix<T> {
        let mut data = Vec::with_capacity(xs.len() * self.n_columns());
        for &x in xs {
            data.extend(self.eval_row(x));
        }
        Matrix::from_row_major(xs.len(), self.n_columns(), data)
    }
}

/// Restricted cubic spline basis of `x` with `n_knots` knots at the default
/// quantiles: `n_knots - 1` columns, linear beyond the boundary knots.
pub fn spline_basis<T: Scalar>(x: &[T], n_knots: usize) -> Result<Matrix<T>> {
    Ok(RcsBasis::from_data(x, n_knots)?.eval(x))
}

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{DidError, Result};
use crate::linalg::{Matrix, RankRevealingQr};
use crate::scalar::Scalar;

/// Cluster sandwich covariance over the kept columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterVcov<T> {
    pub matrix: Matrix<T>,
    pub n_clusters: usize,
}

/// Ordinary least squares fit.
///
/// Columns found collinear with earlier columns are dropped: their
/// coefficient is `None` and they are absent from the covariance matrices,
/// which are indexed by position in [`OlsFit::kept`].
#[derive(Debug, Clone)]
pub struct OlsFit<T> {
    pub column_names: Vec<String>,
    pub coefficients: Vec<Option<T>>,
    pub residuals: Vec<T>,
    pub n: usize,
    pub rank: usize,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub vcov_classical: Matrix<T>,
    pub vcov_cluster: Option<ClusterVcov<T>>,
    design: Matrix<T>,
    scales: Vec<T>,
    /// `(X̃ᵀX̃)⁻¹` of the scaled kept columns.
    scaled_bread: Matrix<T>,
}

pub fn ols_fit<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<OlsFit<T>> {
    let names = (1..=x.cols()).map(|j| format!("x{j}")).collect();
    ols_fit_named(x, y, names)
}

pub fn ols_fit_named<T: Scalar>(x: &Matrix<T>, y: &[T], column_names: Vec<String>) -> Result<OlsFit<T>> {
    let (n, p) = (x.rows(), x.cols());
    if n == 0 {
        return Err(DidError::InvalidMatrix("design has zero rows".into()));
    }
    if y.len() != n {
        return Err(DidError::InvalidMatrix(format!("y has length {}, X has {n} rows", y.len())));
    }
    if column_names.len() != p {
        return Err(DidError::InvalidMatrix("column name count does not match X".into()));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(DidError::InvalidMatrix("non-finite entries in X or y".into()));
    }

    // Unit-RMS column scaling.
    let scales: Vec<T> = (0..p)
        .map(|j| {
            let ss: T = (0..n).map(|i| x[(i, j)] * x[(i, j)]).sum();
            let rms = (ss / T::of_usize(n)).sqrt();
            if rms > T::zero() {
                rms
            } else {
                T::one()
            }
        })
        .collect();
    let mut scaled = x.clone();
    for i in 0..n {
        for j in 0..p {
            scaled[(i, j)] = x[(i, j)] / scales[j];
        }
    }

    let qr = RankRevealingQr::new(&scaled, T::collinearity_tol());
    let kept = qr.kept().to_vec();
    let dropped = qr.dropped().to_vec();
    let rank = kept.len();
    let beta_scaled = qr.solve(y);

    let mut coefficients = vec![None; p];
    for (pos, &j) in kept.iter().enumerate() {
        coefficients[j] = Some(beta_scaled[pos] / scales[j]);
    }
    let residuals: Vec<T> = (0..n)
        .map(|i| {
            let fitted: T = kept
                .iter()
                .map(|&j| x[(i, j)] * coefficients[j].expect("kept"))
                .sum();
            y[i] - fitted
        })
        .collect();

    let rinv = qr.r_inverse();
    let mut scaled_bread = rinv.matmul(&rinv.transpose());
    scaled_bread.symmetrize();

    let sigma2 = if n > rank {
        residuals.iter().map(|&r| r * r).sum::<T>() / T::of_usize(n - rank)
    } else {
        T::nan()
    };
    let mut vcov_classical = Matrix::zeros(rank, rank);
    for a in 0..rank {
        for b in 0..rank {
            vcov_classical[(a, b)] = sigma2 * scaled_bread[(a, b)] / (scales[kept[a]] * scales[kept[b]]);
        }
    }

    Ok(OlsFit {
        column_names,
        coefficients,
        residuals,
        n,
        rank,
        kept,
        dropped,
        vcov_classical,
        vcov_cluster: None,
        design: x.clone(),
        scales,
        scaled_bread,
    })
}

impl<T: Scalar> OlsFit<T> {
    pub fn design(&self) -> &Matrix<T> {
        &self.design
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<T> {
        self.column_index(name).and_then(|j| self.coefficients[j])
    }

    /// Position of design column `j` inside the covariance matrices.
    pub fn kept_position(&self, j: usize) -> Option<usize> {
        self.kept.iter().position(|&k| k == j)
    }

    pub fn fitted(&self) -> Vec<T> {
        let y_hat = (0..self.n).map(|i| {
            self.kept
                .iter()
                .map(|&j| self.design[(i, j)] * self.coefficients[j].expect("kept"))
                .sum()
        });
        y_hat.collect()
    }

    pub fn se_classical(&self, j: usize) -> Option<T> {
        let k = self.kept_position(j)?;
        Some(self.vcov_classical[(k, k)].sqrt())
    }

    pub fn se_cluster(&self, j: usize) -> Option<T> {
        let k = self.kept_position(j)?;
        self.vcov_cluster.as_ref().map(|v| v.matrix[(k, k)].sqrt())
    }

    pub fn dropped_names(&self) -> Vec<&str> {
        self.dropped.iter().map(|&j| self.column_names[j].as_str()).collect()
    }

    /// Attaches the cluster-robust covariance for `cluster_ids`.
    pub fn with_cluster_vcov<K: Eq + Hash>(mut self, cluster_ids: &[K]) -> Result<Self> {
        self.vcov_cluster = Some(cluster_robust_vcov(&self, cluster_ids)?);
        Ok(self)
    }
}

/// CR1 cluster sandwich `(XᵀX)⁻¹ (Σ_c X_cᵀ r_c r_cᵀ X_c) (XᵀX)⁻¹` scaled by
/// `C/(C-1) · (n-1)/(n-k)`.
///
/// Clusters are indexed by first appearance in `cluster_ids`, so relabelling
/// clusters leaves the result bit-identical.
pub fn cluster_robust_vcov<T: Scalar, K: Eq + Hash>(fit: &OlsFit<T>, cluster_ids: &[K]) -> Result<ClusterVcov<T>> {
    let n = fit.n;
    if cluster_ids.len() != n {
        return Err(DidError::ClusterLengthMismatch {
            expected: n,
            got: cluster_ids.len(),
        });
    }
    let mut index: HashMap<&K, usize> = HashMap::new();
    let dense: Vec<usize> = cluster_ids
        .iter()
        .map(|id| {
            let next = index.len();
            *index.entry(id).or_insert(next)
        })
        .collect();
    let n_clusters = index.len();
    if n_clusters < 2 {
        return Err(DidError::TooFewClusters(n_clusters));
    }
    let k = fit.rank;
    if n <= k {
        return Err(DidError::NoResidualDf { n, rank: k });
    }

    let mut scores = vec![T::zero(); n_clusters * k];
    for i in 0..n {
        let c = dense[i];
        let r = fit.residuals[i];
        for (pos, &j) in fit.kept.iter().enumerate() {
            let xs = fit.design[(i, j)] / fit.scales[j];
            scores[c * k + pos] = scores[c * k + pos] + xs * r;
        }
    }
    let mut meat = Matrix::zeros(k, k);
    for c in 0..n_clusters {
        let u = &scores[c * k..(c + 1) * k];
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] = meat[(a, b)] + u[a] * u[b];
            }
        }
    }
    let bread = &fit.scaled_bread;
    let sandwich = bread.matmul(&meat).matmul(bread);

    let cf = T::of_usize(n_clusters) / T::of_usize(n_clusters - 1);
    let nf = T::of_usize(n - 1) / T::of_usize(n - k);
    let factor = cf * nf;
    let mut matrix = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            matrix[(a, b)] = factor * sandwich[(a, b)] / (fit.scales[fit.kept[a]] * fit.scales[fit.kept[b]]);
        }
    }
    matrix.symmetrize();
    Ok(ClusterVcov { matrix, n_clusters })
}

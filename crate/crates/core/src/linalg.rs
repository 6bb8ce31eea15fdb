//! Small dense linear algebra: a row-major matrix, a rank-revealing
//! Householder QR, and a Jacobi eigensolver for symmetric matrices.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows * cols");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] = out.data[i * other.cols + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in matvec");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// Sub-matrix keeping the listed rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        let half = T::of(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let m = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    // Scaled to avoid overflow on large entries.
    let scale = a.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let ss: T = a.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}

/// Householder QR that processes columns left to right and drops any column
/// whose residual norm, after projecting out the columns already kept, falls
/// below `tol` times its original norm. Collinear columns are therefore
/// resolved deterministically in favour of earlier columns.
#[derive(Debug, Clone)]
pub struct RankRevealingQr<T> {
    n: usize,
    /// Householder vectors (acting on rows `k..n`) and their `2 / vᵀv` factors.
    reflectors: Vec<(Vec<T>, T)>,
    /// Upper-triangular factor over the kept columns, `rank × rank`.
    r: Matrix<T>,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

impl<T: Scalar> RankRevealingQr<T> {
    pub fn new(x: &Matrix<T>, tol: T) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let mut reflectors: Vec<(Vec<T>, T)> = Vec::with_capacity(p.min(n));
        let mut r_cols: Vec<Vec<T>> = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();

        for j in 0..p {
            let mut col = x.column(j);
            let original = norm(&col);
            let k = reflectors.len();
            for (idx, (v, beta)) in reflectors.iter().enumerate() {
                apply_reflector(&mut col[idx..], v, *beta);
            }
            if k == n || original == T::zero() {
                dropped.push(j);
                continue;
            }
            let tail = norm(&col[k..]);
            if tail <= tol * original {
                dropped.push(j);
                continue;
            }
            let alpha = if col[k] > T::zero() { -tail } else { tail };
            let mut v = col[k..].to_vec();
            v[0] = v[0] - alpha;
            let vtv = dot(&v, &v);
            let beta = T::of(2.0) / vtv;
            let mut rcol = col[..k].to_vec();
            rcol.push(alpha);
            r_cols.push(rcol);
            reflectors.push((v, beta));
            kept.push(j);
        }

        let rank = kept.len();
        let mut r = Matrix::zeros(rank, rank);
        for (c, rcol) in r_cols.iter().enumerate() {
            for (i, &val) in rcol.iter().enumerate() {
                r[(i, c)] = val;
            }
        }
        Self {
            n,
            reflectors,
            r,
            kept,
            dropped,
        }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn r(&self) -> &Matrix<T> {
        &self.r
    }

    /// Computes `Qᵀ y`.
    pub fn qt_mul(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.n);
        let mut out = y.to_vec();
        for (idx, (v, beta)) in self.reflectors.iter().enumerate() {
            apply_reflector(&mut out[idx..], v, *beta);
        }
        out
    }

    /// Least-squares coefficients for the kept columns, in kept order.
    pub fn solve(&self, y: &[T]) -> Vec<T> {
        let qty = self.qt_mul(y);
        back_substitute(&self.r, &qty[..self.rank()])
    }

    /// `(R⁻¹)`, upper triangular.
    pub fn r_inverse(&self) -> Matrix<T> {
        upper_triangular_inverse(&self.r)
    }
}

fn apply_reflector<T: Scalar>(x: &mut [T], v: &[T], beta: T) {
    let s = dot(v, x) * beta;
    for (xi, &vi) in x.iter_mut().zip(v) {
        *xi = *xi - s * vi;
    }
}

pub fn back_substitute<T: Scalar>(r: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = r.rows();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s = s - r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

pub fn upper_triangular_inverse<T: Scalar>(r: &Matrix<T>) -> Matrix<T> {
    let n = r.rows();
    let mut inv = Matrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![T::zero(); n];
        e[c] = T::one();
        let col = back_substitute(r, &e);
        for i in 0..n {
            inv[(i, c)] = col[i];
        }
    }
    inv
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (ascending) and the matching eigenvectors as columns.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "eigen decomposition needs a square matrix");
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let two = T::of(2.0);

    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let total: T = m.as_slice().iter().map(|&x| x * x).sum();
        if off <= T::epsilon() * T::epsilon() * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let rows: Vec<usize> = (0..n).collect();
    (values, v.select(&rows, &order))
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues at or
/// below `rel_tol × λ_max` are treated as zero. Returns the inverse and the
/// retained rank.
pub fn symmetric_pinv<T: Scalar>(a: &Matrix<T>, rel_tol: T) -> (Matrix<T>, usize) {
    let n = a.rows();
    let (values, vectors) = symmetric_eigen(a);
    let max = values.iter().fold(T::zero(), |m, &x| m.max(x));
    let mut inv = Matrix::zeros(n, n);
    let mut rank = 0;
    if max <= T::zero() {
        return (inv, 0);
    }
    for (k, &lambda) in values.iter().enumerate() {
        if lambda <= rel_tol * max {
            continue;
        }
        rank += 1;
        let w = T::one() / lambda;
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = inv[(i, j)] + vectors[(i, k)] * vectors[(j, k)] * w;
            }
        }
    }
    (inv, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_equations(x: &Matrix<f64>, y: &[f64]) -> Vec<f64> {
        // Gauss-Jordan on XᵀX | Xᵀy.
        let xt = x.transpose();
        let xtx = xt.matmul(x);
        let xty = xt.matvec(y);
        let p = xtx.cols();
        let mut aug: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut r = xtx.row(i).to_vec();
                r.push(xty[i]);
                r
            })
            .collect();
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&a, &b| aug[a][c].abs().partial_cmp(&aug[b][c].abs()).unwrap())
                .unwrap();
            aug.swap(c, piv);
            let d = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= d;
            }
            for r in 0..p {
                if r != c {
                    let f = aug[r][c];
                    for k in 0..=p {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        aug.iter().map(|r| r[p]).collect()
    }

    #[test]
    fn qr_matches_normal_equations() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![1.0, -1.0, 3.0],
            vec![1.0, 0.3, -2.0],
            vec![1.0, 4.0, 1.0],
            vec![1.0, -2.5, 0.0],
        ]);
        let y = [1.0, 2.0, -1.0, 0.5, 3.0];
        let qr = RankRevealingQr::new(&x, 1e-7);
        assert_eq!(qr.rank(), 3);
        let b = qr.solve(&y);
        let oracle = normal_equations(&x, &y);
        for (a, o) in b.iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_trailing_column_is_dropped() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 2.0],
            vec![1.0, 1.0, 0.0, 3.0],
            vec![1.0, 0.0, 1.0, 4.0],
        ]);
        let qr = RankRevealingQr::new(&x, 1e-7);
        assert_eq!(qr.kept(), &[0, 1, 3]);
        assert_eq!(qr.dropped(), &[2]);
    }

    #[test]
    fn zero_column_is_dropped() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let qr = RankRevealingQr::new(&x, 1e-7);
        assert_eq!(qr.dropped(), &[1]);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a: Matrix<f64> = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.2],
            vec![0.5, -0.2, 2.0],
        ]);
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let recon = vecs.matmul(&Matrix::from_diagonal(&vals)).matmul(&vecs.transpose());
        for i in 0..3 {
            for j in 0..3 {
                assert!((recon[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
        assert!((vals.iter().sum::<f64>() - a.trace()).abs() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_matrix_reports_rank() {
        let a: Matrix<f64> = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let (pinv, rank) = symmetric_pinv(&a, 1e-10);
        assert_eq!(rank, 1);
        for i in 0..2 {
            for j in 0..2 {
                assert!((pinv[(i, j)] - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn triangular_inverse() {
        let r: Matrix<f64> = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 4.0]]);
        let inv = upper_triangular_inverse(&r);
        let id = r.matmul(&inv);
        assert!((id[(0, 0)] - 1.0).abs() < 1e-15 && id[(0, 1)].abs() < 1e-15);
        assert!((id[(1, 1)] - 1.0).abs() < 1e-15);
    }
}

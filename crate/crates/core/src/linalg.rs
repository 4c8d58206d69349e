//! Small dense linear algebra for gradient systems.
//!
//! Gradient matrices here are tall and skinny: one row per shared parameter
//! and one column per task, with rarely more than a dozen columns. Everything
//! that needs a decomposition works in the `T x T` task space.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Maximum off-diagonal mass left by [`sym_eigh`], relative to `‖M‖_F`.
pub const EIGH_TOLERANCE: f64 = 1e-12;

/// Relative asymmetry accepted by [`sym_eigh`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues at or below this fraction of the largest one count as zero.
pub const RANK_RTOL_EIGEN: f64 = 1e-10;

/// Singular values at or below this fraction of the largest one count as zero.
///
/// Applied by [`task_spectrum`], which never squares the condition number.
/// Systems with `κ` up to `10⁶` keep full rank with a tenfold margin, while
/// gradients that have become antiparallel to working precision near a
/// Pareto-stationary point drop to the rank-one branch instead of producing
/// an update of size `σ_min ≈ 0`.
pub const RANK_RTOL_SINGULAR: f64 = 1e-7;

const MAX_SWEEPS: usize = 100;

/// Dense real matrix with row-major storage.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, checking shape and finiteness.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors, e.g. one task
    /// gradient per column.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: bad.len(),
            });
        }
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                data[i * cols + j] = x;
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows, "column length");
        for (i, &x) in values.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn column_norm(&self, j: usize) -> f64 {
        (0..self.rows)
            .map(|i| self[(i, j)] * self[(i, j)])
            .sum::<f64>()
            .sqrt()
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

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `Mᵀ x` without materialising the transpose.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut out);
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for (k, &j) in idx.iter().enumerate() {
            for i in 0..self.rows {
                out[(i, k)] = self[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eigen- or singular-pair decomposition in task space.
///
/// `eigenvalues` are sorted in descending order and `eigenvectors` holds the
/// matching orthonormal columns. `rank` counts the leading eigenvalues that
/// survived the rank threshold of whichever routine produced the spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    pub rank: usize,
}

impl Spectrum {
    /// Singular values `σᵣ = √λᵣ` for the eigenvalues kept by the rank cut.
    pub fn singular_values(&self) -> Vec<f64> {
        self.eigenvalues[..self.rank]
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .collect()
    }

    pub fn eigenvector(&self, r: usize) -> Vec<f64> {
        self.eigenvectors.column(r)
    }

    /// `V Λ Vᵀ` over all stored pairs.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvectors.rows();
        let mut m = Matrix::zeros(n, n);
        for (r, &lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..n {
                let vi = self.eigenvectors[(i, r)] * lam;
                for j in 0..n {
                    m[(i, j)] += vi * self.eigenvectors[(j, r)];
                }
            }
        }
        m
    }
}

/// Task-space Gram matrix `GᵀG`.
pub fn gram(g: &Matrix) -> Matrix {
    let t = g.cols();
    let cols = g.columns();
    let mut m = Matrix::zeros(t, t);
    for i in 0..t {
        for j in i..t {
            let v = dot(&cols[i], &cols[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenpairs in descending eigenvalue order. Each eigenvector is
/// oriented so that its largest-magnitude component is positive (the first
/// such component on ties). Negative eigenvalues are returned as computed but
/// never count towards the rank.
pub fn sym_eigh(m: &Matrix) -> Result<Spectrum> {
    let (n, c) = m.shape();
    if n != c {
        return Err(Error::NotSquare { rows: n, cols: c });
    }
    let scale = m.max_abs();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if scale > 0.0 && asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric {
            relative_asymmetry: asym / scale,
        });
    }

    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let mut v = Matrix::identity(n);
    let target = EIGH_TOLERANCE * a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // A <- Jᵀ A J on rows/cols p, q
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }

    let values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let lam_max = values.iter().cloned().fold(0.0, f64::max);
    let rank = values
        .iter()
        .filter(|&&l| l > 0.0 && l > RANK_RTOL_EIGEN * lam_max)
        .count();
    Ok(sorted_spectrum(values, v, rank))
}

/// Eigendecomposition of `GᵀG` computed directly from `G`.
///
/// One-sided (Hestenes) Jacobi rotates pairs of columns of `G` until they are
/// mutually orthogonal; the accumulated rotations are the eigenvectors of
/// `GᵀG` and the squared column norms its eigenvalues. Unlike
/// `sym_eigh(&gram(g))` this never squares the condition number, so the small
/// singular values keep their relative accuracy. The rank cut is applied to
/// singular values with [`RANK_RTOL_SINGULAR`].
pub fn task_spectrum(g: &Matrix) -> Spectrum {
    let t = g.cols();
    let mut cols = g.columns();
    let mut v = Matrix::identity(t);
    // rounding floor of a length-n dot product
    let tol = f64::EPSILON * g.rows().max(t) as f64;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..t {
            for q in (p + 1)..t {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tn = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + tn * tn).sqrt();
                let sn = cs * tn;
                let (lo, hi) = cols.split_at_mut(q);
                for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let a = *xp;
                    let b = *xq;
                    *xp = cs * a - sn * b;
                    *xq = sn * a + cs * b;
                }
                for k in 0..t {
                    let a = v[(k, p)];
                    let b = v[(k, q)];
                    v[(k, p)] = cs * a - sn * b;
                    v[(k, q)] = sn * a + cs * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let s_max = sigma.iter().cloned().fold(0.0, f64::max);
    let rank = sigma
        .iter()
        .filter(|&&s| s > 0.0 && s > RANK_RTOL_SINGULAR * s_max)
        .count();
    let values = sigma.iter().map(|s| s * s).collect();
    sorted_spectrum(values, v, rank)
}

fn sorted_spectrum(values: Vec<f64>, v: Matrix, rank: usize) -> Spectrum {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = v.select_columns(&order);
    for r in 0..n {
        let mut lead = 0;
        for i in 1..n {
            if eigenvectors[(i, r)].abs() > eigenvectors[(lead, r)].abs() {
                lead = i;
            }
        }
        if eigenvectors[(lead, r)] < 0.0 {
            for i in 0..n {
                eigenvectors[(i, r)] = -eigenvectors[(i, r)];
            }
        }
    }
    Spectrum {
        eigenvalues,
        eigenvectors,
        rank,
    }
}

/// Singular values of `G` above the rank threshold, descending.
pub fn singular_values(g: &Matrix) -> Vec<f64> {
    task_spectrum(g).singular_values()
}

/// Condition number `σ_max / σ_min` of a gradient matrix.
///
/// Returns `f64::INFINITY` when the columns are linearly dependent (rank
/// below the column count).
pub fn condition_number(g: &Matrix) -> Result<f64> {
    if g.is_zero() {
        return Err(Error::ZeroGradient);
    }
    let spec = task_spectrum(g);
    if spec.rank < g.cols() {
        return Ok(f64::INFINITY);
    }
    let s = spec.singular_values();
    Ok(s[0] / s[s.len() - 1])
}

/// Solves `A x = b` for square `A` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `1e-14 · max|A|`.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "solve needs a square matrix");
    assert_eq!(b.len(), n, "rhs length");
    let tol = 1e-14 * a.max_abs();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[(i, k)].abs().total_cmp(&m[(j, k)].abs()))?;
        if m[(piv, k)].abs() <= tol {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            x.swap(k, piv);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in (k + 1)..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Some(x)
}

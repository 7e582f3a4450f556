//! Small dense linear algebra for the block Newton systems.
//!
//! Everything here works on [`DenseMatrix`], a column-major `f64` matrix.
//! The LU factorization doubles as the nonsingularity test used by the
//! descent solver: a pivot below `1e-12 * ||A||_inf` is reported as
//! [`NepError::Singular`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, NepError, Result};

/// Relative pivot floor for [`LuFactorization`].
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-12;

/// Diagonal shifts beyond this are treated as pathological input.
pub const MAX_DIAGONAL_SHIFT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    /// Column-major entries.
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// 1x1 matrix.
    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(data.len(), rows * cols)?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x.len(), self.cols)?;
        let mut out = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            let col = &self.data[j * self.rows..(j + 1) * self.rows];
            for (o, &a) in out.iter_mut().zip(col) {
                *o += a * xj;
            }
        }
        Ok(out)
    }

    pub fn mul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len(other.rows, self.cols)?;
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        }))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_len(other.rows, self.rows)?;
        check_len(other.cols, self.cols)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetry to within `rtol * max(1, max|a_ij|)`.
    pub fn is_symmetric(&self, rtol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= rtol * scale))
    }

    /// `(M + M^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn with_added_diagonal(&self, delta: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += delta;
        }
        m
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.data)
    }

    /// Spectral (2-)norm via singular values.
    pub fn spectral_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.to_nalgebra().singular_values().iter().fold(0.0, |m, &s| m.max(s))
    }

    /// Smallest singular value; `||A^{-1}|| = 1 / sigma_min` for square `A`.
    pub fn min_singular_value(&self) -> f64 {
        self.to_nalgebra().singular_values().iter().fold(f64::INFINITY, |m, &s| m.min(s))
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a + s * b`.
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Debug, Clone)]
pub struct LuFactorization {
    n: usize,
    /// Packed L (unit diagonal, below) and U (on and above the diagonal).
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactorization {
    /// Factors `a`, failing with [`NepError::Singular`] when a pivot falls
    /// to `1e-12 * ||a||_inf` or below.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(NepError::DimensionMismatch { expected: a.rows(), got: a.cols() });
        }
        if !a.is_finite() {
            return Err(NepError::NonFiniteEvaluation("lu input"));
        }
        let n = a.rows();
        let threshold = SINGULAR_PIVOT_RTOL * a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= threshold {
                return Err(NepError::Singular);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= l * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(b.len(), self.n)?;
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.lu[(i, k)] * y[k]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| self.lu[(i, k)] * y[k]).sum();
            y[i] = (y[i] - s) / self.lu[(i, i)];
        }
        Ok(y)
    }
}

/// Solves `A x = b` by partially pivoted LU.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len(b.len(), a.rows())?;
    LuFactorization::new(a)?.solve(b)
}

/// Plain Cholesky `A = L L^T` reading the lower triangle. Returns `None`
/// when some pivot (the value whose square root becomes `L_jj`) is below
/// `min_pivot`.
pub fn cholesky(a: &DenseMatrix, min_pivot: f64) -> Option<DenseMatrix> {
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let pivot = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if !(pivot >= min_pivot) {
            return None;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// A symmetric positive definite stand-in for a per-player Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdSurrogate {
    pub matrix: DenseMatrix,
    /// Multiple of the identity added to the input.
    pub shift: f64,
    pub min_eig_floor: f64,
}

impl SpdSurrogate {
    /// Wraps a caller-supplied matrix after confirming it factors with
    /// pivots of at least `floor * 1e-2`.
    pub fn from_spd(matrix: DenseMatrix, floor: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(NepError::DimensionMismatch { expected: matrix.rows(), got: matrix.cols() });
        }
        cholesky(&matrix, floor * 1e-2).ok_or(NepError::InvalidConfig(
            "supplied surrogate is not positive definite".into(),
        ))?;
        Ok(Self { matrix, shift: 0.0, min_eig_floor: floor })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Returns `H + delta I` for the smallest `delta` in `{0, floor, 2 floor,
/// 4 floor, ...}` whose Cholesky factorization has every pivot at least
/// `floor * 1e-2`. Positive definite input comes back unchanged.
pub fn modified_cholesky(h: &DenseMatrix, floor: f64) -> Result<SpdSurrogate> {
    if !h.is_square() {
        return Err(NepError::DimensionMismatch { expected: h.rows(), got: h.cols() });
    }
    if !(floor > 0.0) {
        return Err(NepError::InvalidConfig(format!("cholesky floor must be positive, got {floor}")));
    }
    if !h.is_finite() {
        return Err(NepError::NonFiniteEvaluation("hessian block"));
    }
    let min_pivot = floor * 1e-2;
    let mut shift = 0.0;
    loop {
        let candidate = if shift == 0.0 { h.clone() } else { h.with_added_diagonal(shift) };
        if cholesky(&candidate, min_pivot).is_some() {
            return Ok(SpdSurrogate { matrix: candidate, shift, min_eig_floor: floor });
        }
        shift = if shift == 0.0 { floor } else { 2.0 * shift };
        if shift > MAX_DIAGONAL_SHIFT {
            return Err(NepError::ShiftOverflow { limit: MAX_DIAGONAL_SHIFT });
        }
    }
}

/// Assembles `[H1, t M1; t M2, H2]`.
pub fn assemble_block_system(
    h1: &SpdSurrogate,
    h2: &SpdSurrogate,
    m1: &DenseMatrix,
    m2: &DenseMatrix,
    t: f64,
) -> Result<DenseMatrix> {
    let n1 = h1.dim();
    let n2 = h2.dim();
    check_len(m1.rows(), n1)?;
    check_len(m1.cols(), n2)?;
    check_len(m2.rows(), n2)?;
    check_len(m2.cols(), n1)?;
    let n = n1 + n2;
    Ok(DenseMatrix::from_fn(n, n, |i, j| match (i < n1, j < n1) {
        (true, true) => h1.matrix[(i, j)],
        (true, false) => t * m1[(i, j - n1)],
        (false, true) => t * m2[(i - n1, j)],
        (false, false) => h2.matrix[(i - n1, j - n1)],
    }))
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn spectral_bounds_sym(h: &DenseMatrix) -> Result<(f64, f64)> {
    if !h.is_square() {
        return Err(NepError::DimensionMismatch { expected: h.rows(), got: h.cols() });
    }
    if !h.is_finite() {
        return Err(NepError::NonFiniteEvaluation("symmetric eigenvalue input"));
    }
    if h.rows() == 0 {
        return Ok((0.0, 0.0));
    }
    let eig = h.symmetrized().to_nalgebra().symmetric_eigenvalues();
    let lo = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = eig.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    Ok((lo, hi))
}

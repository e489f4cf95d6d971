//! Dense row-major matrices and the handful of linear-algebra primitives the
//! rest of the crate is built on.
//!
//! Everything is computed in `f64`, even when the data came from 32-bit files.
//! The SVD is backed by `nalgebra`'s Golub-Kahan implementation; this module
//! adds the full right-singular basis, a deterministic sign convention and
//! the numerical-rank rule.

use nalgebra::DMatrix;

use crate::error::{invalid, shape_err, Error, Result};
use crate::par::Execution;

/// Dense row-major matrix with finite entries and at least one row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

/// Sample embeddings (one row per image or text) share the matrix type.
pub type EmbeddingMatrix = Matrix;

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("matrix must be non-empty, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return shape_err(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite value at row {}, col {}",
                pos / cols,
                pos % cols
            ));
        }
        Ok(Matrix { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return shape_err("rows have differing lengths");
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
        Matrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Internal constructor for results of finite arithmetic.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { data, rows, cols }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Result<Matrix> {
        if start >= end || end > self.rows {
            return shape_err(format!(
                "row block {start}..{end} out of range for {} rows",
                self.rows
            ));
        }
        Ok(Matrix::from_parts(
            end - start,
            self.cols,
            self.data[start * self.cols..end * self.cols].to_vec(),
        ))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Matrix> {
        if idx.is_empty() {
            return invalid("cannot select zero rows");
        }
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            if i >= self.rows {
                return shape_err(format!("row {i} out of range for {} rows", self.rows));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Matrix::from_parts(idx.len(), self.cols, data))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let Some(first) = parts.first() else {
            return invalid("nothing to stack");
        };
        let cols = first.cols;
        if let Some(bad) = parts.iter().find(|m| m.cols != cols) {
            return shape_err(format!("cannot stack {} columns onto {cols}", bad.cols));
        }
        let rows = parts.iter().map(|m| m.rows).sum();
        let data = parts.iter().flat_map(|m| m.data.iter().copied()).collect();
        Ok(Matrix::from_parts(rows, cols, data))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix::from_parts(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * s).collect(),
        )
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return shape_err(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix::from_parts(self.rows, self.cols, data))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copy with each non-zero row scaled to unit L2 norm. Zero rows stay zero.
    pub fn normalize_rows(&self) -> Matrix {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.cols) {
            let n = dot(row, row).sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        out
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn transpose(m: &Matrix) -> Matrix {
    let mut data = vec![0.0; m.data.len()];
    for r in 0..m.rows {
        for c in 0..m.cols {
            data[c * m.rows + r] = m.data[r * m.cols + c];
        }
    }
    Matrix::from_parts(m.cols, m.rows, data)
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return shape_err(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        ));
    }
    let mut out = vec![0.0; a.rows * b.cols];
    let exec = Execution::default().for_work(a.rows * a.cols * b.cols);
    exec.for_each_row(&mut out, b.cols, |i, row| {
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik != 0.0 {
                for (o, &bkj) in row.iter_mut().zip(b.row(k)) {
                    *o += aik * bkj;
                }
            }
        }
    });
    Ok(Matrix::from_parts(a.rows, b.cols, out))
}

/// `a · bᵀ`, computed from row dot products without materializing `bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return shape_err(format!(
            "matmul {}x{} by transpose of {}x{}",
            a.rows, a.cols, b.rows, b.cols
        ));
    }
    let mut out = vec![0.0; a.rows * b.rows];
    let exec = Execution::default().for_work(a.rows * a.cols * b.rows);
    exec.for_each_row(&mut out, b.rows, |i, row| {
        let ai = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ai, b.row(j));
        }
    });
    Ok(Matrix::from_parts(a.rows, b.rows, out))
}

/// `b · bᵀ`, exactly symmetric.
pub fn gram(b: &Matrix) -> Matrix {
    let n = b.rows;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(b.row(i), b.row(j));
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    Matrix::from_parts(n, n, out)
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    dot(&m.data, &m.data).sqrt()
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.singular_values[0])
}

/// Singular value decomposition `M = U Σ Vᵀ`.
///
/// `left` is the thin `rows × min(rows, cols)` factor. `right_t` holds the
/// complete `cols × cols` orthogonal `Vᵀ`, one right singular vector per row,
/// including the trailing vectors that span the null space of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub left: Matrix,
    pub singular_values: Vec<f64>,
    pub right_t: Matrix,
}

impl SvdResult {
    pub fn right_vector(&self, i: usize) -> &[f64] {
        self.right_t.row(i)
    }

    /// `U Σ Vᵀ` truncated to the thin factors.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.singular_values.len();
        let (n, d) = (self.left.rows, self.right_t.cols);
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = &mut out[i * d..(i + 1) * d];
            for (j, &s) in self.singular_values.iter().enumerate().take(k) {
                let coef = self.left.get(i, j) * s;
                if coef != 0.0 {
                    for (o, &v) in row.iter_mut().zip(self.right_t.row(j)) {
                        *o += coef * v;
                    }
                }
            }
        }
        Matrix::from_parts(n, d, out)
    }
}

const SVD_MAX_ITER: usize = 100_000;

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if let Some(pos) = m.data.iter().position(|v| !v.is_finite()) {
        return invalid(format!("non-finite value at flat index {pos}"));
    }
    let (n, d) = m.shape();
    let k = n.min(d);
    let fail = || Error::Numeric(format!("SVD of {n}x{d} matrix did not converge"));

    let (mut left, singular_values, mut right_t) = if n >= d {
        let dec = nalgebra::SVD::try_new(m.to_nalgebra(), true, true, f64::EPSILON, SVD_MAX_ITER)
            .ok_or_else(fail)?;
        let u = dec.u.ok_or_else(fail)?;
        let vt = dec.v_t.ok_or_else(fail)?;
        let left = Matrix::from_parts(n, k, row_major(&u));
        let right = Matrix::from_parts(d, d, row_major(&vt));
        (left, dec.singular_values.iter().copied().collect::<Vec<_>>(), right)
    } else {
        // Zero-pad to square so the decomposition yields the complete Vᵀ.
        let mut padded = DMatrix::<f64>::zeros(d, d);
        padded.view_mut((0, 0), (n, d)).copy_from(&m.to_nalgebra());
        let dec = nalgebra::SVD::try_new(padded, true, true, f64::EPSILON, SVD_MAX_ITER)
            .ok_or_else(fail)?;
        let u = dec.u.ok_or_else(fail)?;
        let vt = dec.v_t.ok_or_else(fail)?;
        let mut left = Matrix::zeros(n, k);
        for i in 0..n {
            for j in 0..k {
                left.set(i, j, u[(i, j)]);
            }
        }
        let sv: Vec<f64> = dec.singular_values.iter().take(k).copied().collect();
        repair_left_columns(&mut left, &sv);
        (left, sv, Matrix::from_parts(d, d, row_major(&vt)))
    };

    let mut singular_values: Vec<f64> = singular_values.into_iter().map(|s| s.max(0.0)).collect();
    singular_values.truncate(k);
    apply_sign_convention(&mut left, &mut right_t);
    Ok(SvdResult {
        left,
        singular_values,
        right_t,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// In the padded decomposition, left vectors paired with zero singular values
/// may leak into the padding rows. Re-orthonormalize those columns inside the
/// original row space, completing from standard basis vectors if needed.
fn repair_left_columns(left: &mut Matrix, sv: &[f64]) {
    let (n, k) = left.shape();
    let smax = sv.first().copied().unwrap_or(0.0);
    let tol = smax * (n.max(k) as f64) * f64::EPSILON * 16.0;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut fallback = 0usize;
    for j in 0..k {
        let mut col: Vec<f64> = (0..n).map(|i| left.get(i, j)).collect();
        let trusted = sv[j] > tol;
        if !trusted {
            orthogonalize(&mut col, &basis);
        }
        let mut norm = dot(&col, &col).sqrt();
        while !trusted && norm < 0.5 {
            col = vec![0.0; n];
            col[fallback % n] = 1.0;
            fallback += 1;
            orthogonalize(&mut col, &basis);
            norm = dot(&col, &col).sqrt();
        }
        col.iter_mut().for_each(|v| *v /= norm);
        for (i, v) in col.iter().enumerate() {
            left.set(i, j, *v);
        }
        basis.push(col);
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Makes the largest-magnitude entry of every right singular vector
/// non-negative (first index wins ties) and flips the paired left vector.
fn apply_sign_convention(left: &mut Matrix, right_t: &mut Matrix) {
    for j in 0..right_t.rows {
        let row = right_t.row(j);
        let mut best = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = i;
            }
        }
        if row[best] < 0.0 {
            right_t.row_mut(j).iter_mut().for_each(|v| *v = -*v);
            if j < left.cols {
                for i in 0..left.rows {
                    let v = left.get(i, j);
                    left.set(i, j, -v);
                }
            }
        }
    }
}

/// Number of singular values above `σ_max · max(rows, cols) · 1e-7`.
pub fn numerical_rank(singular_values: &[f64], rows: usize, cols: usize) -> usize {
    let smax = singular_values.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    let tol = smax * rows.max(cols) as f64 * 1e-7;
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// Cosines of the principal angles between the row spaces of two matrices
/// with orthonormal rows, largest first.
pub fn principal_cosines(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    let cross = matmul_nt(a, b)?;
    Ok(svd(&cross)?
        .singular_values
        .into_iter()
        .map(|c| c.min(1.0))
        .collect())
}

/// Principal angles in radians, smallest first.
pub fn principal_angles(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    Ok(principal_cosines(a, b)?.into_iter().map(f64::acos).collect())
}

/// Max-abs deviation of `m mᵀ` from the identity.
pub fn orthonormality_error(m: &Matrix) -> f64 {
    let g = gram(m);
    let mut worst: f64 = 0.0;
    for i in 0..g.rows {
        for j in 0..g.cols {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

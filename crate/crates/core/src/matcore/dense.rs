//! Dense row-major matrices over `f64`.
//!
//! This is deliberately a small, self-contained kernel: every loop has a
//! fixed traversal order so that repeated runs (and runs under different
//! worker counts) produce bitwise identical results. Shape mismatches in the
//! low-level arithmetic are programming errors and panic; the solver-facing
//! operations in the other modules validate shapes up front and return
//! proper errors.

use crate::error::{Error, Result};

/// Dense matrix, row-major, 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Matrix of zeros.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument {
                op: "DenseMatrix::from_vec",
                detail: format!("dimensions must be positive, got {rows}x{cols}"),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "DenseMatrix::from_vec",
                detail: format!(
                    "expected {} entries for a {rows}x{cols} matrix, got {}",
                    rows * cols,
                    data.len()
                ),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                context: "DenseMatrix::from_vec received a non-finite entry".into(),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from explicit rows (test/setup convenience).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument {
                op: "DenseMatrix::from_rows",
                detail: "no rows given".into(),
            });
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension {
                op: "DenseMatrix::from_rows",
                detail: "rows have unequal lengths".into(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        DenseMatrix::from_vec(rows.len(), cols, data)
    }

    /// Diagonal matrix from the given entries.
    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &DenseMatrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self + other`.
    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert!(self.same_shape(other), "add: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert!(self.same_shape(other), "sub: shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `alpha * self`.
    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let data = self.data.iter().map(|a| alpha * a).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self += alpha * other` (the workhorse axpy update).
    pub fn add_assign_scaled(&mut self, other: &DenseMatrix, alpha: f64) {
        assert!(self.same_shape(other), "add_assign_scaled: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, other.rows,
            "mul: inner dimensions differ ({} vs {})",
            self.cols, other.rows
        );
        let (m, k_dim, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0f64; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            let a_row = &self.data[i * k_dim..(i + 1) * k_dim];
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix {
            rows: m,
            cols: n,
            data: out,
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// LU factorization with partial pivoting.
    pub fn lu_factor(&self) -> Result<LuFactors> {
        if !self.is_square() {
            return Err(Error::Dimension {
                op: "lu_factor",
                detail: format!("matrix is {}x{}, expected square", self.rows, self.cols),
            });
        }
        let n = self.rows;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let tol = f64::EPSILON * self.max_abs() * n as f64;
        for k in 0..n {
            // Pivot: largest magnitude in column k at or below the diagonal.
            let mut piv = k;
            let mut piv_val = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > piv_val {
                    piv = i;
                    piv_val = v;
                }
            }
            if piv_val <= tol {
                return Err(Error::Singular {
                    context: format!("lu_factor (pivot {k})"),
                });
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                for j in (k + 1)..n {
                    lu[i * n + j] -= factor * lu[k * n + j];
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }
}

/// Packed LU factors (unit-lower L and upper U share storage) plus the row
/// permutation. Immutable once built; safe to share across threads.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn order(&self) -> usize {
        self.n
    }

    /// Solves `A * X = B` for a matrix right-hand side.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.n {
            return Err(Error::Dimension {
                op: "LuFactors::solve_matrix",
                detail: format!("rhs has {} rows, expected {}", b.rows(), self.n),
            });
        }
        let n = self.n;
        let s = b.cols();
        // Apply the row permutation.
        let mut x = DenseMatrix::zeros(n, s);
        for i in 0..n {
            let src = b.row(self.perm[i]);
            x.data[i * s..(i + 1) * s].copy_from_slice(src);
        }
        // Forward substitution with unit-lower L, operating on whole rows so
        // all right-hand sides are handled at once.
        for i in 1..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    let (head, tail) = x.data.split_at_mut(i * s);
                    let xk = &head[k * s..(k + 1) * s];
                    let xi = &mut tail[..s];
                    for (a, b) in xi.iter_mut().zip(xk) {
                        *a -= l * b;
                    }
                }
            }
        }
        // Back substitution with U.
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    let (head, tail) = x.data.split_at_mut(k * s);
                    let xi = &mut head[i * s..(i + 1) * s];
                    let xk = &tail[..s];
                    for (a, b) in xi.iter_mut().zip(xk) {
                        *a -= u * b;
                    }
                }
            }
            let d = self.lu[i * n + i];
            for v in &mut x.data[i * s..(i + 1) * s] {
                *v /= d;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        let err = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let err = DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }

    #[test]
    fn mul_small_case() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.mul(&b);
        assert_eq!(c.row(0), &[19.0, 22.0]);
        assert_eq!(c.row(1), &[43.0, 50.0]);
    }

    #[test]
    fn identity_is_neutral() {
        let a = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 4.0]]).unwrap();
        let i = DenseMatrix::identity(2);
        assert_eq!(a.mul(&i), a);
        assert_eq!(i.mul(&a), a);
    }

    #[test]
    fn norms() {
        let a = DenseMatrix::from_rows(&[vec![3.0, -4.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(a.frobenius_norm(), 5.0);
        assert_eq!(a.inf_norm(), 7.0);
        assert_eq!(a.max_abs(), 4.0);
    }

    #[test]
    fn lu_solve_round_trip() {
        let a = DenseMatrix::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let x_true =
            DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![-2.0, 1.0], vec![0.25, 3.0]]).unwrap();
        let b = a.mul(&x_true);
        let x = a.lu_factor().unwrap().solve_matrix(&b).unwrap();
        let err = x.sub(&x_true).max_abs();
        assert!(err < 1e-13, "solve error {err}");
    }

    #[test]
    fn lu_requires_pivoting() {
        // Zero leading pivot; factorization must still succeed via row swaps.
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
        let x = a.lu_factor().unwrap().solve_matrix(&b).unwrap();
        assert_eq!(x.get(0, 0), 3.0);
        assert_eq!(x.get(1, 0), 2.0);
    }

    #[test]
    fn lu_detects_singular() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(a.lu_factor(), Err(Error::Singular { .. })));
    }
}

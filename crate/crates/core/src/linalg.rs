//! Dense row-major matrices and the few factorizations the rest of the crate
//! needs: Gram products, Cholesky solves, and traces of Gram inverses.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relative pivot threshold: a Cholesky pivot below this fraction of the
/// largest Gram diagonal counts as singular.
pub const SINGULARITY_REL_TOL: f64 = 1e-10;

/// Sentinel returned by [`trace_inverse_gram`] when the (regularized) Gram
/// matrix is singular: the A-optimality objective is unbounded there.
pub const INFINITE_OBJECTIVE: f64 = f64::INFINITY;

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. The data length must equal
    /// `rows * cols` and every entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "matrix data length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotFinite("matrix entries"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    what: "row length",
                    expected: c,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
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

    /// New matrix keeping only the given rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(keep.len() * self.cols);
        for &r in keep {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: keep.len(),
            cols: self.cols,
            data,
        }
    }

    /// New matrix keeping only the given columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for r in 0..self.rows {
            let row = self.row(r);
            for &c in keep {
                data.push(row[c]);
            }
        }
        Matrix {
            rows: self.rows,
            cols: keep.len(),
            data,
        }
    }

    /// `self^T * y` for a vector with one entry per row.
    pub fn transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = alloc::vec![0.0; self.cols];
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += yr * v;
            }
        }
        out
    }

    /// `self * w` for a vector with one entry per column.
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), w)).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `M^T M`, exploiting symmetry and skipping zero entries (task factor
/// matrices are mostly one-hot).
pub fn gram(m: &Matrix) -> Result<Matrix> {
    if m.is_empty() {
        return Err(Error::Empty("matrix"));
    }
    let c = m.cols;
    let mut g = Matrix::zeros(c, c);
    for r in 0..m.rows {
        let row = m.row(r);
        for j in 0..c {
            let v = row[j];
            if v == 0.0 {
                continue;
            }
            for k in j..c {
                g.data[j * c + k] += v * row[k];
            }
        }
    }
    for j in 0..c {
        for k in 0..j {
            g.data[j * c + k] = g.data[k * c + j];
        }
    }
    Ok(g)
}

/// `M^T M + alpha I`.
pub(crate) fn gram_regularized(m: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    let mut g = gram(m)?;
    add_ridge(&mut g, alpha);
    Ok(g)
}

pub(crate) fn add_ridge(g: &mut Matrix, alpha: f64) {
    let c = g.cols;
    for i in 0..c {
        g.data[i * c + i] += alpha;
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::NotFinite("alpha"));
    }
    if alpha < 0.0 {
        return Err(Error::Negative("alpha"));
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    dim: usize,
    l: Vec<f64>, // row-major dense, upper half unused
}

impl Cholesky {
    /// Factors `g`; on failure returns the rank at which the pivot dropped
    /// below `SINGULARITY_REL_TOL` times the largest diagonal of `g`.
    pub fn factor(g: &Matrix) -> core::result::Result<Self, usize> {
        Self::factor_with_rel_tol(g, SINGULARITY_REL_TOL)
    }

    /// Factors `g` with an explicit relative pivot tolerance. Data fits use
    /// the default threshold to reject statistically singular grams; saddle
    /// systems that are well-posed by construction may pass a tolerance near
    /// machine precision so that honest small pivots survive.
    pub fn factor_with_rel_tol(
        g: &Matrix,
        rel_tol: f64,
    ) -> core::result::Result<Self, usize> {
        let n = g.cols;
        debug_assert_eq!(g.rows, n);
        let mut max_diag = 0.0f64;
        for i in 0..n {
            max_diag = max_diag.max(g.get(i, i));
        }
        let tol = rel_tol * max_diag;
        let mut l = alloc::vec![0.0; n * n];
        for j in 0..n {
            let mut d = g.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= tol || !d.is_finite() {
                return Err(j);
            }
            let ljj = libm::sqrt(d);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = g.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: n, l })
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        debug_assert_eq!(b.len(), n);
        let l = &self.l;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        x
    }

    /// Trace of the inverse: sum of squared entries of `L^{-1}`.
    pub fn trace_of_inverse(&self) -> f64 {
        let n = self.dim;
        let l = &self.l;
        let mut trace = 0.0;
        let mut z = alloc::vec![0.0; n];
        for j in 0..n {
            for zi in z[j..].iter_mut() {
                *zi = 0.0;
            }
            for i in j..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in j..i {
                    s -= l[i * n + k] * z[k];
                }
                let v = s / l[i * n + i];
                z[i] = v;
                trace += v * v;
            }
        }
        trace
    }

    /// Full inverse of the factored matrix.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim;
        let l = &self.l;
        // W = L^{-1}, lower triangular, column by column.
        let mut w = alloc::vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in j..i {
                    s -= l[i * n + k] * w[k * n + j];
                }
                w[i * n + j] = s / l[i * n + i];
            }
        }
        // B = W^T W, symmetric.
        let mut b = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in j.max(i)..n {
                    s += w[k * n + i] * w[k * n + j];
                }
                b.data[i * n + j] = s;
                b.data[j * n + i] = s;
            }
        }
        b
    }
}

/// Ridge regression via the normal equations:
/// solves `(M^T M + alpha I) w = M^T y`.
///
/// With `alpha = 0` this is ordinary least squares and fails with a
/// singularity error when the Gram matrix is rank deficient.
pub fn ridge_solve(t_f: &Matrix, t_o: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if t_f.is_empty() {
        return Err(Error::Empty("task factor matrix"));
    }
    if t_o.len() != t_f.rows() {
        return Err(Error::Dimension {
            what: "outcome vector length",
            expected: t_f.rows(),
            found: t_o.len(),
        });
    }
    if t_o.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotFinite("outcomes"));
    }
    let g = gram_regularized(t_f, alpha)?;
    let chol = Cholesky::factor(&g).map_err(|rank| Error::Singular {
        rank,
        dim: t_f.cols(),
    })?;
    Ok(chol.solve(&t_f.transpose_mul(t_o)))
}

/// Trace of `(M^T M + alpha I)^{-1}`, the A-optimality objective.
///
/// Returns [`INFINITE_OBJECTIVE`] when the regularized Gram matrix is
/// singular instead of erroring: selection routines treat such candidates as
/// unusable rather than fatal.
pub fn trace_inverse_gram(m: &Matrix, alpha: f64) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::Empty("matrix"));
    }
    let g = gram_regularized(m, alpha)?;
    Ok(match Cholesky::factor(&g) {
        Ok(chol) => chol.trace_of_inverse(),
        Err(_) => INFINITE_OBJECTIVE,
    })
}

/// Trace of the inverse of a principal submatrix of a regularized Gram
/// matrix, keeping only the listed indices. Same sentinel convention as
/// [`trace_inverse_gram`]. An empty selection has trace 0.
pub(crate) fn submatrix_inverse_trace(g: &Matrix, keep: &[usize]) -> f64 {
    if keep.is_empty() {
        return 0.0;
    }
    let k = keep.len();
    let mut sub = Matrix::zeros(k, k);
    for (i, &a) in keep.iter().enumerate() {
        for (j, &b) in keep.iter().enumerate() {
            sub.data[i * k + j] = g.get(a, b);
        }
    }
    match Cholesky::factor(&sub) {
        Ok(chol) => chol.trace_of_inverse(),
        Err(_) => INFINITE_OBJECTIVE,
    }
}

//! Dense symmetric linear algebra: positive-definiteness via Cholesky, block
//! partitioning by index set, Schur complements, two-sided block-inverse
//! formulas, Loewner-order tests, and random correlation matrices.
//!
//! Everything here is sized for small dense problems (d up to ~20, hard use
//! cases below ~100). Matrices are row-major `Vec<f64>`. Block operations
//! work internally in the permuted order (J first, then the complement) and
//! map results back to original indices at the API boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::LinalgError;

/// Relative pivot threshold for the positive-definiteness test:
/// a Cholesky pivot must exceed `CHOL_PIVOT_REL * max_diagonal`.
pub const CHOL_PIVOT_REL: f64 = 1e-12;

/// Asymmetry tolerance for covariance readers, relative to max(1, max |entry|).
pub const SYMMETRY_TOL: f64 = 1e-12;

const CORRELATION_MAX_ATTEMPTS: usize = 256;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        for r in rows {
            if r.len() != nc {
                return Err(LinalgError::DimensionMismatch { expected: nc, got: r.len() });
            }
        }
        let mut data = Vec::with_capacity(nr * nc);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: nr, cols: nc, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn to_row_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o += v;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (o, v) in out.data.iter_mut().zip(&other.data) {
            *o -= v;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Maximum symmetry deviation `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                dev = dev.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        dev
    }

    /// Replace both triangles by their average so the result is exactly symmetric.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// Lower-triangular Cholesky factor with a relative pivot threshold.
    ///
    /// A pivot at step `j` must exceed `CHOL_PIVOT_REL * max_diagonal` or the
    /// matrix is declared not positive definite. This is the scale-invariant
    /// test appropriate for covariance matrices.
    pub fn cholesky(&self) -> Result<Matrix, LinalgError> {
        let mut max_diag: f64 = 0.0;
        for i in 0..self.rows.min(self.cols) {
            max_diag = max_diag.max(self.get(i, i).abs());
        }
        self.cholesky_with_threshold(CHOL_PIVOT_REL * max_diag.max(f64::MIN_POSITIVE))
    }

    /// Cholesky for positive definite matrices with badly heterogeneous
    /// diagonal scales (e.g. `I` plus a diagonally dominated perturbation
    /// spanning hundreds of orders of magnitude). Each pivot is only tested
    /// against its own column scale.
    pub fn cholesky_raw(&self) -> Result<Matrix, LinalgError> {
        self.cholesky_with_threshold(0.0)
    }

    fn cholesky_with_threshold(&self, threshold: f64) -> Result<Matrix, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                let ljk = l.get(j, k);
                d -= ljk * ljk;
            }
            let floor = threshold.max(CHOL_PIVOT_REL * self.get(j, j).abs());
            if !(d > floor) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
            }
            let dj = d.sqrt();
            l.set(j, j, dj);
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / dj);
            }
        }
        Ok(l)
    }

    /// Solve `L y = b` for lower-triangular `L`, column-wise over `b`.
    pub fn forward_solve(l: &Matrix, b: &Matrix) -> Matrix {
        let n = l.rows;
        assert_eq!(b.rows, n);
        let mut y = b.clone();
        for c in 0..b.cols {
            for i in 0..n {
                let mut v = y.get(i, c);
                for k in 0..i {
                    v -= l.get(i, k) * y.get(k, c);
                }
                y.set(i, c, v / l.get(i, i));
            }
        }
        y
    }

    /// Solve `L^T x = y` for lower-triangular `L`, column-wise over `y`.
    pub fn back_solve(l: &Matrix, y: &Matrix) -> Matrix {
        let n = l.rows;
        assert_eq!(y.rows, n);
        let mut x = y.clone();
        for c in 0..y.cols {
            for i in (0..n).rev() {
                let mut v = x.get(i, c);
                for k in (i + 1)..n {
                    v -= l.get(k, i) * x.get(k, c);
                }
                x.set(i, c, v / l.get(i, i));
            }
        }
        x
    }

    /// Solve `(L L^T) x = b` given the lower Cholesky factor.
    pub fn chol_solve(l: &Matrix, b: &Matrix) -> Matrix {
        Matrix::back_solve(l, &Matrix::forward_solve(l, b))
    }

    /// Inverse via partial-pivot LU. Works for general square matrices.
    pub fn lu_inverse(&self) -> Result<Matrix, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = a.get(col, col).abs();
            for r in (col + 1)..n {
                let v = a.get(r, col).abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val <= 1e-13 * scale {
                return Err(LinalgError::SingularBlock { context: "LU pivot" });
            }
            if pivot_row != col {
                for j in 0..n {
                    let t = a.get(col, j);
                    a.set(col, j, a.get(pivot_row, j));
                    a.set(pivot_row, j, t);
                    let t = inv.get(col, j);
                    inv.set(col, j, inv.get(pivot_row, j));
                    inv.set(pivot_row, j, t);
                }
            }
            let p = a.get(col, col);
            for j in 0..n {
                a.set(col, j, a.get(col, j) / p);
                inv.set(col, j, inv.get(col, j) / p);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a.set(r, j, a.get(r, j) - f * a.get(col, j));
                    inv.set(r, j, inv.get(r, j) - f * inv.get(col, j));
                }
            }
        }
        Ok(inv)
    }

    /// Eigenvalues of a symmetric matrix via cyclic Jacobi, ascending.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        self.sym_eigen().0
    }

    /// Eigen-decomposition of a symmetric matrix: `(values, vectors)` with
    /// eigenvalues ascending and eigenvectors as the columns of `vectors`.
    pub fn sym_eigen(&self) -> (Vec<f64>, Matrix) {
        assert!(self.is_square(), "sym_eigen requires a square matrix");
        let n = self.rows;
        let mut a = self.symmetrized();
        let mut v = Matrix::identity(n);
        if n <= 1 {
            return (vec![if n == 1 { a.get(0, 0) } else { 0.0 }; n.min(1)], v);
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let mut off: f64 = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a.get(i, j).abs());
                }
            }
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= 1e-18 * scale {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
        let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
        (values, vectors)
    }

    /// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
    pub fn sym_spectral_norm(&self) -> f64 {
        self.sym_eigenvalues().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetric square root `S` with `S S = self`, via eigen-decomposition.
    /// Small negative eigenvalues within `1e-12 * spectral_norm` are clamped.
    pub fn sym_sqrt(&self) -> Result<Matrix, LinalgError> {
        let (vals, vecs) = self.sym_eigen();
        let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut roots = Vec::with_capacity(vals.len());
        for (i, &lam) in vals.iter().enumerate() {
            if lam < -1e-12 * norm {
                return Err(LinalgError::NotPositiveDefinite { index: i, pivot: lam });
            }
            roots.push(lam.max(0.0).sqrt());
        }
        let scaled = Matrix::from_fn(vecs.rows(), vecs.cols(), |r, c| vecs.get(r, c) * roots[c]);
        Ok(scaled.matmul(&vecs.transpose()).symmetrized())
    }
}

/// JSON wire form of a covariance matrix: `{"dim": d, "rows": [[...], ...]}`.
#[derive(Serialize, Deserialize)]
struct CovMatrixRepr {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

/// Symmetric positive definite covariance matrix with its Cholesky factor
/// computed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    mat: Matrix,
    chol: Matrix,
}

impl CovMatrix {
    /// Build from rows. Rejects non-square input, asymmetry beyond
    /// `SYMMETRY_TOL * max(1, scale)`, and non-positive-definite matrices.
    /// Entries are stored exactly symmetrized.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        if m.rows() == 0 {
            return Err(LinalgError::BadPartition { reason: "dimension must be >= 1".into() });
        }
        let dev = m.asymmetry();
        if dev > SYMMETRY_TOL * m.max_abs().max(1.0) {
            return Err(LinalgError::Asymmetric { max_dev: dev });
        }
        let mat = m.symmetrized();
        let chol = mat.cholesky()?;
        Ok(CovMatrix { mat, chol })
    }

    pub fn identity(d: usize) -> Self {
        CovMatrix::from_matrix(Matrix::identity(d)).expect("identity is PD")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    /// Cached lower-triangular Cholesky factor.
    pub fn chol(&self) -> &Matrix {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.chol.get(i, i).ln()).sum::<f64>() * 2.0
    }

    /// Dense inverse via the cached Cholesky factor.
    pub fn inverse(&self) -> Matrix {
        Matrix::chol_solve(&self.chol, &Matrix::identity(self.dim())).symmetrized()
    }
}

impl Serialize for CovMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CovMatrixRepr { dim: self.dim(), rows: self.mat.to_row_vecs() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CovMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = CovMatrixRepr::deserialize(d)?;
        if repr.rows.len() != repr.dim {
            return Err(serde::de::Error::custom(format!(
                "dim field {} does not match {} rows",
                repr.dim,
                repr.rows.len()
            )));
        }
        CovMatrix::new(&repr.rows).map_err(serde::de::Error::custom)
    }
}

/// Partition of `{0..d-1}` into an index set `J` and its complement.
///
/// `J` must be nonempty for the theorem-side operations; the complement may
/// be empty (all-negative mode). `positive_only` builds the degenerate
/// empty-`J` partition used only for pure positive-exponent moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexPartition {
    d: usize,
    j: Vec<usize>,
    jc: Vec<usize>,
}

impl IndexPartition {
    /// `j` holds 0-based indices; they are sorted and must be distinct,
    /// in-range, and nonempty.
    pub fn new(d: usize, j: &[usize]) -> Result<Self, LinalgError> {
        if d == 0 {
            return Err(LinalgError::BadPartition { reason: "dimension must be >= 1".into() });
        }
        if j.is_empty() {
            return Err(LinalgError::BadPartition { reason: "J must be nonempty".into() });
        }
        let mut j = j.to_vec();
        j.sort_unstable();
        if j.windows(2).any(|w| w[0] == w[1]) {
            return Err(LinalgError::BadPartition { reason: "J contains duplicates".into() });
        }
        if *j.last().unwrap() >= d {
            return Err(LinalgError::BadPartition {
                reason: format!("index {} out of range for dimension {}", j.last().unwrap(), d),
            });
        }
        let jc = (0..d).filter(|i| !j.contains(i)).collect();
        Ok(IndexPartition { d, j, jc })
    }

    /// Degenerate partition with empty `J`: every index carries a positive
    /// exponent. Not valid for Schur-complement or block-inverse operations.
    pub fn positive_only(d: usize) -> Self {
        IndexPartition { d, j: Vec::new(), jc: (0..d).collect() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn j(&self) -> &[usize] {
        &self.j
    }

    pub fn jc(&self) -> &[usize] {
        &self.jc
    }

    /// Permutation mapping local position (J first, then complement) to the
    /// original index.
    pub fn permutation(&self) -> Vec<usize> {
        self.j.iter().chain(self.jc.iter()).copied().collect()
    }

    fn require_nonempty_j(&self) -> Result<(), LinalgError> {
        if self.j.is_empty() {
            Err(LinalgError::BadPartition { reason: "J must be nonempty".into() })
        } else {
            Ok(())
        }
    }
}

/// The three distinct blocks of a symmetric matrix under a partition:
/// `a` = J x J, `b` = J x Jc, `c` = Jc x Jc.
#[derive(Clone, Debug)]
pub struct BlockView {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl BlockView {
    pub fn split(m: &Matrix, part: &IndexPartition) -> Self {
        let j = part.j();
        let jc = part.jc();
        BlockView {
            a: Matrix::from_fn(j.len(), j.len(), |r, c| m.get(j[r], j[c])),
            b: Matrix::from_fn(j.len(), jc.len(), |r, c| m.get(j[r], jc[c])),
            c: Matrix::from_fn(jc.len(), jc.len(), |r, c| m.get(jc[r], jc[c])),
        }
    }

    /// Reassemble the full matrix in original index order.
    pub fn assemble(&self, part: &IndexPartition) -> Matrix {
        let j = part.j();
        let jc = part.jc();
        let d = part.dim();
        let mut m = Matrix::zeros(d, d);
        for (r, &ir) in j.iter().enumerate() {
            for (c, &ic) in j.iter().enumerate() {
                m.set(ir, ic, self.a.get(r, c));
            }
            for (c, &ic) in jc.iter().enumerate() {
                m.set(ir, ic, self.b.get(r, c));
                m.set(ic, ir, self.b.get(r, c));
            }
        }
        for (r, &ir) in jc.iter().enumerate() {
            for (c, &ic) in jc.iter().enumerate() {
                m.set(ir, ic, self.c.get(r, c));
            }
        }
        m
    }
}

/// Schur complement of the J block: `C - B^T A^{-1} B`, rows/columns in the
/// (sorted) complement order. The complement must be nonempty.
pub fn schur_complement(sigma: &CovMatrix, part: &IndexPartition) -> Result<Matrix, LinalgError> {
    part.require_nonempty_j()?;
    check_partition_dim(sigma.dim(), part)?;
    if part.jc().is_empty() {
        return Err(LinalgError::BadPartition {
            reason: "complement must be nonempty for a Schur complement".into(),
        });
    }
    let blocks = BlockView::split(sigma.matrix(), part);
    let la = blocks
        .a
        .cholesky()
        .map_err(|_| LinalgError::SingularBlock { context: "Schur complement A block" })?;
    let ainv_b = Matrix::chol_solve(&la, &blocks.b);
    Ok(blocks.c.sub(&blocks.b.transpose().matmul(&ainv_b)).symmetrized())
}

/// Inverse of a positive definite matrix assembled from the block formula
/// that pivots on the top-left (J) block:
///
/// top-left `A^{-1} + A^{-1} B (S)^{-1} B^T A^{-1}`, off-diagonal
/// `-A^{-1} B (S)^{-1}`, bottom-right `(S)^{-1}`, with `S` the Schur
/// complement of the J block. Result is mapped back to original indices.
pub fn block_inverse(sigma: &CovMatrix, part: &IndexPartition) -> Result<Matrix, LinalgError> {
    part.require_nonempty_j()?;
    check_partition_dim(sigma.dim(), part)?;
    let blocks = BlockView::split(sigma.matrix(), part);
    let la = blocks
        .a
        .cholesky()
        .map_err(|_| LinalgError::SingularBlock { context: "block inverse A block" })?;
    if part.jc().is_empty() {
        // Degenerate all-J partition: plain Cholesky inverse.
        let inv = Matrix::chol_solve(&la, &Matrix::identity(part.j().len())).symmetrized();
        return Ok(BlockView { a: inv, b: Matrix::zeros(part.j().len(), 0), c: Matrix::zeros(0, 0) }
            .assemble(part));
    }
    let a_inv = Matrix::chol_solve(&la, &Matrix::identity(blocks.a.rows()));
    let ainv_b = Matrix::chol_solve(&la, &blocks.b);
    let schur = blocks.c.sub(&blocks.b.transpose().matmul(&ainv_b)).symmetrized();
    let ls = schur
        .cholesky()
        .map_err(|_| LinalgError::SingularBlock { context: "block inverse Schur complement" })?;
    let schur_inv = Matrix::chol_solve(&ls, &Matrix::identity(schur.rows()));
    let ainv_b_sinv = ainv_b.matmul(&schur_inv);
    let top_left = a_inv.add(&ainv_b_sinv.matmul(&ainv_b.transpose())).symmetrized();
    let top_right = Matrix::from_fn(ainv_b_sinv.rows(), ainv_b_sinv.cols(), |r, c| {
        -ainv_b_sinv.get(r, c)
    });
    let view = BlockView { a: top_left, b: top_right, c: schur_inv.symmetrized() };
    Ok(view.assemble(part))
}

/// Inverse of a symmetric matrix assembled from the block formula that pivots
/// on the bottom-right (complement) block `R`:
///
/// top-left `(M/R)^{-1}`, off-diagonal `-(M/R)^{-1} Q R^{-1}`, bottom-right
/// `R^{-1} + R^{-1} Q^T (M/R)^{-1} Q R^{-1}`, with `M/R = P - Q R^{-1} Q^T`.
/// Blocks are inverted by pivoted LU so the formula also applies to
/// indefinite symmetric matrices with invertible `R` and `M/R`.
pub fn block_inverse_variant2(m: &Matrix, part: &IndexPartition) -> Result<Matrix, LinalgError> {
    part.require_nonempty_j()?;
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    check_partition_dim(m.rows(), part)?;
    if part.jc().is_empty() {
        return Err(LinalgError::BadPartition {
            reason: "complement must be nonempty to pivot on the R block".into(),
        });
    }
    let blocks = BlockView::split(m, part);
    let p = &blocks.a;
    let q = &blocks.b;
    let r_inv = blocks
        .c
        .lu_inverse()
        .map_err(|_| LinalgError::SingularBlock { context: "variant2 R block" })?;
    let q_rinv = q.matmul(&r_inv);
    let m_over_r = p.sub(&q_rinv.matmul(&q.transpose())).symmetrized();
    let mr_inv = m_over_r
        .lu_inverse()
        .map_err(|_| LinalgError::SingularBlock { context: "variant2 Schur complement M/R" })?;
    let top_right = {
        let t = mr_inv.matmul(&q_rinv);
        Matrix::from_fn(t.rows(), t.cols(), |i, j| -t.get(i, j))
    };
    let bottom_right = r_inv
        .add(&q_rinv.transpose().matmul(&mr_inv).matmul(&q_rinv))
        .symmetrized();
    let view = BlockView { a: mr_inv.symmetrized(), b: top_right, c: bottom_right };
    Ok(view.assemble(part))
}

/// Loewner comparison `a <= b`: true iff the smallest eigenvalue of `b - a`
/// is at least `-tol`. `tol = None` uses `1e-10 * spectral_norm(b)`.
pub fn loewner_leq(a: &Matrix, b: &Matrix, tol: Option<f64>) -> Result<bool, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(LinalgError::DimensionMismatch { expected: a.rows(), got: b.rows() });
    }
    let tol = tol.unwrap_or_else(|| 1e-10 * b.sym_spectral_norm());
    let diff = b.sub(a).symmetrized();
    let min_eig = diff.sym_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
    Ok(min_eig >= -tol)
}

/// Random correlation matrix: Gram matrix of `d` unit vectors drawn uniformly
/// on the sphere, resampled until the condition number is at most
/// `condition_cap`. Deterministic per seed; exactly symmetric with unit
/// diagonal.
pub fn random_correlation(
    d: usize,
    seed: u64,
    condition_cap: f64,
) -> Result<CovMatrix, LinalgError> {
    if d == 0 {
        return Err(LinalgError::BadPartition { reason: "dimension must be >= 1".into() });
    }
    if !(condition_cap > 1.0) {
        return Err(LinalgError::BadPartition { reason: "condition_cap must exceed 1".into() });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0xC0_44E1); // domain separation for correlation sampling
    for _ in 0..CORRELATION_MAX_ATTEMPTS {
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut degenerate = false;
        for _ in 0..d {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                degenerate = true;
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            vectors.push(v);
        }
        if degenerate {
            continue;
        }
        let mut m = Matrix::identity(d);
        for i in 0..d {
            for j in (i + 1)..d {
                let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
                m.set(i, j, dot);
                m.set(j, i, dot);
            }
        }
        let eigs = m.sym_eigenvalues();
        let min = eigs.first().copied().unwrap_or(0.0);
        let max = eigs.last().copied().unwrap_or(0.0);
        if min > 0.0 && max / min <= condition_cap {
            if let Ok(cov) = CovMatrix::from_matrix(m) {
                return Ok(cov);
            }
        }
    }
    Err(LinalgError::GenerationExhausted { attempts: CORRELATION_MAX_ATTEMPTS })
}

fn check_partition_dim(dim: usize, part: &IndexPartition) -> Result<(), LinalgError> {
    if part.dim() != dim {
        return Err(LinalgError::DimensionMismatch { expected: dim, got: part.dim() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        let m = CovMatrix::new(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let l = m.chol();
        let rebuilt = l.matmul(&l.transpose());
        assert!(rebuilt.max_abs_diff(m.matrix()) <= 1e-12 * m.matrix().max_abs());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let err = CovMatrix::new(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap_err();
        assert!(matches!(err, LinalgError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn rejects_asymmetry() {
        let err = CovMatrix::new(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap_err();
        assert!(matches!(err, LinalgError::Asymmetric { .. }));
    }

    #[test]
    fn schur_complement_two_by_two() {
        // [[1, .5], [.5, 1]] with J = {0}: 1 - 0.25 = 0.75
        let sigma = CovMatrix::new(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let part = IndexPartition::new(2, &[0]).unwrap();
        let s = schur_complement(&sigma, &part).unwrap();
        assert_eq!(s.rows(), 1);
        approx(s.get(0, 0), 0.75, 1e-15);
    }

    #[test]
    fn schur_complement_of_identity() {
        for d in 1..5usize {
            let sigma = CovMatrix::identity(d + 1);
            let part = IndexPartition::new(d + 1, &[0]).unwrap();
            let s = schur_complement(&sigma, &part).unwrap();
            assert_eq!(s.max_abs_diff(&Matrix::identity(d)), 0.0);
        }
    }

    #[test]
    fn schur_complement_matches_inverse_block_oracle() {
        // Schur complement equals the inverse of the (Jc,Jc) block of the
        // dense inverse: cross-check by direct LU inversion.
        let sigma = CovMatrix::new(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let part = IndexPartition::new(3, &[0, 1]).unwrap();
        let s = schur_complement(&sigma, &part).unwrap();
        let dense_inv = sigma.matrix().lu_inverse().unwrap();
        let inv_block = Matrix::from_rows(&[vec![dense_inv.get(2, 2)]]).unwrap();
        let oracle = inv_block.lu_inverse().unwrap();
        approx(s.get(0, 0), oracle.get(0, 0), 1e-12);
    }

    #[test]
    fn block_inverse_examples() {
        let sigma = CovMatrix::new(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let part = IndexPartition::new(2, &[0]).unwrap();
        let inv = block_inverse(&sigma, &part).unwrap();
        approx(inv.get(0, 0), 0.5, 1e-15);
        approx(inv.get(1, 1), 0.25, 1e-15);
        approx(inv.get(0, 1), 0.0, 1e-15);

        let sigma = CovMatrix::new(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let inv = block_inverse(&sigma, &part).unwrap();
        approx(inv.get(0, 0), 4.0 / 3.0, 1e-14);
        approx(inv.get(0, 1), -2.0 / 3.0, 1e-14);
        approx(inv.get(1, 1), 4.0 / 3.0, 1e-14);
    }

    #[test]
    fn block_inverse_defining_identity() {
        let sigma = random_correlation(5, 99, 1e4).unwrap();
        let part = IndexPartition::new(5, &[0, 2]).unwrap();
        let inv = block_inverse(&sigma, &part).unwrap();
        let prod = sigma.matrix().matmul(&inv);
        assert!(prod.max_abs_diff(&Matrix::identity(5)) <= 1e-10);
    }

    #[test]
    fn variant2_examples() {
        let m = Matrix::diagonal(&[3.0, 6.0]);
        let part = IndexPartition::new(2, &[0]).unwrap();
        let inv = block_inverse_variant2(&m, &part).unwrap();
        approx(inv.get(0, 0), 1.0 / 3.0, 1e-15);
        approx(inv.get(1, 1), 1.0 / 6.0, 1e-15);

        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let inv = block_inverse_variant2(&m, &part).unwrap();
        approx(inv.get(0, 0), 1.0, 1e-14);
        approx(inv.get(0, 1), -1.0, 1e-14);
        approx(inv.get(1, 1), 2.0, 1e-14);
    }

    #[test]
    fn both_block_inverses_agree() {
        let sigma = random_correlation(5, 1234, 1e4).unwrap();
        let part = IndexPartition::new(5, &[0, 2]).unwrap();
        let v1 = block_inverse(&sigma, &part).unwrap();
        let v2 = block_inverse_variant2(sigma.matrix(), &part).unwrap();
        assert!(v1.max_abs_diff(&v2) <= 1e-10 * v1.max_abs());
    }

    #[test]
    fn loewner_basics() {
        let i2 = Matrix::identity(2);
        let two = Matrix::diagonal(&[2.0, 2.0]);
        assert!(loewner_leq(&i2, &two, None).unwrap());
        assert!(!loewner_leq(&two, &i2, None).unwrap());
        let err = loewner_leq(&i2, &Matrix::identity(3), None).unwrap_err();
        assert!(matches!(err, LinalgError::DimensionMismatch { .. }));
    }

    #[test]
    fn loewner_antisymmetry_forces_equality() {
        let a = Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let mut b = a.clone();
        b.set(0, 0, 1.0 + 1e-13);
        b.set(1, 1, 2.0 - 1e-13);
        b = b.symmetrized();
        let tol = Some(1e-10);
        assert!(loewner_leq(&a, &b, tol).unwrap());
        assert!(loewner_leq(&b, &a, tol).unwrap());
        assert!(a.max_abs_diff(&b) <= 1e-10);
    }

    #[test]
    fn random_correlation_invariants() {
        let one = random_correlation(1, 5, 1e4).unwrap();
        assert_eq!(one.dim(), 1);
        approx(one.entry(0, 0), 1.0, 0.0);

        let c = random_correlation(3, 42, 1e4).unwrap();
        for i in 0..3 {
            assert_eq!(c.entry(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(c.entry(i, j), c.entry(j, i));
            }
        }
        assert!(c.matrix().sym_eigenvalues().iter().all(|&l| l > 0.0));

        let c2 = random_correlation(2, 7, 1e4).unwrap();
        assert!(c2.entry(0, 1).abs() < 1.0);

        // identical seed -> identical matrix, byte for byte
        let again = random_correlation(3, 42, 1e4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.entry(i, j).to_bits(), again.entry(i, j).to_bits());
            }
        }
    }

    #[test]
    fn block_view_reassembles_exactly() {
        let sigma = random_correlation(4, 11, 1e4).unwrap();
        let part = IndexPartition::new(4, &[1, 3]).unwrap();
        let view = BlockView::split(sigma.matrix(), &part);
        let rebuilt = view.assemble(&part);
        assert_eq!(rebuilt.max_abs_diff(sigma.matrix()), 0.0);
    }

    #[test]
    fn partition_validation() {
        assert!(IndexPartition::new(3, &[]).is_err());
        assert!(IndexPartition::new(3, &[3]).is_err());
        assert!(IndexPartition::new(3, &[1, 1]).is_err());
        let p = IndexPartition::new(3, &[2, 0]).unwrap();
        assert_eq!(p.j(), &[0, 2]);
        assert_eq!(p.jc(), &[1]);
        let all = IndexPartition::new(2, &[0, 1]).unwrap();
        assert!(all.jc().is_empty());
    }

    #[test]
    fn covmatrix_json_round_trip() {
        let sigma = CovMatrix::new(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let js = serde_json::to_string(&sigma).unwrap();
        assert!(js.contains("\"dim\":2"));
        let back: CovMatrix = serde_json::from_str(&js).unwrap();
        assert_eq!(back, sigma);

        let bad = r#"{"dim":2,"rows":[[1.0,0.5],[0.4,1.0]]}"#;
        assert!(serde_json::from_str::<CovMatrix>(bad).is_err());
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let sigma = random_correlation(3, 21, 1e4).unwrap();
        let s = sigma.matrix().sym_sqrt().unwrap();
        assert!(s.matmul(&s).max_abs_diff(sigma.matrix()) <= 1e-10);
    }
}

//! Sparse matrices and symmetric solvers.
//!
//! The sparse Cholesky factorization splits into a symbolic phase (minimum
//! degree ordering and fill pattern), computed once per sparsity pattern, and
//! a numeric phase that is repeated whenever the matrix values change. MCMC on
//! FEM models re-factors the same pattern once per proposal, so only the
//! numeric phase sits on the hot path.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// Compressed sparse row matrix with sorted, de-duplicated column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Position of `(r, c)` in the value array, if structurally present.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| span.start + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, out) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self + alpha * other`; patterns are merged.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((r, c, v));
            }
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Maximum absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}

/// Fill-reducing ordering and the column structure of the Cholesky factor.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    /// Column pointers of L (strictly lower part, rows sorted).
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For each column j, the columns k < j with `L[j, k] != 0`.
    row_ptr_t: Vec<usize>,
    col_idx_t: Vec<usize>,
    /// Pattern of the matrix this was built for.
    a_row_ptr: Vec<usize>,
    a_col_idx: Vec<usize>,
}

impl SymbolicCholesky {
    /// Minimum degree ordering followed by symbolic elimination.
    pub fn analyze(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        check_dim("square matrix", n, a.ncols)?;
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for r in 0..n {
            for (c, _) in a.row(r) {
                if c != r {
                    adj[r].insert(c);
                    adj[c].insert(r);
                }
            }
        }
        let mut eliminated = vec![false; n];
        let mut perm = Vec::with_capacity(n);
        // Column pattern of L in original labels, recorded at elimination time.
        let mut patterns: Vec<Vec<usize>> = Vec::with_capacity(n);
        for _ in 0..n {
            let v = (0..n)
                .filter(|&i| !eliminated[i])
                .min_by_key(|&i| (adj[i].len(), i))
                .expect("remaining node");
            eliminated[v] = true;
            let neighbours: Vec<usize> = adj[v].iter().copied().collect();
            for &u in &neighbours {
                adj[u].remove(&v);
            }
            for (i, &u) in neighbours.iter().enumerate() {
                for &w in &neighbours[i + 1..] {
                    adj[u].insert(w);
                    adj[w].insert(u);
                }
            }
            adj[v].clear();
            perm.push(v);
            patterns.push(neighbours);
        }
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::new();
        for (j, pat) in patterns.iter().enumerate() {
            let mut rows: Vec<usize> = pat.iter().map(|&o| inv_perm[o]).collect();
            rows.sort_unstable();
            debug_assert!(rows.iter().all(|&r| r > j));
            row_idx.extend(rows);
            col_ptr[j + 1] = row_idx.len();
        }
        let mut counts = vec![0usize; n + 1];
        for &r in &row_idx {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr_t = counts.clone();
        let mut fill = counts;
        let mut col_idx_t = vec![0usize; row_idx.len()];
        for j in 0..n {
            for &r in &row_idx[col_ptr[j]..col_ptr[j + 1]] {
                col_idx_t[fill[r]] = j;
                fill[r] += 1;
            }
        }
        Ok(SymbolicCholesky {
            n,
            perm,
            inv_perm,
            col_ptr,
            row_idx,
            row_ptr_t,
            col_idx_t,
            a_row_ptr: a.row_ptr.clone(),
            a_col_idx: a.col_idx.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of strictly-lower nonzeros in the factor.
    pub fn factor_nnz(&self) -> usize {
        self.row_idx.len()
    }

    fn matches(&self, a: &CsrMatrix) -> bool {
        a.nrows == self.n && a.row_ptr == self.a_row_ptr && a.col_idx == self.a_col_idx
    }
}

/// Numeric sparse Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    symbolic: Arc<SymbolicCholesky>,
    diag: Vec<f64>,
    lower: Vec<f64>,
}

impl SparseCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let symbolic = Arc::new(SymbolicCholesky::analyze(a)?);
        Self::factor_with(symbolic, a)
    }

    /// Numeric factorization reusing a symbolic analysis of the same pattern.
    pub fn factor_with(symbolic: Arc<SymbolicCholesky>, a: &CsrMatrix) -> Result<Self> {
        if !symbolic.matches(a) {
            return Err(Error::InvalidArgument(
                "matrix pattern differs from the symbolic analysis".into(),
            ));
        }
        let s = &*symbolic;
        let n = s.n;
        let mut diag = vec![0.0; n];
        let mut lower = vec![0.0; s.row_idx.len()];
        let mut work = vec![0.0; n];
        // Cursor into each finished column, pointing at the first row >= current column.
        let mut cursor: Vec<usize> = s.col_ptr[..n].to_vec();
        for j in 0..n {
            let old_j = s.perm[j];
            for (old_c, v) in a.row(old_j) {
                let c = s.inv_perm[old_c];
                if c >= j {
                    work[c] += v;
                }
            }
            for &k in &s.col_idx_t[s.row_ptr_t[j]..s.row_ptr_t[j + 1]] {
                let start = cursor[k];
                debug_assert_eq!(s.row_idx[start], j);
                let ljk = lower[start];
                work[j] -= ljk * ljk;
                for p in start + 1..s.col_ptr[k + 1] {
                    work[s.row_idx[p]] -= lower[p] * ljk;
                }
                cursor[k] = start + 1;
            }
            let d = work[j];
            work[j] = 0.0;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotSpd {
                    pivot: old_j,
                    value: d,
                });
            }
            let ljj = d.sqrt();
            diag[j] = ljj;
            for p in s.col_ptr[j]..s.col_ptr[j + 1] {
                let r = s.row_idx[p];
                lower[p] = work[r] / ljj;
                work[r] = 0.0;
            }
        }
        Ok(SparseCholesky {
            symbolic,
            diag,
            lower,
        })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &*self.symbolic;
        assert_eq!(b.len(), s.n);
        let mut y: Vec<f64> = s.perm.iter().map(|&o| b[o]).collect();
        for j in 0..s.n {
            y[j] /= self.diag[j];
            let yj = y[j];
            for p in s.col_ptr[j]..s.col_ptr[j + 1] {
                y[s.row_idx[p]] -= self.lower[p] * yj;
            }
        }
        for j in (0..s.n).rev() {
            let mut acc = y[j];
            for p in s.col_ptr[j]..s.col_ptr[j + 1] {
                acc -= self.lower[p] * y[s.row_idx[p]];
            }
            y[j] = acc / self.diag[j];
        }
        let mut x = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradient on a symmetric positive definite matrix.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveInfo)> {
    let n = a.nrows;
    check_dim("conjugate gradient rhs", n, b.len())?;
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveInfo::default()));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = 1.0;
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotSpd {
                pivot: it,
                value: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = norm2(&r) / bnorm;
        if residual <= rel_tol {
            return Ok((
                x,
                SolveInfo {
                    iterations: it + 1,
                    residual,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Linear solver choice for symmetric positive definite systems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearSolver {
    DenseCholesky,
    SparseCholesky,
    ConjugateGradient { rel_tol: f64 },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::SparseCholesky
    }
}

/// A factorized (or, for CG, retained) SPD operator.
#[derive(Clone, Debug)]
pub enum Factorization {
    Dense(nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>),
    Sparse(SparseCholesky),
    Iterative { matrix: CsrMatrix, rel_tol: f64 },
}

impl Factorization {
    /// Factors `a`, reusing `symbolic` for the sparse path when its pattern matches.
    pub fn new(
        solver: LinearSolver,
        a: &CsrMatrix,
        symbolic: Option<&Arc<SymbolicCholesky>>,
    ) -> Result<Self> {
        match solver {
            LinearSolver::DenseCholesky => a
                .to_dense()
                .cholesky()
                .map(Factorization::Dense)
                .ok_or(Error::NotSpd {
                    pivot: 0,
                    value: f64::NAN,
                }),
            LinearSolver::SparseCholesky => {
                let sym = match symbolic {
                    Some(s) if s.matches(a) => Arc::clone(s),
                    _ => Arc::new(SymbolicCholesky::analyze(a)?),
                };
                SparseCholesky::factor_with(sym, a).map(Factorization::Sparse)
            }
            LinearSolver::ConjugateGradient { rel_tol } => Ok(Factorization::Iterative {
                matrix: a.clone(),
                rel_tol,
            }),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveInfo)> {
        match self {
            Factorization::Dense(c) => {
                let x = c.solve(&nalgebra::DVector::from_column_slice(b));
                Ok((x.as_slice().to_vec(), SolveInfo::default()))
            }
            Factorization::Sparse(c) => Ok((c.solve(b), SolveInfo::default())),
            Factorization::Iterative { matrix, rel_tol } => {
                conjugate_gradient(matrix, b, *rel_tol, 10 * matrix.nrows().max(100))
            }
        }
    }

    pub fn symbolic(&self) -> Option<&Arc<SymbolicCholesky>> {
        match self {
            Factorization::Sparse(c) => Some(c.symbolic()),
            _ => None,
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let idx = |i: usize, j: usize| i * m + j;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i > 0 {
                    t.push((idx(i, j), idx(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((idx(i, j), idx(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(m * m, m * m, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn sparse_cholesky_matches_dense() {
        let a = laplacian_2d(9);
        let b: Vec<f64> = (0..81).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let sparse = SparseCholesky::factor(&a).unwrap().solve(&b);
        let dense = a
            .to_dense()
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_column_slice(&b));
        for (s, d) in sparse.iter().zip(dense.iter()) {
            assert!((s - d).abs() < 1e-12);
        }
        let r = a.mul_vec(&sparse);
        let res: f64 = r.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(res / norm2(&b) < 1e-13);
    }

    #[test]
    fn symbolic_reuse_rejects_other_pattern() {
        let a = laplacian_2d(4);
        let sym = Arc::new(SymbolicCholesky::analyze(&a).unwrap());
        let other = CsrMatrix::identity(16);
        assert!(SparseCholesky::factor_with(sym, &other).is_err());
    }

    #[test]
    fn minimum_degree_limits_fill() {
        let a = laplacian_2d(20);
        let sym = SymbolicCholesky::analyze(&a).unwrap();
        // Banded ordering would need about n * m = 8000 entries.
        assert!(sym.factor_nnz() < 6000, "fill {}", sym.factor_nnz());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            SparseCholesky::factor(&a),
            Err(Error::NotSpd { .. })
        ));
    }

    #[test]
    fn cg_converges_to_tolerance() {
        let a = laplacian_2d(12);
        let b = vec![1.0; 144];
        let (x, info) = conjugate_gradient(&a, &b, 1e-10, 1000).unwrap();
        let r = a.mul_vec(&x);
        let res: f64 = r.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(res / norm2(&b) <= 1e-10);
        assert!(info.iterations > 0);
    }

    #[test]
    fn cg_reports_stagnation() {
        let a = laplacian_2d(12);
        let b = vec![1.0; 144];
        assert!(matches!(
            conjugate_gradient(&a, &b, 1e-14, 3),
            Err(Error::CgNotConverged { iterations: 3, .. })
        ));
    }
}

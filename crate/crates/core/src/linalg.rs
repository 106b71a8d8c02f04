//! Compressed-row sparse matrices, linear solves and the normalized null-space
//! solve used by the cell problem.
//!
//! Direct solves are backed by faer's sparse LU with partial pivoting. A
//! Jacobi-preconditioned BiCGSTAB serves as the iterative fallback for very
//! large systems. Every returned solution is residual-checked.

use std::io::Write;
use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};

/// Square or rectangular matrix in compressed sparse row form.
///
/// Column indices are sorted and unique within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator. Duplicate entries are summed when the
/// matrix is built, in insertion order, so the result does not depend on how
/// contributions were batched.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    pub fn extend(&mut self, it: impl IntoIterator<Item = (usize, usize, f64)>) {
        self.entries.extend(it);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> SparseMatrix {
        // stable: equal (row, col) keep insertion order
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Parameter("row offsets inconsistent with dimensions".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::Parameter("column and value arrays differ in length".into()));
        }
        for i in 0..nrows {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if row_ptr[i] > row_ptr[i + 1] || cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::Parameter(format!("row {i} has unsorted, duplicate or out-of-range columns")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_triplets(nrows: usize, ncols: usize, t: &[(usize, usize, f64)]) -> Self {
        let mut b = TripletBuilder::with_capacity(nrows, ncols, t.len());
        b.extend(t.iter().copied());
        b.build()
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
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

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to stored values; the pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.nrows == other.nrows && self.ncols == other.ncols && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `self += c·other` for matrices with identical patterns.
    pub fn axpy_same_pattern(&mut self, c: f64, other: &SparseMatrix) {
        assert!(self.same_pattern(other), "patterns differ");
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += c * b);
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Iterates over `(column, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in matrix-vector product");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn total_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `Σ cₖ Aₖ` over matrices of equal shape; the pattern is the union.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let (nrows, ncols) = terms
            .first()
            .map(|(_, m)| (m.nrows, m.ncols))
            .expect("linear combination of zero matrices");
        let cap = terms.iter().map(|(_, m)| m.nnz()).sum();
        let mut b = TripletBuilder::with_capacity(nrows, ncols, cap);
        for (c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "shape mismatch");
            b.extend(m.triplets().map(|(i, j, v)| (i, j, c * v)));
        }
        b.build()
    }

    pub fn transpose(&self) -> Self {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        b.extend(self.triplets().map(|(i, j, v)| (j, i, v)));
        b.build()
    }

    /// Submatrix on `keep` rows and columns. `index[k]` is the new position of
    /// old index `k`, or `None` if dropped.
    pub fn restrict(&self, index: &[Option<usize>], n_keep: usize) -> Self {
        let mut b = TripletBuilder::with_capacity(n_keep, n_keep, self.nnz());
        for (i, j, v) in self.triplets() {
            if let (Some(p), Some(q)) = (index[i], index[j]) {
                b.push(p, q, v);
            }
        }
        b.build()
    }

    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> =
            self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Parameter(format!("cannot convert matrix: {e:?}")))
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(f, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Direct factorization up to `direct_limit` unknowns, iterative beyond.
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual bound `‖Ax − b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub backend: Backend,
    pub direct_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
            backend: Backend::Auto,
            direct_limit: 2_000_000,
        }
    }
}

impl SolverOptions {
    fn use_direct(&self, n: usize) -> bool {
        match self.backend {
            Backend::Direct => true,
            Backend::Iterative => false,
            Backend::Auto => n <= self.direct_limit,
        }
    }
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut r = a.mul_vec(x);
    axpy(-1.0, b, &mut r);
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

fn check_dims(a: &SparseMatrix, b: &[f64]) -> Result<()> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::Parameter(format!(
            "cannot solve a {}x{} system with a right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    Ok(())
}

/// A reusable sparse LU factorization with residual-checked solves.
pub struct LuFactorization {
    matrix: SparseMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    tol: f64,
}

impl std::fmt::Debug for LuFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactorization")
            .field("n", &self.matrix.nrows())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl LuFactorization {
    pub fn new(a: &SparseMatrix, tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Parameter("LU needs a square matrix".into()));
        }
        let lu = a.to_faer()?.sp_lu().map_err(|e| Error::Singular {
            message: format!("sparse LU failed: {e:?}"),
            residual: f64::NAN,
        })?;
        Ok(Self {
            matrix: a.clone(),
            lu,
            tol,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::from_fn(b.len(), |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[i]).collect()
    }

    /// Solves `A x = b` with up to two rounds of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dims(&self.matrix, b)?;
        if b.iter().all(|v| *v == 0.0) {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.raw_solve(b);
        let mut res = f64::INFINITY;
        for _ in 0..3 {
            if x.iter().any(|v| !v.is_finite()) {
                break;
            }
            res = relative_residual(&self.matrix, &x, b);
            if res <= self.tol {
                return Ok(x);
            }
            let mut r = self.matrix.mul_vec(&x);
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
            let dx = self.raw_solve(&r);
            axpy(1.0, &dx, &mut x);
        }
        Err(Error::Singular {
            message: "matrix singular or too ill-conditioned for the requested tolerance".into(),
            residual: res,
        })
    }
}

/// Solves `A x = b` to the relative residual in `opts`.
pub fn solve(a: &SparseMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    if opts.use_direct(a.nrows()) {
        LuFactorization::new(a, opts.tol)?.solve(b)
    } else {
        bicgstab(a, b, opts)
    }
}

/// Jacobi-preconditioned BiCGSTAB.
pub fn bicgstab(a: &SparseMatrix, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let n = b.len();
    let bn = norm2(b);
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(x, d)| x * d).collect() };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 0..opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: norm2(&r) / bn,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.mul_vec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let mut s = r.clone();
        axpy(-alpha, &v, &mut s);
        axpy(alpha, &p_hat, &mut x);
        if norm2(&s) <= opts.tol * bn {
            let res = relative_residual(a, &x, b);
            if res <= opts.tol {
                return Ok(x);
            }
        }
        let s_hat = precond(&s);
        let t = a.mul_vec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        axpy(omega, &s_hat, &mut x);
        r = s;
        axpy(-omega, &t, &mut r);
        if norm2(&r) <= opts.tol * bn {
            let res = relative_residual(a, &x, b);
            if res <= opts.tol {
                return Ok(x);
            }
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: relative_residual(a, &x, b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullspaceMethod {
    /// Solve `[[A, c], [cᵀ, 0]] [m; λ] = [0; 1]`.
    Bordered,
    /// Inverse iteration with a tiny diagonal shift.
    ShiftedInverseIteration,
}

/// Relative null residual accepted for the returned kernel vector.
pub const NULL_RESIDUAL_TOL: f64 = 1e-9;
/// A second, independent candidate with a residual below this means the
/// kernel is at least two-dimensional.
const SECOND_KERNEL_TOL: f64 = 1e-10;

fn null_residual(a: &SparseMatrix, m: &[f64]) -> f64 {
    norm2(&a.mul_vec(m)) / (a.frobenius_norm() * norm2(m))
}

fn shift_for(a: &SparseMatrix) -> f64 {
    1e-8 * a.frobenius_norm() / (a.nrows() as f64).sqrt()
}

fn shifted(a: &SparseMatrix, sigma: f64) -> SparseMatrix {
    SparseMatrix::linear_combination(&[(1.0, a), (sigma, &SparseMatrix::identity(a.nrows()))])
}

/// Deterministic, well-spread start vector.
fn start_vector(n: usize, salt: u64) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ salt;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Kernel vector `m` of `A` with `cᵀm = 1`, checking the kernel is one-dimensional.
///
/// Uses shifted inverse iteration; the factorization is shared with the
/// dimension check. The bordered formulation is available through
/// [`solve_constrained_nullspace_with`] but its dense border row and column
/// cause heavy fill-in on large meshes.
pub fn solve_constrained_nullspace(a: &SparseMatrix, c: &[f64]) -> Result<Vec<f64>> {
    check_nullspace_dims(a, c)?;
    let lu = shifted_lu(a)?;
    let m = normalize_kernel(a, c, inverse_iteration(&lu, c)?)?;
    second_candidate(&lu, a, c, &m)?;
    Ok(m)
}

fn check_nullspace_dims(a: &SparseMatrix, c: &[f64]) -> Result<()> {
    if !a.is_square() || c.len() != a.nrows() {
        return Err(Error::Parameter("null-space solve needs a square matrix and matching weights".into()));
    }
    Ok(())
}

pub fn solve_constrained_nullspace_with(
    a: &SparseMatrix,
    c: &[f64],
    method: NullspaceMethod,
) -> Result<Vec<f64>> {
    check_nullspace_dims(a, c)?;
    let n = a.nrows();
    let m = match method {
        NullspaceMethod::Bordered => {
            let mut b = TripletBuilder::with_capacity(n + 1, n + 1, a.nnz() + 2 * n);
            b.extend(a.triplets());
            for (i, &ci) in c.iter().enumerate() {
                b.push(i, n, ci);
                b.push(n, i, ci);
            }
            let bordered = b.build();
            let mut rhs = vec![0.0; n + 1];
            rhs[n] = 1.0;
            let mut x = LuFactorization::new(&bordered, 1e-12)?.solve(&rhs).map_err(|e| {
                Error::NullSpace(format!("bordered system is singular ({e}); kernel is not one-dimensional"))
            })?;
            x.truncate(n);
            x
        }
        NullspaceMethod::ShiftedInverseIteration => inverse_iteration(&shifted_lu(a)?, c)?,
    };
    normalize_kernel(a, c, m)
}

fn shifted_lu(a: &SparseMatrix) -> Result<LuFactorization> {
    LuFactorization::new(&shifted(a, shift_for(a)), f64::INFINITY)
}

fn inverse_iteration(lu: &LuFactorization, c: &[f64]) -> Result<Vec<f64>> {
    let mut x: Vec<f64> = c.to_vec();
    let s = norm2(&x);
    x.iter_mut().for_each(|v| *v /= s);
    for _ in 0..50 {
        let mut y = lu.raw_solve(&x);
        let s = norm2(&y);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NullSpace("inverse iteration broke down".into()));
        }
        let sign = if dot(c, &y) < 0.0 { -1.0 } else { 1.0 };
        y.iter_mut().for_each(|v| *v *= sign / s);
        let change = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        x = y;
        if change < 1e-14 {
            break;
        }
    }
    Ok(x)
}

/// Rescales to `cᵀm = 1` and checks the null residual.
fn normalize_kernel(a: &SparseMatrix, c: &[f64], mut m: Vec<f64>) -> Result<Vec<f64>> {
    let cm = dot(c, &m);
    if !(cm.abs() >= f64::EPSILON * norm2(c) * norm2(&m)) {
        return Err(Error::NullSpace("kernel vector is orthogonal to the normalization weights".into()));
    }
    m.iter_mut().for_each(|v| *v /= cm);
    let res = null_residual(a, &m);
    if !(res <= NULL_RESIDUAL_TOL) {
        return Err(Error::NullSpace(format!(
            "no kernel vector found: relative residual {res:.3e} exceeds {NULL_RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(m)
}

/// Fails if a second kernel direction, independent of `m`, exists.
pub fn check_kernel_dimension(a: &SparseMatrix, c: &[f64], m: &[f64]) -> Result<()> {
    second_candidate(&shifted_lu(a)?, a, c, m)
}

fn second_candidate(lu: &LuFactorization, a: &SparseMatrix, c: &[f64], m: &[f64]) -> Result<()> {
    let deflate = |w: &mut Vec<f64>| {
        let k = dot(c, w);
        axpy(-k, m, w);
    };
    let mut w = start_vector(a.nrows(), 1);
    deflate(&mut w);
    for _ in 0..4 {
        w = lu.raw_solve(&w);
        deflate(&mut w);
        let s = norm2(&w);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NullSpace("second-candidate iteration broke down".into()));
        }
        w.iter_mut().for_each(|v| *v /= s);
    }
    let res = null_residual(a, &w);
    if res < SECOND_KERNEL_TOL {
        return Err(Error::NullSpace(format!(
            "kernel has dimension greater than one (second candidate residual {res:.3e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i > 0 {
                b.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
            }
        }
        b.build()
    }

    fn periodic_laplacian(n: usize) -> SparseMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            b.push(i, (i + n - 1) % n, -1.0);
            b.push(i, (i + 1) % n, -1.0);
        }
        b.build()
    }

    #[test]
    fn builder_sums_duplicates_and_sorts() {
        let m = SparseMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 5.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row(1).collect::<Vec<_>>(), vec![(0, 3.0), (2, 5.0)]);
    }

    #[test]
    fn from_parts_validates() {
        assert!(SparseMatrix::from_parts(2, 2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
        assert!(SparseMatrix::from_parts(2, 2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_parts(2, 2, vec![0, 1], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn identity_solve() {
        let b = vec![1.0, -2.0, 3.5];
        let x = solve(&SparseMatrix::identity(3), &b, &SolverOptions::default()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn tridiagonal_solve() {
        let x = solve(&laplacian_1d(3), &[1.0, 0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(x[0], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(x[2], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn iterative_backend_agrees_with_direct() {
        let n = 200;
        let mut a = laplacian_1d(n);
        // nonsymmetric perturbation
        a = SparseMatrix::linear_combination(&[(1.0, &a), (0.3, &SparseMatrix::from_triplets(n, n, &(1..n).map(|i| (i, i - 1, 1.0)).collect::<Vec<_>>()))]);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let direct = solve(&a, &b, &SolverOptions::default()).unwrap();
        let it = solve(
            &a,
            &b,
            &SolverOptions {
                backend: Backend::Iterative,
                ..Default::default()
            },
        )
        .unwrap();
        for (p, q) in direct.iter().zip(&it) {
            assert!((p - q).abs() < 1e-6 * norm2(&direct));
        }
        assert!(relative_residual(&a, &it, &b) <= 1e-10);
    }

    #[test]
    fn singular_system_reports_error() {
        let a = periodic_laplacian(6);
        let err = solve(&a, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &SolverOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(solve(&SparseMatrix::identity(3), &[1.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn periodic_kernel_is_constant() {
        let a = periodic_laplacian(10);
        let c = vec![0.1; 10];
        for method in [NullspaceMethod::Bordered, NullspaceMethod::ShiftedInverseIteration] {
            let m = solve_constrained_nullspace_with(&a, &c, method).unwrap();
            for v in &m {
                assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-10);
            }
        }
        let m = solve_constrained_nullspace(&a.scaled(10.0), &c).unwrap();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn known_kernel_of_small_matrix() {
        // A = I - u vᵀ/(vᵀu) has kernel span(u); u = (1, 2, 3, 4), v = (1, 1, 2, 0)
        let u = [1.0, 2.0, 3.0, 4.0];
        let v = [1.0, 1.0, 2.0, 0.0];
        let vu = dot(&u, &v);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| f64::from(u8::from(i == j)) - u[i] * v[j] / vu).collect())
            .collect();
        let a = SparseMatrix::from_dense(&rows);
        let c = [1.0, 1.0, 1.0, 1.0];
        let bordered = solve_constrained_nullspace(&a, &c).unwrap();
        let inverse = solve_constrained_nullspace_with(&a, &c, NullspaceMethod::ShiftedInverseIteration).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(bordered[k], u[k] / 10.0, epsilon = 1e-12);
            assert!((bordered[k] - inverse[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn two_dimensional_kernel_is_detected() {
        // two decoupled periodic blocks
        let p = periodic_laplacian(5);
        let mut b = TripletBuilder::new(10, 10);
        for (i, j, v) in p.triplets() {
            b.push(i, j, v);
            b.push(i + 5, j + 5, v);
        }
        let a = b.build();
        let c = vec![1.0; 10];
        assert!(solve_constrained_nullspace(&a, &c).is_err());
    }

    #[test]
    fn nonsingular_matrix_has_no_kernel() {
        let a = laplacian_1d(5);
        assert!(solve_constrained_nullspace(&a, &[1.0; 5]).is_err());
    }

    #[test]
    fn restriction_and_transpose() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (0, 2, 2.0), (2, 0, 3.0), (1, 1, 4.0), (2, 2, 5.0)]);
        let r = a.restrict(&[Some(0), None, Some(1)], 2);
        assert_eq!(r.to_dense(), vec![vec![1.0, 2.0], vec![3.0, 5.0]]);
        assert_eq!(a.transpose().get(0, 2), 3.0);
        assert_eq!(a.max_asymmetry(), 1.0);
    }

    #[test]
    fn matrix_market_dump() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        laplacian_1d(3).write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n3 3 7\n"));
    }
}

//! Bilinear finite element assembly on the structured mesh of `[-1, 1]²`.
//!
//! All matrices share the 9-point stencil pattern of the mesh, so element
//! contributions are scattered straight into value slots. Element matrices
//! are computed in parallel and scattered in element order, which makes the
//! result independent of the thread count.

use rayon::prelude::*;

use crate::geometry::Point;
use crate::linalg::SparseMatrix;
use crate::mesh::{bilinear_shape, QuadMesh, QuadratureRule};

pub type Local = [[f64; 4]; 4];

/// Shape data at the 2×2 Gauss points, identical for every element.
#[derive(Debug, Clone)]
pub struct Q1Reference {
    pub xi: [Point; 4],
    /// `phi[q][a]`
    pub phi: [[f64; 4]; 4],
    /// Physical gradients `grad[q][a]`.
    pub grad: [[[f64; 2]; 4]; 4],
    /// Physical quadrature weights.
    pub weight: [f64; 4],
}

impl Q1Reference {
    pub fn new(h: f64) -> Self {
        let rule = QuadratureRule::gauss_2x2();
        let mut out = Self {
            xi: [[0.0; 2]; 4],
            phi: [[0.0; 4]; 4],
            grad: [[[0.0; 2]; 4]; 4],
            weight: [0.0; 4],
        };
        let scale = 2.0 / h;
        for q in 0..4 {
            let (n, dn) = bilinear_shape(rule.points[q]);
            out.xi[q] = rule.points[q];
            out.phi[q] = n;
            for a in 0..4 {
                out.grad[q][a] = [dn[a][0] * scale, dn[a][1] * scale];
            }
            out.weight[q] = rule.weights[q] * 0.25 * h * h;
        }
        out
    }

    /// Gradient of the nodal field `u` at quadrature point `q`.
    pub fn gradient(&self, q: usize, u: &[f64; 4]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..4 {
            g[0] += u[a] * self.grad[q][a][0];
            g[1] += u[a] * self.grad[q][a][1];
        }
        g
    }

    pub fn value(&self, q: usize, u: &[f64; 4]) -> f64 {
        (0..4).map(|a| u[a] * self.phi[q][a]).sum()
    }
}

/// Sparsity pattern and scatter maps for a [`QuadMesh`].
#[derive(Debug, Clone)]
pub struct Assembler {
    pub mesh: QuadMesh,
    pub reference: Q1Reference,
    full: SparseMatrix,
    free: SparseMatrix,
    full_slots: Vec<[usize; 16]>,
    free_slots: Vec<[Option<usize>; 16]>,
    /// Slot in the free pattern of each full-pattern slot.
    restriction: Vec<Option<usize>>,
}

fn stencil_pattern(n: usize, keep: impl Fn(usize) -> Option<usize>, dim: usize) -> SparseMatrix {
    let side = n + 1;
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut rows = vec![usize::MAX; dim];
    for k in 0..side * side {
        if let Some(r) = keep(k) {
            rows[r] = k;
        }
    }
    for &k in &rows {
        let (i, j) = ((k % side) as i64, (k / side) as i64);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (ii, jj) = (i + di, j + dj);
                if ii < 0 || jj < 0 || ii > n as i64 || jj > n as i64 {
                    continue;
                }
                if let Some(c) = keep(jj as usize * side + ii as usize) {
                    col_idx.push(c);
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    let nnz = col_idx.len();
    SparseMatrix::from_parts(dim, dim, row_ptr, col_idx, vec![0.0; nnz]).expect("stencil pattern is well formed")
}

fn slot(pattern: &SparseMatrix, row: usize, col: usize) -> usize {
    let start = pattern.row_offsets()[row];
    let cols = pattern.row_cols(row);
    start + cols.binary_search(&col).expect("entry in stencil pattern")
}

impl Assembler {
    pub fn new(mesh: QuadMesh) -> Self {
        let nn = mesh.n_nodes();
        let full = stencil_pattern(mesh.n, Some, nn);
        let free = stencil_pattern(mesh.n, |k| mesh.free_index[k], mesh.n_free());
        let mut full_slots = Vec::with_capacity(mesh.n_elements());
        let mut free_slots = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let nodes = mesh.element_nodes(e);
            let mut fs = [0usize; 16];
            let mut rs = [None; 16];
            for a in 0..4 {
                for b in 0..4 {
                    fs[4 * a + b] = slot(&full, nodes[a], nodes[b]);
                    if let (Some(p), Some(q)) = (mesh.free_index[nodes[a]], mesh.free_index[nodes[b]]) {
                        rs[4 * a + b] = Some(slot(&free, p, q));
                    }
                }
            }
            full_slots.push(fs);
            free_slots.push(rs);
        }
        let mut restriction = vec![None; full.nnz()];
        for k in 0..nn {
            let Some(p) = mesh.free_index[k] else { continue };
            let start = full.row_offsets()[k];
            for (off, &c) in full.row_cols(k).iter().enumerate() {
                if let Some(q) = mesh.free_index[c] {
                    restriction[start + off] = Some(slot(&free, p, q));
                }
            }
        }
        Self {
            reference: Q1Reference::new(mesh.h),
            mesh,
            full,
            free,
            full_slots,
            free_slots,
            restriction,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    /// Physical quadrature points of element `e`.
    pub fn quadrature_points(&self, e: usize) -> [Point; 4] {
        self.reference.xi.map(|xi| self.mesh.map(e, xi))
    }

    /// Nodal values of `u` on element `e`.
    pub fn gather(&self, e: usize, u: &[f64]) -> [f64; 4] {
        self.mesh.element_nodes(e).map(|k| u[k])
    }

    fn locals<F>(&self, local: F) -> Vec<Local>
    where
        F: Fn(usize) -> Local + Sync,
    {
        (0..self.n_elements()).into_par_iter().map(&local).collect()
    }

    /// Matrix over all nodes, `local(e)[a][b]` with `a` the test function.
    pub fn matrix_full<F>(&self, local: F) -> SparseMatrix
    where
        F: Fn(usize) -> Local + Sync,
    {
        let locals = self.locals(local);
        let mut out = self.full.clone();
        let vals = out.values_mut();
        for (slots, m) in self.full_slots.iter().zip(&locals) {
            for a in 0..4 {
                for b in 0..4 {
                    vals[slots[4 * a + b]] += m[a][b];
                }
            }
        }
        out
    }

    /// Matrix on the free (interior) nodes only.
    pub fn matrix_free<F>(&self, local: F) -> SparseMatrix
    where
        F: Fn(usize) -> Local + Sync,
    {
        let locals = self.locals(local);
        let mut out = self.free.clone();
        let vals = out.values_mut();
        for (slots, m) in self.free_slots.iter().zip(&locals) {
            for a in 0..4 {
                for b in 0..4 {
                    if let Some(s) = slots[4 * a + b] {
                        vals[s] += m[a][b];
                    }
                }
            }
        }
        out
    }

    /// Load vector over all nodes.
    pub fn vector_full<F>(&self, local: F) -> Vec<f64>
    where
        F: Fn(usize) -> [f64; 4] + Sync,
    {
        let locals: Vec<[f64; 4]> = (0..self.n_elements()).into_par_iter().map(&local).collect();
        let mut out = vec![0.0; self.mesh.n_nodes()];
        for (e, v) in locals.iter().enumerate() {
            for (a, k) in self.mesh.element_nodes(e).into_iter().enumerate() {
                out[k] += v[a];
            }
        }
        out
    }

    /// Drops boundary rows and columns of a full-pattern matrix.
    pub fn restrict(&self, full: &SparseMatrix) -> SparseMatrix {
        assert_eq!(full.nnz(), self.full.nnz(), "matrix does not use the mesh pattern");
        let mut out = self.free.clone();
        let vals = out.values_mut();
        for (s, v) in full.values().iter().enumerate() {
            if let Some(t) = self.restriction[s] {
                vals[t] += v;
            }
        }
        out
    }

    pub fn mass_local(&self) -> Local {
        let r = &self.reference;
        let mut m = [[0.0; 4]; 4];
        for q in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += r.weight[q] * r.phi[q][a] * r.phi[q][b];
                }
            }
        }
        m
    }
}

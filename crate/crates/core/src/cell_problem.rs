//! The periodic cell problem for the invariant density `m` and the averaged
//! coefficients it defines.
//!
//! `m` is the positive, periodic, unit-integral kernel vector of the adjoint
//! operator `m ↦ −∂²(A_ij m)/∂Y_i∂Y_j`. After one integration by parts the
//! weak form reads `∫ (A∇m + m·div A)·∇φ = 0` for every periodic `φ`, with
//! `div A` taken analytically inside each region and no interface terms.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CellCoefficients, Point, Sym2};
use crate::linalg::{self, SparseMatrix, TripletBuilder};
use crate::mesh::{DofMap, QuadratureRule, TriMesh};

/// Invariant density on the periodic hexagon mesh, one value per DOF.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub mesh: TriMesh,
    pub dofs: DofMap,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn nodal(&self) -> Vec<f64> {
        self.dofs.expand(&self.values)
    }

    /// `∫_P m dY`, exact for piecewise-linear `m`.
    pub fn integral(&self) -> f64 {
        dot_weights(&self.mesh, &self.dofs, &self.values)
    }

    /// Smallest nodal value and the node where it occurs.
    pub fn min(&self) -> (f64, usize) {
        self.nodal()
            .into_iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |acc, (k, v)| if v < acc.0 { (v, k) } else { acc })
    }

    /// Largest `|m(Y) − m(QY)|` over nodes, `Q` a sixth of a turn.
    pub fn rotation_defect(&self) -> f64 {
        let nodal = self.nodal();
        (0..nodal.len())
            .map(|k| (nodal[k] - nodal[self.mesh.rotate_node(k)]).abs())
            .fold(0.0, f64::max)
    }
}

/// Averaged coefficients of the homogenized system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomCoeffs {
    /// `∫_P A m dY`.
    pub am: Sym2,
    pub beta_m: f64,
    pub gamma_m: f64,
    pub diffusion: f64,
}

impl HomCoeffs {
    pub fn validate(&self) -> Result<()> {
        let (lo, _) = self.am.eigenvalues();
        let finite = [self.am.xx, self.am.xy, self.am.yy, self.beta_m, self.gamma_m, self.diffusion]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parameter("averaged coefficients must be finite".into()));
        }
        if !(lo > 0.0) {
            return Err(Error::Parameter(format!("averaged matrix is not positive definite (smallest eigenvalue {lo:e})")));
        }
        if !(self.gamma_m >= 0.0 && self.beta_m >= self.gamma_m) {
            return Err(Error::Parameter(format!(
                "need beta_m >= gamma_m >= 0, got beta_m = {}, gamma_m = {}",
                self.beta_m, self.gamma_m
            )));
        }
        if !(self.diffusion > 0.0) {
            return Err(Error::Parameter("diffusion D must be positive".into()));
        }
        Ok(())
    }

    /// `key = value` text, one entry per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("Am11", self.am.xx),
            ("Am12", self.am.xy),
            ("Am22", self.am.yy),
            ("beta_m", self.beta_m),
            ("gamma_m", self.gamma_m),
            ("D", self.diffusion),
        ] {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 6] = [None; 6];
        const KEYS: [&str; 6] = ["Am11", "Am12", "Am22", "beta_m", "gamma_m", "D"];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            let slot = KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| Error::Parse(format!("line {}: unknown key `{}`", n + 1, k.trim())))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: `{}` is not a number", n + 1, v.trim())))?;
            vals[slot] = Some(v);
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::Parse(format!("missing key `{}`", KEYS[i])));
        let hc = Self {
            am: Sym2::new(get(0)?, get(1)?, get(2)?),
            beta_m: get(3)?,
            gamma_m: get(4)?,
            diffusion: get(5)?,
        };
        hc.validate()?;
        Ok(hc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn dot_weights(mesh: &TriMesh, dofs: &DofMap, values: &[f64]) -> f64 {
    linalg::dot(&integral_weights(mesh, dofs), values)
}

/// `c_k = ∫_P φ_k dY` for each periodic DOF.
pub fn integral_weights(mesh: &TriMesh, dofs: &DofMap) -> Vec<f64> {
    let mut c = vec![0.0; dofs.n_dofs()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let third = mesh.element(t).area / 3.0;
        for &node in tri {
            c[dofs.node_to_dof[node]] += third;
        }
    }
    c
}

/// Periodic FEM matrix `K_kl = ∫ ∇φ_k·(A∇φ_l + φ_l div A) dY` (row = test).
pub fn assemble_adjoint_operator(
    mesh: &TriMesh,
    dofs: &DofMap,
    coeffs: &dyn CellCoefficients,
) -> SparseMatrix {
    let rule = QuadratureRule::triangle_3();
    let n = dofs.n_dofs();
    let entries: Vec<(usize, usize, f64)> = (0..mesh.n_triangles())
        .into_par_iter()
        .flat_map_iter(|t| {
            let el = mesh.element(t);
            let mut local = [[0.0; 3]; 3];
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let (y, phi) = el.map(*xi);
                let wq = 2.0 * el.area * w;
                let a = coeffs.a(y);
                let da = coeffs.div_a(y);
                for l in 0..3 {
                    let ag = a.apply(el.grads[l]);
                    let flux = [ag[0] + phi[l] * da[0], ag[1] + phi[l] * da[1]];
                    for k in 0..3 {
                        local[k][l] += wq * (el.grads[k][0] * flux[0] + el.grads[k][1] * flux[1]);
                    }
                }
            }
            let map = mesh.triangles[t].map(|v| dofs.node_to_dof[v]);
            (0..9).map(move |kl| (map[kl / 3], map[kl % 3], local[kl / 3][kl % 3]))
        })
        .collect();
    let mut b = TripletBuilder::with_capacity(n, n, entries.len());
    b.extend(entries);
    b.build()
}

/// Kernel of `K` normalized to `∫ m = 1`, checked to be strictly positive.
pub fn solve_density(k: &SparseMatrix, mesh: &TriMesh, dofs: &DofMap) -> Result<DensityField> {
    let c = integral_weights(mesh, dofs);
    let values = linalg::solve_constrained_nullspace(k, &c)?;
    let field = DensityField {
        mesh: mesh.clone(),
        dofs: dofs.clone(),
        values,
    };
    let (min, node) = field.min();
    if !(min > 0.0) {
        return Err(Error::Positivity { min, node });
    }
    Ok(field)
}

/// Averages `∫ A m`, `∫ β m`, `∫ γ m` with the three-point triangle rule.
pub fn homogenized_coefficients(m: &DensityField, coeffs: &dyn CellCoefficients) -> HomCoeffs {
    homogenized_coefficients_with(m, coeffs, &QuadratureRule::triangle_3())
}

pub fn homogenized_coefficients_with(
    m: &DensityField,
    coeffs: &dyn CellCoefficients,
    rule: &QuadratureRule,
) -> HomCoeffs {
    let nodal = m.nodal();
    let mut acc = [0.0f64; 5];
    for (t, tri) in m.mesh.triangles.iter().enumerate() {
        let el = m.mesh.element(t);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let (y, phi): (Point, [f64; 3]) = el.map(*xi);
            let mv: f64 = (0..3).map(|k| phi[k] * nodal[tri[k]]).sum();
            let wm = 2.0 * el.area * w * mv;
            let a = coeffs.a(y);
            acc[0] += wm * a.xx;
            acc[1] += wm * a.xy;
            acc[2] += wm * a.yy;
            acc[3] += wm * coeffs.beta(y);
            acc[4] += wm * coeffs.gamma(y);
        }
    }
    HomCoeffs {
        am: Sym2::new(acc[0], acc[1], acc[2]),
        beta_m: acc[3],
        gamma_m: acc[4],
        diffusion: coeffs.diffusion(),
    }
}

/// Result of the complete cell computation.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub density: DensityField,
    pub coeffs: HomCoeffs,
    /// `‖K m‖ / (‖K‖_F ‖m‖)`.
    pub null_residual: f64,
}

/// Meshes the reference hexagon, solves for `m` and averages the coefficients.
pub fn solve_cell_problem(a: f64, n_ref: usize, coeffs: &dyn CellCoefficients) -> Result<CellSolution> {
    let mesh = crate::mesh::triangulate_hexagon(a, n_ref)?;
    let dofs = crate::mesh::periodic_dof_map(&mesh)?;
    let k = assemble_adjoint_operator(&mesh, &dofs, coeffs);
    let density = solve_density(&k, &mesh, &dofs)?;
    let km = k.mul_vec(&density.values);
    let null_residual = linalg::norm2(&km) / (k.frobenius_norm() * linalg::norm2(&density.values));
    let coeffs = homogenized_coefficients(&density, coeffs);
    Ok(CellSolution {
        density,
        coeffs,
        null_residual,
    })
}

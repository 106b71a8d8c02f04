//! Constant-coefficient homogenized system on `Ω = [-1, 1]²`:
//!
//! ```text
//! ∂C/∂t − Am_ij ∂_i C ∂_j p = D Am_ij ∂_ij C + (β̃ − γ̃) C (1 − C)
//!        −Am_ij ∂_ij p      = (β̃ − γ̃) C + γ̃
//! ```
//!
//! Discretized with bilinear elements and backward Euler. Per step:
//! `(M + Δt(−D̃(pⁿ) + G_D − R(Cⁿ))) Cⁿ⁺¹ = M Cⁿ`, then `G pⁿ⁺¹ = (β̃ − γ̃) M Cⁿ⁺¹ + g`.
//! Dirichlet values are imposed by eliminating boundary rows and columns.

use std::time::Instant;

use crate::cell_problem::HomCoeffs;
use crate::error::Result;
use crate::fem::{Assembler, Local};
use crate::fine_solver::{step_record, SimConfig, Trajectory};
use crate::geometry::Point;
use crate::linalg::{self, LuFactorization, SparseMatrix};
use crate::mesh::quad_mesh_rect;

/// Matrices that do not change during a run.
#[derive(Debug, Clone)]
pub struct StaticOperators {
    /// `∫ φ_k φ_l` over all nodes.
    pub mass_full: SparseMatrix,
    /// `∫ ∇φ_k·(Am ∇φ_l)` over all nodes.
    pub gm_full: SparseMatrix,
    /// `D·G_m` over all nodes.
    pub gmd_full: SparseMatrix,
    /// `∫ γ̃ φ_k` over all nodes.
    pub gamma_vec_full: Vec<f64>,
    pub mass: SparseMatrix,
    pub gm: SparseMatrix,
    pub gmd: SparseMatrix,
    pub gamma_vec: Vec<f64>,
}

/// Builds `M`, `G_m`, `G_{m,D}` and the `γ̃` load vector.
pub fn assemble_static(hc: &HomCoeffs, asm: &Assembler) -> StaticOperators {
    let r = &asm.reference;
    let mass_local = asm.mass_local();
    let mass_full = asm.matrix_full(|_| mass_local);
    let mut stiff_local = [[0.0; 4]; 4];
    for q in 0..4 {
        for k in 0..4 {
            let ag = hc.am.apply(r.grad[q][k]);
            for l in 0..4 {
                stiff_local[k][l] += r.weight[q] * (ag[0] * r.grad[q][l][0] + ag[1] * r.grad[q][l][1]);
            }
        }
    }
    let gm_full = asm.matrix_full(|_| stiff_local);
    let gmd_full = gm_full.scaled(hc.diffusion);
    let mut load = [0.0; 4];
    for q in 0..4 {
        for k in 0..4 {
            load[k] += r.weight[q] * hc.gamma_m * r.phi[q][k];
        }
    }
    let gamma_vec_full = asm.vector_full(|_| load);
    StaticOperators {
        mass: asm.restrict(&mass_full),
        gm: asm.restrict(&gm_full),
        gmd: asm.restrict(&gmd_full),
        gamma_vec: asm.mesh.restrict(&gamma_vec_full),
        mass_full,
        gm_full,
        gmd_full,
        gamma_vec_full,
    }
}

/// Ordering of the pressure update inside a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepOrder {
    /// Convection from `pⁿ`, density solve, then the pressure for `Cⁿ⁺¹`.
    #[default]
    Standard,
    /// Pressure solved first, from the extrapolated density `2Cⁿ − Cⁿ⁻¹`,
    /// and used for the convection of the same step.
    PressureFirst,
}

/// Discrete homogenized problem.
pub struct HomogSolver {
    pub cfg: SimConfig,
    pub hc: HomCoeffs,
    pub asm: Assembler,
    pub ops: StaticOperators,
    pressure_lu: LuFactorization,
}

impl std::fmt::Debug for HomogSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HomogSolver")
            .field("cfg", &self.cfg)
            .field("hc", &self.hc)
            .finish_non_exhaustive()
    }
}

impl HomogSolver {
    pub fn new(hc: HomCoeffs, cfg: SimConfig) -> Result<Self> {
        cfg.validate_time()?;
        hc.validate()?;
        let asm = Assembler::new(quad_mesh_rect(cfg.h)?);
        let ops = assemble_static(&hc, &asm);
        let pressure_lu = LuFactorization::new(&ops.gm, cfg.solver.tol)?;
        Ok(Self {
            cfg,
            hc,
            asm,
            ops,
            pressure_lu,
        })
    }

    pub fn initial_field(&self) -> Vec<f64> {
        let ic = self.cfg.initial;
        self.asm.mesh.extend(&self.asm.mesh.restrict(&self.asm.mesh.interpolate(|x| ic.value(x))))
    }

    /// Solves `G_m p = (β̃ − γ̃) M C + g` with `p = 0` on the boundary.
    pub fn solve_pressure(&self, c: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = self.ops.mass.mul_vec(&self.asm.mesh.restrict(c));
        let s = self.hc.beta_m - self.hc.gamma_m;
        rhs.iter_mut().zip(&self.ops.gamma_vec).for_each(|(r, g)| *r = s * *r + g);
        Ok(self.asm.mesh.extend(&self.pressure_lu.solve(&rhs)?))
    }

    /// Pressure for an arbitrary source `f`.
    pub fn solve_pressure_with_source(&self, f: &(dyn Fn(Point) -> f64 + Sync)) -> Result<Vec<f64>> {
        let r = &self.asm.reference;
        let load = self.asm.vector_full(|e| {
            let pts = self.asm.quadrature_points(e);
            let mut v = [0.0; 4];
            for q in 0..4 {
                let fq = f(pts[q]);
                for k in 0..4 {
                    v[k] += r.weight[q] * fq * r.phi[q][k];
                }
            }
            v
        });
        Ok(self.asm.mesh.extend(&self.pressure_lu.solve(&self.asm.mesh.restrict(&load))?))
    }

    fn convection_local(&self, e: usize, p: &[f64]) -> Local {
        let r = &self.asm.reference;
        let pe = self.asm.gather(e, p);
        let mut l = [[0.0; 4]; 4];
        for q in 0..4 {
            let agp = self.hc.am.apply(r.gradient(q, &pe));
            for k in 0..4 {
                for m in 0..4 {
                    let g = r.grad[q][m];
                    l[k][m] += r.weight[q] * (g[0] * agp[0] + g[1] * agp[1]) * r.phi[q][k];
                }
            }
        }
        l
    }

    /// `D̃_kl = Σ_s p_s ∫ (∇φ_l·Am∇φ_s) φ_k` over all nodes.
    pub fn convection_full(&self, p: &[f64]) -> SparseMatrix {
        self.asm.matrix_full(|e| self.convection_local(e, p))
    }

    pub fn convection(&self, p: &[f64]) -> SparseMatrix {
        self.asm.matrix_free(|e| self.convection_local(e, p))
    }

    /// `R_kl = ∫ (β̃ − γ̃)(1 − Cⁿ) φ_k φ_l` on free nodes, 2×2 Gauss.
    pub fn reaction(&self, c: &[f64]) -> SparseMatrix {
        let r = &self.asm.reference;
        let s = self.hc.beta_m - self.hc.gamma_m;
        self.asm.matrix_free(|e| {
            let ce = self.asm.gather(e, c);
            let mut l = [[0.0; 4]; 4];
            for q in 0..4 {
                let w = r.weight[q] * s * (1.0 - r.value(q, &ce));
                for k in 0..4 {
                    for m in 0..4 {
                        l[k][m] += w * r.phi[q][k] * r.phi[q][m];
                    }
                }
            }
            l
        })
    }

    /// `M + Δt(−D̃(p) + G_D − R(C))` on free nodes.
    pub fn density_matrix(&self, c: &[f64], p: &[f64]) -> SparseMatrix {
        let dt = self.cfg.dt;
        let mut a = self.ops.mass.clone();
        a.axpy_same_pattern(-dt, &self.convection(p));
        a.axpy_same_pattern(dt, &self.ops.gmd);
        a.axpy_same_pattern(-dt, &self.reaction(c));
        a
    }

    pub fn step_density(&self, c: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let a = self.density_matrix(c, p);
        let rhs = self.ops.mass.mul_vec(&self.asm.mesh.restrict(c));
        Ok(self.asm.mesh.extend(&linalg::solve(&a, &rhs, &self.cfg.solver)?))
    }

    pub fn run(&self) -> Result<Trajectory> {
        self.run_with(self.initial_field(), StepOrder::Standard)
    }

    pub fn run_with(&self, c0: Vec<f64>, order: StepOrder) -> Result<Trajectory> {
        let record = self.cfg.record_steps();
        let mut traj = Trajectory::new(self.cfg.h);
        let clock = Instant::now();
        let mut c = c0;
        let mut p = self.solve_pressure(&c)?;
        let mut c_prev = c.clone();
        traj.steps.push(step_record(0, 0.0, &c, &p, &self.ops.mass_full, clock.elapsed().as_secs_f64()));
        traj.push(0.0, c.clone(), p.clone());
        for n in 1..=self.cfg.n_steps() {
            let clock = Instant::now();
            let drive = match order {
                StepOrder::Standard => p,
                StepOrder::PressureFirst => {
                    let extrapolated: Vec<f64> = c.iter().zip(&c_prev).map(|(a, b)| 2.0 * a - b).collect();
                    self.solve_pressure(&extrapolated)?
                }
            };
            let next = self.step_density(&c, &drive)?;
            c_prev = std::mem::replace(&mut c, next);
            p = self.solve_pressure(&c)?;
            let t = n as f64 * self.cfg.dt;
            traj.steps.push(step_record(n, t, &c, &p, &self.ops.mass_full, clock.elapsed().as_secs_f64()));
            if record.contains(&n) {
                traj.push(t, c.clone(), p.clone());
            }
        }
        Ok(traj)
    }
}

/// Builds the homogenized solver and runs the standard loop.
pub fn run_homog(hc: HomCoeffs, cfg: SimConfig) -> Result<Trajectory> {
    HomogSolver::new(hc, cfg)?.run()
}

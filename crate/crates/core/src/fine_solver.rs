//! Heterogeneous periodic model on `Ω = [-1, 1]²`:
//!
//! ```text
//! ∂C/∂t − A^ε_ij ∂_i(C ∂_j p) = A^ε_ij ∂_i(D ∂_j C) + β^ε C
//!        −A^ε_ij ∂_ij p       = (β^ε − γ^ε) C + γ^ε
//! ```
//!
//! with `C = p = 0` on `∂Ω` and `A^ε(X) = A(X/ε)`. Both equations are put in
//! weak form with one integration by parts, moving `A` onto the test
//! function: `∫ A_ij ∂_i f_j φ = −∫ f_j (A_ij ∂_i φ + (∂_i A_ij) φ)`. The
//! derivative of `A` is taken analytically inside each region (factor
//! `1/ε`), without interface terms. Bilinear elements, 2×2 Gauss quadrature,
//! backward Euler in time with the convection frozen at `pⁿ`.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fem::{Assembler, Local};
use crate::geometry::{wrap_to_cell, CellCoefficients, Point, Sym2};
use crate::linalg::{self, LuFactorization, SolverOptions, SparseMatrix};
use crate::mesh::quad_mesh_rect;

/// Initial abnormal-cell density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// `amplitude · exp(−|X|²/width)`.
    Gaussian { amplitude: f64, width: f64 },
    Zero,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self::Gaussian {
            amplitude: 0.9,
            width: 0.1,
        }
    }
}

impl InitialCondition {
    pub fn value(&self, x: Point) -> f64 {
        match *self {
            Self::Gaussian { amplitude, width } => amplitude * (-(x[0] * x[0] + x[1] * x[1]) / width).exp(),
            Self::Zero => 0.0,
        }
    }
}

/// The default initial density `0.9·exp(−(X1² + X2²)/0.1)`, before the
/// boundary projection.
pub fn initial_density(x: Point) -> f64 {
    InitialCondition::default().value(x)
}

/// Time-stepping and discretization parameters shared by both solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub eps: f64,
    pub h: f64,
    pub dt: f64,
    pub t_final: f64,
    pub output_times: Vec<f64>,
    pub solver: SolverOptions,
    pub initial: InitialCondition,
    /// Physical position of a lattice centre; coefficients are sampled at
    /// `(X − offset)/ε`.
    pub lattice_offset: Point,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            eps: 0.4,
            h: 5e-3,
            dt: 5e-3,
            t_final: 0.05,
            output_times: vec![0.01, 0.03, 0.05],
            solver: SolverOptions::default(),
            initial: InitialCondition::default(),
            lattice_offset: [0.0, 0.0],
        }
    }
}

fn steps_for(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    ((t / dt - k).abs() <= 1e-9 * k.max(1.0)).then_some(k as usize)
}

impl SimConfig {
    pub fn with_scale(eps: f64, h: f64) -> Self {
        Self {
            eps,
            h,
            ..Default::default()
        }
    }

    pub fn n_steps(&self) -> usize {
        steps_for(self.t_final, self.dt).unwrap_or(0)
    }

    /// Checks everything except the cell-resolution rule.
    pub fn validate_time(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("time step dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("final time T = {} must be non-negative", self.t_final)));
        }
        if steps_for(self.t_final, self.dt).is_none() {
            return Err(Error::Config(format!("T = {} is not a multiple of dt = {}", self.t_final, self.dt)));
        }
        for w in self.output_times.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config("output times must be strictly increasing".into()));
            }
        }
        for &t in &self.output_times {
            if !(t > 0.0 && t <= self.t_final * (1.0 + 1e-12)) {
                return Err(Error::Config(format!("output time {t} must lie in (0, T = {}]", self.t_final)));
            }
            if steps_for(t, self.dt).is_none() {
                return Err(Error::Config(format!("output time {t} is not a multiple of dt = {}", self.dt)));
            }
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        quad_mesh_rect(self.h).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Full check for the fine-scale solver with hexagon edge `a`.
    pub fn validate_fine(&self, a: f64) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("scale eps = {} must be positive", self.eps)));
        }
        let limit = self.eps * a / 4.0;
        if self.h > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "h = {} exceeds eps*a/4 = {limit:.6}: each scaled crypt must be resolved by at least four elements across its edge",
                self.h
            )));
        }
        self.validate_time()
    }

    /// Step indices at which fields are recorded, starting with 0.
    pub fn record_steps(&self) -> Vec<usize> {
        let mut v = vec![0];
        v.extend(self.output_times.iter().filter_map(|&t| steps_for(t, self.dt)));
        v.dedup();
        v
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// `Σ_kl M_kl C_l`, the discrete integral of `C`.
    pub mass: f64,
    pub p_max_abs: f64,
    /// Wall-clock seconds spent on this step.
    pub seconds: f64,
}

/// Recorded `(t, C, p)` triples on the quadrilateral mesh, nodal values
/// including the zero boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            times: Vec::new(),
            c: Vec::new(),
            p: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the record at time `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1e-3))
    }

    pub fn push(&mut self, t: f64, c: Vec<f64>, p: Vec<f64>) {
        self.times.push(t);
        self.c.push(c);
        self.p.push(p);
    }

    /// Mean wall-clock seconds per time step, excluding the initial solve.
    pub fn mean_step_seconds(&self) -> f64 {
        let s: Vec<f64> = self.steps.iter().filter(|r| r.step > 0).map(|r| r.seconds).collect();
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    }
}

pub(crate) fn step_record(step: usize, time: f64, c: &[f64], p: &[f64], mass: &SparseMatrix, seconds: f64) -> StepRecord {
    StepRecord {
        step,
        time,
        c_min: c.iter().copied().fold(f64::INFINITY, f64::min),
        c_max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mass: mass.mul_vec(c).iter().sum(),
        p_max_abs: p.iter().fold(0.0, |m, v| f64::max(m, v.abs())),
        seconds,
    }
}

#[derive(Debug, Clone, Copy)]
struct QpCoeff {
    a: Sym2,
    /// `Σ_i ∂A_ij/∂X_i`, already scaled by `1/ε`.
    div_a: [f64; 2],
    beta: f64,
    gamma: f64,
}

/// Discrete fine-scale problem with all coefficient-only matrices prebuilt.
pub struct FineSolver {
    pub cfg: SimConfig,
    pub asm: Assembler,
    coeff: Vec<[QpCoeff; 4]>,
    cell_index: Vec<[[i64; 2]; 4]>,
    diffusion: f64,
    mass_full: SparseMatrix,
    mass: SparseMatrix,
    /// `∫ (A∇φ_k)·∇φ_l + (div A·∇φ_l) φ_k`, free rows and columns.
    stiffness: SparseMatrix,
    /// `∫ (β − γ) φ_k φ_l` on free nodes.
    source_matrix: SparseMatrix,
    /// `∫ γ φ_k` on free nodes.
    gamma_vec: Vec<f64>,
    /// `M + Δt (D·K − ∫ β φφ)` on free nodes.
    density_static: SparseMatrix,
    pressure_lu: LuFactorization,
}

impl std::fmt::Debug for FineSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FineSolver").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl FineSolver {
    /// `a` is the hexagon edge of the reference cell the coefficients live on.
    pub fn new(coeffs: &dyn CellCoefficients, a: f64, cfg: SimConfig) -> Result<Self> {
        cfg.validate_fine(a)?;
        let asm = Assembler::new(quad_mesh_rect(cfg.h)?);
        let eps = cfg.eps;
        let offset = cfg.lattice_offset;
        let mut coeff = Vec::with_capacity(asm.n_elements());
        let mut cell_index = Vec::with_capacity(asm.n_elements());
        for e in 0..asm.n_elements() {
            let pts = asm.quadrature_points(e);
            let mut cq = [QpCoeff {
                a: Sym2::zero(),
                div_a: [0.0; 2],
                beta: 0.0,
                gamma: 0.0,
            }; 4];
            let mut idx = [[0i64; 2]; 4];
            for q in 0..4 {
                let (y, cell) = wrap_to_cell([pts[q][0] - offset[0], pts[q][1] - offset[1]], eps, a);
                let d = coeffs.div_a(y);
                cq[q] = QpCoeff {
                    a: coeffs.a(y),
                    div_a: [d[0] / eps, d[1] / eps],
                    beta: coeffs.beta(y),
                    gamma: coeffs.gamma(y),
                };
                idx[q] = cell;
            }
            coeff.push(cq);
            cell_index.push(idx);
        }
        let r = asm.reference.clone();
        let mass_local = asm.mass_local();
        let mass_full = asm.matrix_full(|_| mass_local);
        let mass = asm.restrict(&mass_full);
        let stiffness = asm.matrix_free(|e| {
            let mut l = [[0.0; 4]; 4];
            for q in 0..4 {
                let c = &coeff[e][q];
                for k in 0..4 {
                    let ag = c.a.apply(r.grad[q][k]);
                    for m in 0..4 {
                        let g = r.grad[q][m];
                        l[k][m] += r.weight[q]
                            * (ag[0] * g[0] + ag[1] * g[1] + (c.div_a[0] * g[0] + c.div_a[1] * g[1]) * r.phi[q][k]);
                    }
                }
            }
            l
        });
        let weighted_mass = |f: &(dyn Fn(&QpCoeff) -> f64 + Sync)| {
            asm.matrix_free(|e| {
                let mut l = [[0.0; 4]; 4];
                for q in 0..4 {
                    let s = r.weight[q] * f(&coeff[e][q]);
                    for k in 0..4 {
                        for m in 0..4 {
                            l[k][m] += s * r.phi[q][k] * r.phi[q][m];
                        }
                    }
                }
                l
            })
        };
        let source_matrix = weighted_mass(&|c| c.beta - c.gamma);
        let beta_matrix = weighted_mass(&|c| c.beta);
        let gamma_full = asm.vector_full(|e| {
            let mut v = [0.0; 4];
            for q in 0..4 {
                for k in 0..4 {
                    v[k] += r.weight[q] * coeff[e][q].gamma * r.phi[q][k];
                }
            }
            v
        });
        let gamma_vec = asm.mesh.restrict(&gamma_full);
        let diffusion = coeffs.diffusion();
        let mut density_static = mass.clone();
        density_static.axpy_same_pattern(cfg.dt * diffusion, &stiffness);
        density_static.axpy_same_pattern(-cfg.dt, &beta_matrix);
        let pressure_lu = LuFactorization::new(&stiffness, cfg.solver.tol)?;
        Ok(Self {
            cfg,
            asm,
            coeff,
            cell_index,
            diffusion,
            mass_full,
            mass,
            stiffness,
            source_matrix,
            gamma_vec,
            density_static,
            pressure_lu,
        })
    }

    pub fn mass_full(&self) -> &SparseMatrix {
        &self.mass_full
    }

    /// Pressure operator on free nodes.
    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    /// Nodal initial density with the boundary set to zero.
    pub fn initial_field(&self) -> Vec<f64> {
        let ic = self.cfg.initial;
        self.asm.mesh.extend(&self.asm.mesh.restrict(&self.asm.mesh.interpolate(|x| ic.value(x))))
    }

    /// Crypt count inside `Ω` with clipped cells counted by area fraction,
    /// and the number of distinct cells touched.
    pub fn crypt_count(&self) -> (f64, usize) {
        let eps2 = self.cfg.eps * self.cfg.eps;
        let mut area: HashMap<[i64; 2], f64> = HashMap::new();
        for (e, idx) in self.cell_index.iter().enumerate() {
            let _ = e;
            for q in 0..4 {
                *area.entry(idx[q]).or_default() += self.asm.reference.weight[q];
            }
        }
        let total: f64 = area.values().map(|a| a / eps2).sum();
        (total, area.len())
    }

    /// Solves the pressure equation for the nodal density `c`.
    pub fn solve_pressure(&self, c: &[f64]) -> Result<Vec<f64>> {
        let c_free = self.asm.mesh.restrict(c);
        let mut rhs = self.source_matrix.mul_vec(&c_free);
        rhs.iter_mut().zip(&self.gamma_vec).for_each(|(r, g)| *r += g);
        Ok(self.asm.mesh.extend(&self.pressure_lu.solve(&rhs)?))
    }

    /// Pressure for an arbitrary source `f` in place of `(β − γ)C + γ`.
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

    /// `Conv_kl = ∫ φ_l ∇p·(A∇φ_k + div A φ_k)` on free nodes.
    pub fn convection(&self, p: &[f64]) -> SparseMatrix {
        let r = &self.asm.reference;
        self.asm.matrix_free(|e| {
            let pe = self.asm.gather(e, p);
            let mut l: Local = [[0.0; 4]; 4];
            for q in 0..4 {
                let c = &self.coeff[e][q];
                let gp = r.gradient(q, &pe);
                let agp = c.a.apply(gp);
                let dp = c.div_a[0] * gp[0] + c.div_a[1] * gp[1];
                for k in 0..4 {
                    let g = r.grad[q][k];
                    let test = agp[0] * g[0] + agp[1] * g[1] + dp * r.phi[q][k];
                    for m in 0..4 {
                        l[k][m] += r.weight[q] * test * r.phi[q][m];
                    }
                }
            }
            l
        })
    }

    /// System matrix of the density step for the frozen pressure `p`.
    pub fn density_matrix(&self, p: &[f64]) -> SparseMatrix {
        let mut a = self.density_static.clone();
        a.axpy_same_pattern(self.cfg.dt, &self.convection(p));
        a
    }

    /// One backward-Euler step of the density equation.
    pub fn step_density(&self, c: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let a = self.density_matrix(p);
        let rhs = self.mass.mul_vec(&self.asm.mesh.restrict(c));
        Ok(self.asm.mesh.extend(&linalg::solve(&a, &rhs, &self.cfg.solver)?))
    }

    /// Full time loop from the configured initial density.
    pub fn run(&self) -> Result<Trajectory> {
        self.run_from(self.initial_field())
    }

    pub fn run_from(&self, c0: Vec<f64>) -> Result<Trajectory> {
        let record = self.cfg.record_steps();
        let mut traj = Trajectory::new(self.cfg.h);
        let clock = Instant::now();
        let mut c = c0;
        let mut p = self.solve_pressure(&c)?;
        traj.steps.push(step_record(0, 0.0, &c, &p, &self.mass_full, clock.elapsed().as_secs_f64()));
        traj.push(0.0, c.clone(), p.clone());
        for n in 1..=self.cfg.n_steps() {
            let clock = Instant::now();
            c = self.step_density(&c, &p)?;
            p = self.solve_pressure(&c)?;
            let t = n as f64 * self.cfg.dt;
            traj.steps.push(step_record(n, t, &c, &p, &self.mass_full, clock.elapsed().as_secs_f64()));
            if record.contains(&n) {
                traj.push(t, c.clone(), p.clone());
            }
            log::debug!("fine step {n}: t = {t:.4}, C in [{:.3e}, {:.3e}]", traj.steps[n].c_min, traj.steps[n].c_max);
        }
        Ok(traj)
    }
}

/// Builds the fine solver and runs it.
pub fn run_fine(coeffs: &dyn CellCoefficients, a: f64, cfg: SimConfig) -> Result<Trajectory> {
    FineSolver::new(coeffs, a, cfg)?.run()
}

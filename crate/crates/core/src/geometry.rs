//! Crypt geometry, the projection of the 3D crypt surface onto the reference
//! hexagon, and the piecewise coefficient functions defined on that hexagon.
//!
//! Conventions used everywhere in the crate:
//!
//! * The reference hexagon `P` is centred at the origin, flat-top, with two
//!   vertices on the first axis at `(±a, 0)`. Its area is 1.
//! * The periodic lattice is spanned by `(3a/2, √3a/2)` and `(0, √3a)`.
//! * Region `P3` is the open disc `‖Y‖ < r`, `P2` the closed annulus
//!   `r ≤ ‖Y‖ ≤ R`, and `P1` the rest of the closed hexagon.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Slack used when testing whether a point lies in the closed hexagon or on
/// the crypt surface, relative to the hexagon edge.
const GEOM_TOL: f64 = 1e-9;

/// Symmetric 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl std::ops::Add for Sym2 {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self::new(self.xx + other.xx, self.xy + other.xy, self.yy + other.yy)
    }
}

impl Sym2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::new(c * self.xx, c * self.xy, c * self.yy)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// `uᵀ A v`
    pub fn bilinear(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        let av = self.apply(v);
        u[0] * av[0] + u[1] * av[1]
    }

    pub fn quad_form(&self, xi: [f64; 2]) -> f64 {
        self.bilinear(xi, xi)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * self.trace();
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        (mean - rad, mean + rad)
    }

    /// `Q A Qᵀ` for the rotation `Q` by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        // columns of A Qᵀ
        let a11 = self.xx * c - self.xy * s;
        let a12 = self.xx * s + self.xy * c;
        let a21 = self.xy * c - self.yy * s;
        let a22 = self.xy * s + self.yy * c;
        Self::new(
            c * a11 - s * a21,
            c * a12 - s * a22,
            s * a12 + c * a22,
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.xx - other.xx)
            .abs()
            .max((self.xy - other.xy).abs())
            .max((self.yy - other.yy).abs())
    }
}

/// Rotates a point by `theta` about the origin.
pub fn rotate(p: Point, theta: f64) -> Point {
    let (s, c) = theta.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

/// Which part of the crypt a point of the reference hexagon came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionTag {
    /// Inter-cryptal collar around the orifice (image of the top surface).
    P1,
    /// Annulus `r ≤ ‖Y‖ ≤ R` (image of the lateral wall).
    P2,
    /// Disc `‖Y‖ < r` (image of the crypt bottom).
    P3,
}

/// Dimensions of one crypt and its hexagonal neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CryptGeometry {
    /// Hexagon edge length.
    pub a: f64,
    /// Radius of the projected crypt bottom.
    pub r: f64,
    /// Crypt orifice radius.
    pub big_r: f64,
    /// Crypt height.
    pub l: f64,
}

impl Default for CryptGeometry {
    fn default() -> Self {
        let a = Self::unit_area_edge();
        Self {
            a,
            r: a / 4.0,
            big_r: a / 2.0,
            l: 14.0 * a,
        }
    }
}

impl CryptGeometry {
    /// Edge of the regular hexagon of unit area, `√2 / 3^(3/4)`.
    pub fn unit_area_edge() -> f64 {
        2f64.sqrt() / 3f64.powf(0.75)
    }

    pub fn new(r: f64, big_r: f64, l: f64) -> Result<Self> {
        Self::with_edge(Self::unit_area_edge(), r, big_r, l)
    }

    pub fn with_edge(a: f64, r: f64, big_r: f64, l: f64) -> Result<Self> {
        let g = Self { a, r, big_r, l };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Parameter(format!("hexagon edge a = {} must be positive", self.a)));
        }
        if (self.hexagon_area() - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "hexagon area (3√3/2)a² = {} must equal 1 (a = {})",
                self.hexagon_area(),
                self.a
            )));
        }
        if !(self.r > 0.0 && self.r < self.big_r) {
            return Err(Error::Parameter(format!(
                "need 0 < r < R, got r = {}, R = {}",
                self.r, self.big_r
            )));
        }
        if self.big_r >= self.inradius() {
            return Err(Error::Parameter(format!(
                "orifice radius R = {} must be below the hexagon inradius {}",
                self.big_r,
                self.inradius()
            )));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::Parameter(format!("crypt height L = {} must be positive", self.l)));
        }
        Ok(())
    }

    pub fn hexagon_area(&self) -> f64 {
        1.5 * SQRT3 * self.a * self.a
    }

    pub fn inradius(&self) -> f64 {
        0.5 * SQRT3 * self.a
    }

    /// The two lattice basis vectors of the unit-scale periodic tiling.
    pub fn lattice_basis(&self) -> [Point; 2] {
        [[1.5 * self.a, 0.5 * SQRT3 * self.a], [0.0, SQRT3 * self.a]]
    }

    /// Vertices in counter-clockwise order starting at `(a, 0)`.
    pub fn hexagon_vertices(&self) -> [Point; 6] {
        let mut v = [[0.0; 2]; 6];
        for (k, vk) in v.iter_mut().enumerate() {
            let t = k as f64 * PI / 3.0;
            *vk = [self.a * t.cos(), self.a * t.sin()];
        }
        v
    }

    /// Closed-hexagon membership with a small relative slack.
    pub fn in_hexagon(&self, x: Point) -> bool {
        let tol = GEOM_TOL * self.a;
        let (ax, ay) = (x[0].abs(), x[1].abs());
        ay <= self.inradius() + tol && SQRT3 * ax + ay <= SQRT3 * self.a + 2.0 * tol
    }

    fn check_in_hexagon(&self, x: Point) -> Result<()> {
        if self.in_hexagon(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point ({}, {}) lies outside the reference hexagon",
                x[0], x[1]
            )))
        }
    }

    /// Maps a point of the crypt surface `S = S1 ∪ S2 ∪ S3` to the plane.
    pub fn project_to_plane(&self, p: [f64; 3]) -> Result<Point> {
        let tol = GEOM_TOL * self.l.max(self.a);
        let rho = p[0].hypot(p[1]);
        let on_wall = (rho - self.big_r).abs() <= tol;
        if (p[2] - self.l).abs() <= tol && rho > self.big_r + tol {
            // S1: top collar, identity
            let x = [p[0], p[1]];
            self.check_in_hexagon(x)?;
            return Ok(x);
        }
        if on_wall && p[2] > tol && p[2] <= self.l + tol {
            // S2: lateral wall
            let f = (self.r + p[2] / self.l * (self.big_r - self.r)) / self.big_r;
            return Ok([f * p[0], f * p[1]]);
        }
        if p[2].abs() <= tol && rho <= self.big_r + tol {
            // S3: bottom
            let f = self.r / self.big_r;
            return Ok([f * p[0], f * p[1]]);
        }
        Err(Error::Domain(format!(
            "point ({}, {}, {}) is not on the crypt surface",
            p[0], p[1], p[2]
        )))
    }

    pub fn region_of(&self, x: Point) -> Result<RegionTag> {
        self.check_in_hexagon(x)?;
        Ok(self.region_unchecked(norm(x)))
    }

    fn region_unchecked(&self, rho: f64) -> RegionTag {
        if rho < self.r {
            RegionTag::P3
        } else if rho <= self.big_r {
            RegionTag::P2
        } else {
            RegionTag::P1
        }
    }

    /// Height `x3` of the crypt point that projects onto `x`.
    pub fn crypt_height_at(&self, x: Point) -> Result<f64> {
        self.check_in_hexagon(x)?;
        Ok(self.height_unchecked(norm(x)))
    }

    fn height_unchecked(&self, rho: f64) -> f64 {
        match self.region_unchecked(rho) {
            RegionTag::P1 => self.l,
            RegionTag::P2 => self.l * (rho - self.r) / (self.big_r - self.r),
            RegionTag::P3 => 0.0,
        }
    }

    /// Lower bound `(r/R)²` of `ξᵀAξ / |ξ|²` over the hexagon.
    pub fn ellipticity_bound(&self) -> f64 {
        let q = self.r / self.big_r;
        q * q
    }

    /// `((R − r)/L)²`, the weight of the radial rank-one term in `P2`.
    fn wall_slope_sq(&self) -> f64 {
        let s = (self.big_r - self.r) / self.l;
        s * s
    }

    /// Diffusion-like coefficient matrix `A(Y)`.
    pub fn coeff_a(&self, x: Point) -> Result<Sym2> {
        self.check_in_hexagon(x)?;
        Ok(self.a_unchecked(x))
    }

    fn a_unchecked(&self, x: Point) -> Sym2 {
        let rho2 = x[0] * x[0] + x[1] * x[1];
        match self.region_unchecked(rho2.sqrt()) {
            RegionTag::P1 => Sym2::identity(),
            RegionTag::P3 => Sym2::identity().scaled(self.ellipticity_bound()),
            RegionTag::P2 => {
                let iso = rho2 / (self.big_r * self.big_r);
                let k = self.wall_slope_sq() / rho2;
                Sym2::new(
                    iso + k * x[0] * x[0],
                    k * x[0] * x[1],
                    iso + k * x[1] * x[1],
                )
            }
        }
    }

    /// Row divergence `Σ_i ∂A_ij/∂Y_i` (equal to the column divergence since
    /// `A` is symmetric). Zero in `P1` and `P3`; no interface distributions.
    fn div_a_unchecked(&self, x: Point) -> [f64; 2] {
        let rho2 = x[0] * x[0] + x[1] * x[1];
        match self.region_unchecked(rho2.sqrt()) {
            RegionTag::P2 => {
                let f = 2.0 / (self.big_r * self.big_r) + self.wall_slope_sq() / rho2;
                [f * x[0], f * x[1]]
            }
            _ => [0.0, 0.0],
        }
    }
}

/// Proliferation and diffusion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionParams {
    pub tau_gamma: f64,
    pub tau_beta1: f64,
    pub beta2: f64,
    /// Common diffusion coefficient of both cell populations.
    pub diffusion: f64,
}

impl Default for ReactionParams {
    fn default() -> Self {
        Self {
            tau_gamma: 0.01,
            tau_beta1: 0.01,
            beta2: 0.1,
            diffusion: 0.1,
        }
    }
}

impl ReactionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_gamma >= 0.0 && self.tau_beta1 >= self.tau_gamma && self.beta2 >= 0.0) {
            return Err(Error::Parameter(format!(
                "need 0 ≤ τ_γ ≤ τ_β1 and β2 ≥ 0 so that 0 ≤ γ ≤ β (got τ_γ = {}, τ_β1 = {}, β2 = {})",
                self.tau_gamma, self.tau_beta1, self.beta2
            )));
        }
        if !(self.diffusion > 0.0) {
            return Err(Error::Parameter(format!("diffusion D = {} must be positive", self.diffusion)));
        }
        Ok(())
    }
}

/// Coefficients on the reference cell, evaluated pointwise.
///
/// Implementations may assume `y` lies in the closed reference hexagon.
pub trait CellCoefficients: Sync {
    fn a(&self, y: Point) -> Sym2;
    /// `Σ_i ∂A_ij/∂Y_i` for `j = 1, 2`.
    fn div_a(&self, y: Point) -> [f64; 2];
    fn gamma(&self, y: Point) -> f64;
    fn beta(&self, y: Point) -> f64;
    fn diffusion(&self) -> f64;
    /// Coupling coefficient of `∇C` in the pressure equation. Always zero here.
    fn e(&self, _y: Point) -> f64 {
        0.0
    }
}

/// The crypt coefficients: `A*`, `γ*`, `β*` and the constant `D`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoefficientField {
    pub geometry: CryptGeometry,
    pub reaction: ReactionParams,
}

impl CoefficientField {
    pub fn new(geometry: CryptGeometry, reaction: ReactionParams) -> Result<Self> {
        geometry.validate()?;
        reaction.validate()?;
        Ok(Self { geometry, reaction })
    }

    pub fn coeff_a(&self, x: Point) -> Result<Sym2> {
        self.geometry.coeff_a(x)
    }

    pub fn coeff_gamma(&self, x: Point) -> Result<f64> {
        Ok(self.gamma_of_height(self.geometry.crypt_height_at(x)?))
    }

    pub fn coeff_beta(&self, x: Point) -> Result<f64> {
        Ok(self.beta_of_height(self.geometry.crypt_height_at(x)?))
    }

    fn cutoff_offset(&self, x3: f64) -> Option<f64> {
        let cutoff = 2.0 * self.geometry.l / 3.0;
        (x3 <= cutoff).then_some(x3 - cutoff)
    }

    pub fn gamma_of_height(&self, x3: f64) -> f64 {
        self.cutoff_offset(x3)
            .map_or(0.0, |d| self.reaction.tau_gamma * d * d)
    }

    pub fn beta_of_height(&self, x3: f64) -> f64 {
        self.cutoff_offset(x3)
            .map_or(0.0, |d| self.reaction.tau_beta1 * d * d)
            + self.reaction.beta2
    }
}

impl CellCoefficients for CoefficientField {
    fn a(&self, y: Point) -> Sym2 {
        self.geometry.a_unchecked(y)
    }

    fn div_a(&self, y: Point) -> [f64; 2] {
        self.geometry.div_a_unchecked(y)
    }

    fn gamma(&self, y: Point) -> f64 {
        self.gamma_of_height(self.geometry.height_unchecked(norm(y)))
    }

    fn beta(&self, y: Point) -> f64 {
        self.beta_of_height(self.geometry.height_unchecked(norm(y)))
    }

    fn diffusion(&self) -> f64 {
        self.reaction.diffusion
    }
}

/// Spatially constant coefficients, used for overrides and oracle problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformCoefficients {
    pub a: Sym2,
    pub beta: f64,
    pub gamma: f64,
    pub diffusion: f64,
}

impl UniformCoefficients {
    pub fn identity() -> Self {
        Self {
            a: Sym2::identity(),
            beta: 0.0,
            gamma: 0.0,
            diffusion: 1.0,
        }
    }
}

impl CellCoefficients for UniformCoefficients {
    fn a(&self, _y: Point) -> Sym2 {
        self.a
    }

    fn div_a(&self, _y: Point) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn gamma(&self, _y: Point) -> f64 {
        self.gamma
    }

    fn beta(&self, _y: Point) -> f64 {
        self.beta
    }

    fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

/// Reduces `x` to the fundamental hexagon of the `eps`-scaled lattice.
///
/// Returns the local coordinate `Y = x/eps − i·b1 − j·b2` (in unit-cell
/// units) and the lattice index `(i, j)` of the containing cell. Uses axial
/// hex coordinates with cube rounding.
pub fn wrap_to_cell(x: Point, eps: f64, a: f64) -> (Point, [i64; 2]) {
    let (px, py) = (x[0] / eps, x[1] / eps);
    let q = (2.0 / 3.0) * px / a;
    let r = (-px / 3.0 + py / SQRT3) / a;
    let s = -q - r;
    let (mut qi, mut ri, si) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((qi - q).abs(), (ri - r).abs(), (si - s).abs());
    if dq > dr && dq > ds {
        qi = -ri - si;
    } else if dr > ds {
        ri = -qi - si;
    }
    let y = [px - 1.5 * a * qi, py - 0.5 * SQRT3 * a * qi - SQRT3 * a * ri];
    (y, [qi as i64, ri as i64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geo() -> CryptGeometry {
        CryptGeometry::default()
    }

    fn random_in_hexagon(g: &CryptGeometry, rng: &mut impl Rng) -> Point {
        loop {
            let p = [rng.gen_range(-g.a..g.a), rng.gen_range(-g.a..g.a)];
            if g.in_hexagon(p) {
                return p;
            }
        }
    }

    #[test]
    fn default_geometry_values() {
        let g = geo();
        assert_abs_diff_eq!(g.hexagon_area(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.a, (2.0 / (3.0 * 3f64.sqrt())).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(g.a, 0.620_403_239_4, epsilon = 1e-10);
        assert_abs_diff_eq!(g.l, 8.685_645, epsilon = 1e-6);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn geometry_rejects_bad_radii() {
        let a = CryptGeometry::unit_area_edge();
        assert!(CryptGeometry::new(0.9, a / 2.0, 14.0 * a).is_err());
        assert!(CryptGeometry::new(a / 4.0, 0.6, 14.0 * a).is_err());
        assert!(CryptGeometry::with_edge(0.5, 0.1, 0.2, 1.0).is_err());
    }

    #[test]
    fn projection_branches() {
        let g = geo();
        let p = g.project_to_plane([0.5, 0.0, g.l]).unwrap();
        assert_eq!(p, [0.5, 0.0]);
        let p = g.project_to_plane([g.big_r, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g.big_r, 0.310_201, epsilon = 1e-6);
        assert_abs_diff_eq!(p[0], 0.155_101, epsilon = 1e-6);
        assert_abs_diff_eq!(p[1], 0.0);
        let p = g.project_to_plane([g.big_r, 0.0, g.l]).unwrap();
        assert_abs_diff_eq!(p[0], g.big_r, epsilon = 1e-15);
    }

    #[test]
    fn projection_rejects_points_off_surface() {
        let g = geo();
        assert!(g.project_to_plane([0.0, 0.0, 1.0]).is_err());
        assert!(g.project_to_plane([0.55, 0.55, g.l]).is_err());
        assert!(g.project_to_plane([0.1, 0.0, g.l]).is_err());
    }

    #[test]
    fn projection_seams_are_continuous() {
        let g = geo();
        for k in 0..12 {
            let t = k as f64 * PI / 6.0 + 0.1;
            let top = [g.big_r * t.cos(), g.big_r * t.sin()];
            let wall_top = g.project_to_plane([top[0], top[1], g.l]).unwrap();
            assert_abs_diff_eq!(norm(wall_top), g.big_r, epsilon = 1e-14);
            let wall_bottom = g.project_to_plane([top[0], top[1], 1e-13]).unwrap();
            let bottom = g.project_to_plane([top[0], top[1], 0.0]).unwrap();
            assert_abs_diff_eq!(norm(bottom), g.r, epsilon = 1e-14);
            assert_abs_diff_eq!(wall_bottom[0], bottom[0], epsilon = 1e-12);
            assert_abs_diff_eq!(wall_bottom[1], bottom[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn regions() {
        let g = geo();
        assert_eq!(g.region_of([0.0, 0.0]).unwrap(), RegionTag::P3);
        assert_eq!(g.region_of([0.2, 0.0]).unwrap(), RegionTag::P2);
        assert_eq!(g.region_of([0.5, 0.0]).unwrap(), RegionTag::P1);
        assert_eq!(g.region_of([g.r, 0.0]).unwrap(), RegionTag::P2);
        assert_eq!(g.region_of([0.0, g.big_r]).unwrap(), RegionTag::P2);
        assert!(g.region_of([0.6, 0.3]).is_err());
        assert!(g.region_of([0.0, 0.54]).is_err());
    }

    #[test]
    fn heights() {
        let g = geo();
        assert_eq!(g.crypt_height_at([0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(g.crypt_height_at([0.4, 0.1]).unwrap(), 8.685_645, epsilon = 1e-6);
        let mid = 0.5 * (g.r + g.big_r);
        assert_abs_diff_eq!(g.crypt_height_at([0.0, mid]).unwrap(), g.l / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn coefficient_matrix_values() {
        let g = geo();
        assert_eq!(g.coeff_a([0.45, 0.0]).unwrap(), Sym2::identity());
        let a3 = g.coeff_a([0.05, 0.02]).unwrap();
        assert_abs_diff_eq!(a3.xx, 0.25);
        assert_abs_diff_eq!(a3.yy, 0.25);
        assert_abs_diff_eq!(a3.xy, 0.0);
        let a2 = g.coeff_a([g.big_r, 0.0]).unwrap();
        assert_abs_diff_eq!(a2.xx, 1.0 + (1.0f64 / 56.0).powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(a2.xx, 1.000_319, epsilon = 1e-6);
        assert_abs_diff_eq!(a2.xy, 0.0);
        assert_abs_diff_eq!(a2.yy, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn proliferation_rates() {
        let f = CoefficientField::default();
        assert_eq!(f.coeff_gamma([0.45, 0.1]).unwrap(), 0.0);
        assert_abs_diff_eq!(f.coeff_beta([0.45, 0.1]).unwrap(), 0.1);
        let l = f.geometry.l;
        let g0 = f.coeff_gamma([0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g0, 0.01 * (2.0 * l / 3.0).powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(g0, 0.335_291, epsilon = 1e-6);
        assert_abs_diff_eq!(f.coeff_beta([0.0, 0.0]).unwrap(), 0.435_291, epsilon = 1e-6);
        let a = f.geometry.a;
        let cutoff = [5.0 * a / 12.0, 0.0];
        assert_abs_diff_eq!(cutoff[0], 0.258_501, epsilon = 1e-6);
        assert_abs_diff_eq!(f.coeff_gamma(cutoff).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.coeff_beta(cutoff).unwrap(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rates_continuous_across_circles() {
        let f = CoefficientField::default();
        let g = f.geometry;
        for k in 0..24 {
            let t = k as f64 * PI / 12.0;
            for rad in [g.r, g.big_r] {
                let inner = [(rad - 1e-13) * t.cos(), (rad - 1e-13) * t.sin()];
                let outer = [(rad + 1e-13) * t.cos(), (rad + 1e-13) * t.sin()];
                assert!((f.gamma(inner) - f.gamma(outer)).abs() < 1e-12);
                assert!((f.beta(inner) - f.beta(outer)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ellipticity_monte_carlo() {
        let g = geo();
        assert_abs_diff_eq!(g.ellipticity_bound(), 0.25);
        let g4 = CryptGeometry::new(g.big_r / 4.0, g.big_r, g.l).unwrap();
        assert_abs_diff_eq!(g4.ellipticity_bound(), 0.0625);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eta = g.ellipticity_bound();
        let mut min_ratio = f64::INFINITY;
        for _ in 0..10_000 {
            let x = random_in_hexagon(&g, &mut rng);
            let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n2 = xi[0] * xi[0] + xi[1] * xi[1];
            if n2 == 0.0 {
                continue;
            }
            min_ratio = min_ratio.min(g.coeff_a(x).unwrap().quad_form(xi) / n2);
        }
        assert!(min_ratio >= eta - 1e-12, "min ratio {min_ratio}");
    }

    #[test]
    fn coefficient_matrix_rotation_covariance() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let x = random_in_hexagon(&g, &mut rng);
            let q = PI / 3.0;
            let lhs = g.coeff_a(rotate(x, q));
            // Rotated points may leave the hexagon only through rounding.
            let Ok(lhs) = lhs else { continue };
            let rhs = g.coeff_a(x).unwrap().rotated(q);
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..500 {
            let rho = rng.gen_range(g.r + 1e-4..g.big_r - 1e-4);
            let t = rng.gen_range(0.0..2.0 * PI);
            let y = [rho * t.cos(), rho * t.sin()];
            let a = |p: Point| g.a_unchecked(p);
            let d1 = |p: Point| {
                let (ap, am) = (a([p[0] + h, p[1]]), a([p[0] - h, p[1]]));
                (ap + am.scaled(-1.0)).scaled(0.5 / h)
            };
            let d2 = |p: Point| {
                let (ap, am) = (a([p[0], p[1] + h]), a([p[0], p[1] - h]));
                (ap + am.scaled(-1.0)).scaled(0.5 / h)
            };
            let (dx, dy) = (d1(y), d2(y));
            let fd = [dx.xx + dy.xy, dx.xy + dy.yy];
            let an = g.div_a_unchecked(y);
            assert!((fd[0] - an[0]).abs() < 1e-6 && (fd[1] - an[1]).abs() < 1e-6);
        }
        assert_eq!(g.div_a_unchecked([0.05, 0.0]), [0.0, 0.0]);
        assert_eq!(g.div_a_unchecked([0.45, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn sym2_helpers() {
        let m = Sym2::new(2.0, 1.0, 2.0);
        let (l0, l1) = m.eigenvalues();
        assert_abs_diff_eq!(l0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l1, 3.0, epsilon = 1e-15);
        let r = m.rotated(PI / 2.0);
        assert_abs_diff_eq!(r.xx, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.xy, -1.0, epsilon = 1e-15);
    }

    fn brute_force_cell(x: Point, eps: f64, a: f64) -> [i64; 2] {
        let b1 = [1.5 * a * eps, 0.5 * SQRT3 * a * eps];
        let b2 = [0.0, SQRT3 * a * eps];
        let window = (norm(x) / (eps * a)).ceil() as i64 + 2;
        let mut best = ([0, 0], f64::INFINITY);
        for i in -window..=window {
            for j in -window..=window {
                let c = [i as f64 * b1[0] + j as f64 * b2[0], i as f64 * b1[1] + j as f64 * b2[1]];
                let d = norm([x[0] - c[0], x[1] - c[1]]);
                if d < best.1 {
                    best = ([i, j], d);
                }
            }
        }
        best.0
    }

    #[test]
    fn wrap_examples() {
        let a = geo().a;
        let (y, idx) = wrap_to_cell([0.0, 0.0], 0.3, a);
        assert_eq!(y, [0.0, 0.0]);
        assert_eq!(idx, [0, 0]);
        let eps = 0.4;
        let (y, idx) = wrap_to_cell([eps * 1.5 * a, eps * 0.5 * SQRT3 * a], eps, a);
        assert_eq!(idx, [1, 0]);
        assert!(norm(y) < 1e-12);
    }

    #[test]
    fn wrap_matches_nearest_centre_search() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let eps = rng.gen_range(0.02..1.0);
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (y, idx) = wrap_to_cell(x, eps, g.a);
            assert!(g.in_hexagon(y), "wrapped point {y:?} outside hexagon");
            let oracle = brute_force_cell(x, eps, g.a);
            if oracle != idx {
                // Only a tie on a hexagon edge may disagree.
                let b = g.lattice_basis();
                let c = [
                    oracle[0] as f64 * b[0][0] + oracle[1] as f64 * b[1][0],
                    oracle[0] as f64 * b[0][1] + oracle[1] as f64 * b[1][1],
                ];
                let d_oracle = norm([x[0] / eps - c[0], x[1] / eps - c[1]]);
                assert!((d_oracle - norm(y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn region_is_lattice_periodic() {
        let g = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = g.lattice_basis();
        for _ in 0..2000 {
            let eps = rng.gen_range(0.05..0.9);
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (i, j) = (rng.gen_range(-3..=3) as f64, rng.gen_range(-3..=3) as f64);
            let shifted = [
                x[0] + eps * (i * b[0][0] + j * b[1][0]),
                x[1] + eps * (i * b[0][1] + j * b[1][1]),
            ];
            let (y0, _) = wrap_to_cell(x, eps, g.a);
            let (y1, _) = wrap_to_cell(shifted, eps, g.a);
            let r0 = g.region_of(y0).unwrap();
            let r1 = g.region_of(y1).unwrap();
            if r0 != r1 {
                // only possible within rounding of a circle
                let d = (norm(y0) - g.r).abs().min((norm(y0) - g.big_r).abs());
                assert!(d < 1e-9);
            }
        }
    }
}

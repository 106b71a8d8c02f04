//! Meshes and quadrature.
//!
//! The reference hexagon is triangulated on the triangular lattice of spacing
//! `a/n_ref`: six equilateral sectors, each cut into `n_ref²` congruent
//! triangles. Nodes carry integer axial coordinates `(i, j)` with position
//! `i·u + j·v`, `u = (a/n, 0)`, `v = (a/2n, √3a/2n)`, and the hexagon is
//! `{|i| ≤ n, |j| ≤ n, |i + j| ≤ n}`. In these coordinates the periodic
//! translations are exact integer shifts, so opposite edges match by
//! construction.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Point;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Points and weights on a reference element.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Three-point rule on the triangle `(0,0), (1,0), (0,1)`; exact for degree 2.
    pub fn triangle_3() -> Self {
        let w = 1.0 / 6.0;
        Self {
            points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            weights: vec![w, w, w],
        }
    }

    /// Seven-point rule on the reference triangle; exact for degree 5.
    pub fn triangle_7() -> Self {
        let (a1, b1) = (0.059_715_871_789_770, 0.470_142_064_105_115);
        let (a2, b2) = (0.797_426_985_353_087, 0.101_286_507_323_456);
        let (w0, w1, w2) = (0.225, 0.132_394_152_788_506, 0.125_939_180_544_827);
        let mut points = vec![[1.0 / 3.0, 1.0 / 3.0]];
        let mut weights = vec![w0];
        for (p, w) in [(a1, b1), (a2, b2)].into_iter().zip([w1, w2]) {
            let (a, b) = p;
            points.extend([[b, b], [a, b], [b, a]]);
            weights.extend([w, w, w]);
        }
        for w in &mut weights {
            *w *= 0.5;
        }
        Self { points, weights }
    }

    /// Tensor Gauss–Legendre rule with `n` points per direction on `[-1, 1]²`.
    pub fn gauss_quad(n: usize) -> Self {
        let (x, w): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let g = 1.0 / 3f64.sqrt();
                (vec![-g, g], vec![1.0, 1.0])
            }
            3 => {
                let g = (0.6f64).sqrt();
                (vec![-g, 0.0, g], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            _ => panic!("gauss_quad supports 1 to 3 points per direction"),
        };
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (yj, wj) in x.iter().zip(&w) {
            for (xi, wi) in x.iter().zip(&w) {
                points.push([*xi, *yj]);
                weights.push(wi * wj);
            }
        }
        Self { points, weights }
    }

    /// The 2×2 rule used for every bilinear-element integral.
    pub fn gauss_2x2() -> Self {
        Self::gauss_quad(2)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Linear triangle data derived from its three vertices.
#[derive(Debug, Clone, Copy)]
pub struct P1Triangle {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Constant gradients of the three hat functions.
    pub grads: [[f64; 2]; 3],
}

impl P1Triangle {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Self {
            vertices,
            area: 0.5 * det,
            grads,
        }
    }

    /// Physical point and hat-function values at a reference point.
    pub fn map(&self, xi: Point) -> (Point, [f64; 3]) {
        let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        let [p0, p1, p2] = self.vertices;
        (
            [
                l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
            ],
            l,
        )
    }
}

/// Triangulation of the reference hexagon.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub a: f64,
    pub n_ref: usize,
    pub nodes: Vec<Point>,
    /// Axial lattice coordinates of each node.
    pub lattice: Vec<[i64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<[usize; 2]>,
    lookup: HashMap<[i64; 2], usize>,
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn node_at(&self, lattice: [i64; 2]) -> Option<usize> {
        self.lookup.get(&lattice).copied()
    }

    pub fn element(&self, t: usize) -> P1Triangle {
        let [i, j, k] = self.triangles[t];
        P1Triangle::new([self.nodes[i], self.nodes[j], self.nodes[k]])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.element(t).area).sum()
    }

    /// Node obtained by rotating `node` a sixth of a turn counter-clockwise.
    pub fn rotate_node(&self, node: usize) -> usize {
        let [i, j] = self.lattice[node];
        self.lookup[&[-j, i + j]]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let [i, j] = self.lattice[node];
        let n = self.n_ref as i64;
        i.abs() == n || j.abs() == n || (i + j).abs() == n
    }

    /// Periodic translations of the hexagon in axial node coordinates.
    pub fn lattice_translations(&self) -> [[i64; 2]; 6] {
        let n = self.n_ref as i64;
        let t = [[n, n], [-n, 2 * n], [2 * n, -n]];
        [
            t[0],
            t[1],
            t[2],
            [-t[0][0], -t[0][1]],
            [-t[1][0], -t[1][1]],
            [-t[2][0], -t[2][1]],
        ]
    }

    fn position(&self, l: [i64; 2]) -> Point {
        let h = self.a / self.n_ref as f64;
        [
            h * (l[0] as f64 + 0.5 * l[1] as f64),
            h * 0.5 * SQRT3 * l[1] as f64,
        ]
    }
}

/// Structured triangulation of the hexagon of edge `a`, `6·n_ref²` triangles.
pub fn triangulate_hexagon(a: f64, n_ref: usize) -> Result<TriMesh> {
    if n_ref < 1 {
        return Err(Error::Parameter("hexagon refinement n_ref must be at least 1".into()));
    }
    let n = n_ref as i64;
    let inside = |i: i64, j: i64| i.abs() <= n && j.abs() <= n && (i + j).abs() <= n;
    let mut mesh = TriMesh {
        a,
        n_ref,
        nodes: Vec::new(),
        lattice: Vec::new(),
        triangles: Vec::new(),
        boundary_edges: Vec::new(),
        lookup: HashMap::new(),
    };
    for j in -n..=n {
        for i in -n..=n {
            if inside(i, j) {
                let id = mesh.nodes.len();
                mesh.lattice.push([i, j]);
                mesh.nodes.push(mesh.position([i, j]));
                mesh.lookup.insert([i, j], id);
            }
        }
    }
    for j in -n..=n {
        for i in -n..=n {
            let up = [[i, j], [i + 1, j], [i, j + 1]];
            let down = [[i + 1, j], [i + 1, j + 1], [i, j + 1]];
            for tri in [up, down] {
                if tri.iter().all(|p| inside(p[0], p[1])) {
                    mesh.triangles.push(tri.map(|p| mesh.lookup[&p]));
                }
            }
        }
    }
    let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (p, q) = (t[k], t[(k + 1) % 3]);
            *edge_count.entry([p.min(q), p.max(q)]).or_default() += 1;
        }
    }
    let mut boundary: Vec<[usize; 2]> = edge_count
        .into_iter()
        .filter_map(|(e, c)| (c == 1).then_some(e))
        .collect();
    boundary.sort_unstable();
    mesh.boundary_edges = boundary;
    Ok(mesh)
}

/// Identification of periodic images on the hexagon boundary.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub node_to_dof: Vec<usize>,
    /// Representative (lowest-index) node of each DOF orbit.
    pub dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn n_dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_to_dof.len()
    }

    /// Nodal values of a periodic DOF vector.
    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        self.node_to_dof.iter().map(|&d| dofs[d]).collect()
    }

    /// DOF values read off the representative nodes.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.dof_to_node.iter().map(|&n| nodal[n]).collect()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Pairs boundary nodes of the hexagon with their lattice translates.
pub fn periodic_dof_map(mesh: &TriMesh) -> Result<DofMap> {
    let n = mesh.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    let shifts = mesh.lattice_translations();
    for node in 0..n {
        if !mesh.is_boundary(node) {
            continue;
        }
        let [i, j] = mesh.lattice[node];
        let mut matched = false;
        for s in shifts {
            let Some(partner) = mesh.node_at([i + s[0], j + s[1]]) else {
                continue;
            };
            let expected = mesh.position(s);
            let (x, y) = (mesh.nodes[node], mesh.nodes[partner]);
            let err = ((y[0] - x[0] - expected[0]).powi(2) + (y[1] - x[1] - expected[1]).powi(2)).sqrt();
            if err > 1e-9 {
                return Err(Error::Mesh(format!(
                    "node {node} and its translate {partner} differ from a lattice vector by {err:.3e}"
                )));
            }
            matched = true;
            let (ra, rb) = (find(&mut parent, node), find(&mut parent, partner));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        if !matched {
            return Err(Error::Mesh(format!(
                "boundary node {node} at ({:.6}, {:.6}) has no periodic partner",
                mesh.nodes[node][0], mesh.nodes[node][1]
            )));
        }
    }
    let mut node_to_dof = vec![usize::MAX; n];
    let mut root_dof: HashMap<usize, usize> = HashMap::new();
    let mut dof_to_node = Vec::new();
    for node in 0..n {
        let root = find(&mut parent, node);
        let dof = *root_dof.entry(root).or_insert_with(|| {
            dof_to_node.push(node);
            dof_to_node.len() - 1
        });
        node_to_dof[node] = dof;
    }
    Ok(DofMap {
        node_to_dof,
        dof_to_node,
    })
}

/// Bilinear shape functions on `[-1, 1]²`, counter-clockwise from `(-1, -1)`.
pub fn bilinear_shape(xi: Point) -> ([f64; 4], [[f64; 2]; 4]) {
    const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (a, c) in CORNERS.iter().enumerate() {
        let fx = 1.0 + c[0] * xi[0];
        let fy = 1.0 + c[1] * xi[1];
        n[a] = 0.25 * fx * fy;
        dn[a] = [0.25 * c[0] * fy, 0.25 * c[1] * fx];
    }
    (n, dn)
}

/// Uniform bilinear mesh of `[-1, 1]²` with homogeneous Dirichlet boundary.
#[derive(Debug, Clone)]
pub struct QuadMesh {
    /// Elements per side.
    pub n: usize,
    pub h: f64,
    pub boundary: Vec<bool>,
    /// Position of each node among the free (interior) unknowns.
    pub free_index: Vec<Option<usize>>,
    pub free_nodes: Vec<usize>,
}

impl QuadMesh {
    pub fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn n_elements(&self) -> usize {
        self.n * self.n
    }

    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn node(&self, k: usize) -> Point {
        let (i, j) = (k % (self.n + 1), k / (self.n + 1));
        [-1.0 + i as f64 * self.h, -1.0 + j as f64 * self.h]
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.n_nodes()).map(|k| self.node(k)).collect()
    }

    /// Global nodes of element `e`, counter-clockwise from the lower left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = (e % self.n, e / self.n);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> Point {
        let (i, j) = (e % self.n, e / self.n);
        [-1.0 + i as f64 * self.h, -1.0 + j as f64 * self.h]
    }

    /// Physical point of a reference coordinate in element `e`.
    pub fn map(&self, e: usize, xi: Point) -> Point {
        let o = self.element_origin(e);
        [o[0] + 0.5 * self.h * (xi[0] + 1.0), o[1] + 0.5 * self.h * (xi[1] + 1.0)]
    }

    /// Jacobian determinant of the reference map.
    pub fn jacobian(&self) -> f64 {
        0.25 * self.h * self.h
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| f(self.node(k))).collect()
    }

    /// Free-DOF part of a nodal vector.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&k| nodal[k]).collect()
    }

    /// Nodal vector with zero boundary values from free-DOF values.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for (&k, v) in self.free_nodes.iter().zip(free) {
            out[k] = *v;
        }
        out
    }
}

pub fn quad_mesh_rect(h: f64) -> Result<QuadMesh> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("mesh spacing h = {h} must be positive")));
    }
    let ratio = 2.0 / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Parameter(format!("2/h = {ratio} must be a positive integer")));
    }
    let n = n as usize;
    let h = 2.0 / n as f64;
    let nn = (n + 1) * (n + 1);
    let mut boundary = vec![false; nn];
    let mut free_index = vec![None; nn];
    let mut free_nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let k = j * (n + 1) + i;
            if i == 0 || j == 0 || i == n || j == n {
                boundary[k] = true;
            } else {
                free_index[k] = Some(free_nodes.len());
                free_nodes.push(k);
            }
        }
    }
    Ok(QuadMesh {
        n,
        h,
        boundary,
        free_index,
        free_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CryptGeometry;
    use approx::assert_abs_diff_eq;

    fn a() -> f64 {
        CryptGeometry::unit_area_edge()
    }

    #[test]
    fn hexagon_counts() {
        let m1 = triangulate_hexagon(a(), 1).unwrap();
        assert_eq!((m1.n_triangles(), m1.n_nodes()), (6, 7));
        let m2 = triangulate_hexagon(a(), 2).unwrap();
        assert_eq!((m2.n_triangles(), m2.n_nodes()), (24, 19));
        assert!(triangulate_hexagon(a(), 0).is_err());
    }

    #[test]
    fn hexagon_area_and_orientation() {
        for n in [1, 2, 5, 16, 64] {
            let m = triangulate_hexagon(a(), n).unwrap();
            assert_abs_diff_eq!(m.total_area(), 1.0, epsilon = 1e-10);
            assert!((0..m.n_triangles()).all(|t| m.element(t).area > 0.0));
            assert_eq!(m.boundary_edges.len(), 6 * n);
        }
    }

    #[test]
    fn periodic_map_counts() {
        let m = triangulate_hexagon(a(), 1).unwrap();
        let d = periodic_dof_map(&m).unwrap();
        assert_eq!(d.n_dofs(), 3);
        for n in [2, 3, 8, 32] {
            let m = triangulate_hexagon(a(), n).unwrap();
            let d = periodic_dof_map(&m).unwrap();
            assert_eq!(d.n_dofs(), 3 * n * n);
        }
    }

    #[test]
    fn corners_form_two_orbits() {
        let m = triangulate_hexagon(a(), 4).unwrap();
        let d = periodic_dof_map(&m).unwrap();
        let mut orbits: Vec<usize> = CryptGeometry::default()
            .hexagon_vertices()
            .iter()
            .map(|v| {
                let k = (0..m.n_nodes())
                    .min_by(|&p, &q| {
                        let dp = (m.nodes[p][0] - v[0]).hypot(m.nodes[p][1] - v[1]);
                        let dq = (m.nodes[q][0] - v[0]).hypot(m.nodes[q][1] - v[1]);
                        dp.total_cmp(&dq)
                    })
                    .unwrap();
                d.node_to_dof[k]
            })
            .collect();
        orbits.sort_unstable();
        orbits.dedup();
        assert_eq!(orbits.len(), 2);
    }

    #[test]
    fn identified_nodes_differ_by_lattice_vectors() {
        let g = CryptGeometry::default();
        let basis = g.lattice_basis();
        for n in [3, 64] {
            let m = triangulate_hexagon(g.a, n).unwrap();
            let d = periodic_dof_map(&m).unwrap();
            for node in 0..m.n_nodes() {
                let rep = d.dof_to_node[d.node_to_dof[node]];
                let diff = [m.nodes[node][0] - m.nodes[rep][0], m.nodes[node][1] - m.nodes[rep][1]];
                // solve diff = i b1 + j b2
                let i = diff[0] / basis[0][0];
                let j = (diff[1] - i * basis[0][1]) / basis[1][1];
                assert!((i - i.round()).abs() < 1e-9 && (j - j.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_round_trip() {
        let m = triangulate_hexagon(a(), 6).unwrap();
        let d = periodic_dof_map(&m).unwrap();
        let c = vec![2.5; d.n_dofs()];
        assert_eq!(d.restrict(&d.expand(&c)), c);
    }

    #[test]
    fn rotation_permutes_nodes() {
        let m = triangulate_hexagon(a(), 5).unwrap();
        for k in 0..m.n_nodes() {
            let r = m.rotate_node(k);
            let expect = crate::geometry::rotate(m.nodes[k], std::f64::consts::PI / 3.0);
            assert!((m.nodes[r][0] - expect[0]).abs() < 1e-12);
            assert!((m.nodes[r][1] - expect[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn quad_mesh_sizes() {
        let m = quad_mesh_rect(1.0).unwrap();
        assert_eq!((m.n_elements(), m.n_nodes(), m.n_free()), (4, 9, 1));
        let m = quad_mesh_rect(0.5).unwrap();
        assert_eq!((m.n_elements(), m.n_nodes(), m.n_free()), (16, 25, 9));
        let m = quad_mesh_rect(5e-3).unwrap();
        assert_eq!((m.n_elements(), m.n_nodes()), (400 * 400, 401 * 401));
        assert!(quad_mesh_rect(0.3).is_err());
        assert!(quad_mesh_rect(0.0).is_err());
    }

    #[test]
    fn quad_element_area() {
        let m = quad_mesh_rect(0.25).unwrap();
        let q = QuadratureRule::gauss_2x2();
        for e in 0..m.n_elements() {
            let area: f64 = q.weights.iter().map(|w| w * m.jacobian()).sum();
            assert_abs_diff_eq!(area, m.h * m.h, epsilon = 1e-15);
            let nodes = m.element_nodes(e);
            let o = m.node(nodes[0]);
            assert_eq!(o, m.element_origin(e));
        }
    }

    #[test]
    fn quadrature_weights_and_exactness() {
        let t3 = QuadratureRule::triangle_3();
        let t7 = QuadratureRule::triangle_7();
        for rule in [&t3, &t7] {
            assert!(rule.weights.iter().all(|w| *w > 0.0));
            assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 0.5, epsilon = 1e-14);
        }
        // exact moments on the reference triangle: ∫x² = ∫y² = 1/12, ∫xy = 1/24
        let moment = |r: &QuadratureRule, f: &dyn Fn(Point) -> f64| {
            r.points.iter().zip(&r.weights).map(|(p, w)| w * f(*p)).sum::<f64>()
        };
        for rule in [&t3, &t7] {
            assert_abs_diff_eq!(moment(rule, &|p| p[0] * p[0]), 1.0 / 12.0, epsilon = 1e-14);
            assert_abs_diff_eq!(moment(rule, &|p| p[0] * p[1]), 1.0 / 24.0, epsilon = 1e-14);
            assert_abs_diff_eq!(moment(rule, &|p| p[1] * p[1]), 1.0 / 12.0, epsilon = 1e-14);
        }
        // degree 5: ∫x⁵ = 5!·0!·... = 1/42 on the reference triangle
        assert_abs_diff_eq!(moment(&t7, &|p| p[0].powi(5)), 1.0 / 42.0, epsilon = 1e-12);
        let q = QuadratureRule::gauss_2x2();
        assert_abs_diff_eq!(q.weights.iter().sum::<f64>(), 4.0);
        // bicubic x³y³ + x²y² integrates to 0 + 4/9
        let v: f64 = q
            .points
            .iter()
            .zip(&q.weights)
            .map(|(p, w)| w * (p[0].powi(3) * p[1].powi(3) + p[0].powi(2) * p[1].powi(2)))
            .sum();
        assert_abs_diff_eq!(v, 4.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn shape_functions_partition_unity() {
        for rule in [QuadratureRule::gauss_2x2(), QuadratureRule::gauss_quad(3)] {
            for p in &rule.points {
                let (n, dn) = bilinear_shape(*p);
                assert_abs_diff_eq!(n.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
                assert_abs_diff_eq!(dn.iter().map(|d| d[0]).sum::<f64>(), 0.0, epsilon = 1e-14);
            }
        }
        let m = triangulate_hexagon(a(), 3).unwrap();
        let t = m.element(4);
        for p in &QuadratureRule::triangle_3().points {
            let (_, l) = t.map(*p);
            assert_abs_diff_eq!(l.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }
}

use crypt_homog::config::{parse_config_str, RunConfig};
use crypt_homog::geometry::{wrap_to_cell, CellCoefficients, CoefficientField, CryptGeometry};
use crypt_homog::linalg::SparseMatrix;
use crypt_homog::report::{relative_error, Norm};
use proptest::prelude::*;

fn geo() -> CryptGeometry {
    CryptGeometry::default()
}

fn small_mass(n: usize) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 4.0 / 6.0));
        if i + 1 < n {
            t.push((i, i + 1, 1.0 / 6.0));
            t.push((i + 1, i, 1.0 / 6.0));
        }
    }
    SparseMatrix::from_triplets(n, n, &t)
}

proptest! {
    #[test]
    fn wrap_is_periodic_and_reconstructs(
        x in prop::array::uniform2(-1.0f64..1.0),
        eps in 0.05f64..1.0,
        i in -4i64..=4,
        j in -4i64..=4,
    ) {
        let g = geo();
        let b = g.lattice_basis();
        let (y, idx) = wrap_to_cell(x, eps, g.a);
        prop_assert!(g.in_hexagon(y));
        for k in 0..2 {
            let back = eps * (y[k] + idx[0] as f64 * b[0][k] + idx[1] as f64 * b[1][k]);
            prop_assert!((back - x[k]).abs() < 1e-12);
        }
        let shifted = [
            x[0] + eps * (i as f64 * b[0][0] + j as f64 * b[1][0]),
            x[1] + eps * (i as f64 * b[0][1] + j as f64 * b[1][1]),
        ];
        let (ys, _) = wrap_to_cell(shifted, eps, g.a);
        // Points on a cell edge may wrap to either of two opposite edges.
        let on_edge = {
            let (ax, ay) = (y[0].abs(), y[1].abs());
            (ay - g.inradius()).abs() < 1e-9 || (3f64.sqrt() * ax + ay - 3f64.sqrt() * g.a).abs() < 1e-9
        };
        if !on_edge {
            prop_assert!((ys[0] - y[0]).abs() < 1e-9 && (ys[1] - y[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn coefficient_is_uniformly_elliptic(
        x in prop::array::uniform2(-2.0f64..2.0),
        xi in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let field = CoefficientField::default();
        let (y, _) = wrap_to_cell(x, 1.0, field.geometry.a);
        let a = field.a(y);
        let n2 = xi[0] * xi[0] + xi[1] * xi[1];
        prop_assert!(a.quad_form(xi) >= 0.25 * n2 - 1e-12);
        prop_assert!((a.xx - a.yy).abs() <= 1.0 && a.det() > 0.0);
    }

    #[test]
    fn relative_error_is_scale_invariant(
        u in prop::collection::vec(-10.0f64..10.0, 8),
        v in prop::collection::vec(-10.0f64..10.0, 8),
        k in -20i32..20,
        alpha in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let m = small_mass(8);
        let scale = |w: &[f64], s: f64| w.iter().map(|x| s * x).collect::<Vec<_>>();
        let two_k = 2f64.powi(k);
        prop_assert_eq!(
            relative_error(&scale(&u, two_k), &scale(&v, two_k), Norm::Linf, &m).unwrap(),
            relative_error(&u, &v, Norm::Linf, &m).unwrap()
        );
        for norm in [Norm::L2, Norm::Euclidean, Norm::Linf] {
            let base = relative_error(&u, &v, norm, &m).unwrap();
            let scaled = relative_error(&scale(&u, alpha), &scale(&v, alpha), norm, &m).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-14 * base.max(1.0));
        }
    }

    #[test]
    fn relative_error_vanishes_only_on_equality(
        v in prop::collection::vec(0.1f64..10.0, 6),
        k in 0usize..6,
        d in prop_oneof![-1.0f64..-1e-6, 1e-6f64..1.0],
    ) {
        let m = small_mass(6);
        for norm in [Norm::L2, Norm::Euclidean, Norm::Linf] {
            prop_assert_eq!(relative_error(&v, &v, norm, &m).unwrap(), 0.0);
            let mut u = v.clone();
            u[k] += d;
            prop_assert!(relative_error(&u, &v, norm, &m).unwrap() > 0.0);
        }
    }

    #[test]
    fn sparse_product_matches_dense(
        entries in prop::collection::vec((0usize..7, 0usize..5, -5.0f64..5.0), 0..40),
        x in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let a = SparseMatrix::from_triplets(7, 5, &entries);
        let mut dense = vec![vec![0.0; 5]; 7];
        for &(i, j, v) in &entries {
            dense[i][j] += v;
        }
        let y = a.mul_vec(&x);
        for i in 0..7 {
            let expect: f64 = (0..5).map(|j| dense[i][j] * x[j]).sum();
            prop_assert!((y[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
        prop_assert_eq!(a.transpose().transpose().to_dense(), a.to_dense());
    }

    #[test]
    fn config_echo_round_trips(
        l in 1.0f64..20.0,
        d in 0.01f64..1.0,
        beta2 in 0.0f64..1.0,
        seed in any::<u64>(),
        eps_scale in 1u32..5,
    ) {
        let eps: Vec<f64> = (0..3).map(|i| eps_scale as f64 * 0.8 / 2f64.powi(i)).collect();
        let mut cfg = RunConfig {
            eps,
            seed,
            h: 1.0 / 64.0,
            ..RunConfig::default()
        };
        cfg.geometry.l = l;
        cfg.reaction.diffusion = d;
        cfg.reaction.beta2 = beta2;
        let back = parse_config_str(&cfg.to_text(), "echo").unwrap();
        prop_assert_eq!(back, cfg);
    }
}

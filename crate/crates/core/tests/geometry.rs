use anisolve::discretization::build_vertical_profile;
use anisolve::geometry::{
    anisotropy, build_cubed_sphere_panel, build_graded_vertical_grid, build_planar_panel, PANEL_SOLID_ANGLE,
};
use approx::assert_relative_eq;
use proptest::prelude::*;

/// Solid angle of the gnomonic rectangle `[x0, x1] x [y0, y1]` on a cube
/// face, from the closed-form antiderivative `atan(x y / sqrt(1 + x^2 + y^2))`.
fn solid_angle(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let f = |x: f64, y: f64| (x * y / (1.0 + x * x + y * y).sqrt()).atan();
    f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0)
}

// Values produced by an independent NumPy implementation of the panel
// construction for m = 4.
const AREAS_M4: [[f64; 4]; 2] = [
    [0.08145558759534528, 0.12039263360631142, 0.12039263360631139, 0.08145558759534527],
    [0.12039263360631142, 0.2013579207903308, 0.2013579207903308, 0.12039263360631139],
];
const EAST_M4: [[f64; 4]; 2] = [
    [0.9013753400529118, 1.0753327553737757, 1.0753327553737757, 0.9013753400529118],
    [0.8149893407970609, 0.974290613553372, 0.974290613553372, 0.8149893407970609],
];

#[test]
fn sphere_panel_m4_matches_reference() {
    let g = build_cubed_sphere_panel(4).unwrap();
    for i in 0..2 {
        for j in 0..4 {
            assert_relative_eq!(g.area(i, j), AREAS_M4[i][j], max_relative = 1e-12);
            assert_relative_eq!(g.alpha_east_edge(i, j).unwrap(), EAST_M4[i][j], max_relative = 1e-12);
        }
    }
    // Mirror symmetry of the panel.
    for i in 0..4 {
        for j in 0..4 {
            assert_relative_eq!(g.area(i, j), g.area(3 - i, j), max_relative = 1e-13);
            assert_relative_eq!(g.area(i, j), g.area(j, i), max_relative = 1e-13);
        }
    }
    assert_relative_eq!(g.total_area(), PANEL_SOLID_ANGLE, max_relative = 1e-13);
}

#[test]
fn sphere_areas_match_closed_form() {
    for m in [1, 3, 8, 33] {
        let g = build_cubed_sphere_panel(m).unwrap();
        let node = |a: usize| -1.0 + 2.0 * a as f64 / m as f64;
        for i in 0..m {
            for j in 0..m {
                let exact = solid_angle(node(i), node(i + 1), node(j), node(j + 1));
                assert_relative_eq!(g.area(i, j), exact, max_relative = 1e-11);
            }
        }
    }
}

#[test]
fn boundary_edges_are_missing() {
    let g = build_cubed_sphere_panel(5).unwrap();
    for j in 0..5 {
        assert!(g.alpha_west_edge(0, j).is_none());
        assert!(g.alpha_east_edge(4, j).is_none());
        assert!(g.alpha_south_edge(j, 0).is_none());
        assert!(g.alpha_north_edge(j, 4).is_none());
    }
    // Corner cells have two neighbours, edge cells three, interior four.
    let count = |i, j| {
        [g.alpha_west_edge(i, j), g.alpha_east_edge(i, j), g.alpha_south_edge(i, j), g.alpha_north_edge(i, j)]
            .iter()
            .filter(|a| a.is_some())
            .count()
    };
    assert_eq!(count(0, 0), 2);
    assert_eq!(count(0, 2), 3);
    assert_eq!(count(2, 2), 4);
}

#[test]
fn graded_grid_spacing_at_paper_resolution() {
    let g = build_graded_vertical_grid(128, 0.01).unwrap();
    assert_relative_eq!(g.spacing(0), 6.103515625e-7, max_relative = 1e-6);
    assert_relative_eq!(g.spacing(127), 1.556396484375e-4, max_relative = 1e-9);
    assert_eq!(g.radii()[0], 1.0);
    assert_relative_eq!(g.radii()[128], 1.01, max_relative = 1e-15);
}

#[test]
fn planar_anisotropy_is_strong_everywhere() {
    let g = build_planar_panel(256, 2.0).unwrap();
    let v = build_graded_vertical_grid(128, 0.01).unwrap();
    let an = anisotropy(&g, &v, 3.32e-2);
    // Largest vertical spacing gives the weakest anisotropy.
    let dx = 2.0 / 256.0;
    let expect_min = 3.32e-2 * (dx / v.spacing(127)).powi(2);
    assert_relative_eq!(an.min(), expect_min, max_relative = 1e-12);
    assert!(an.min() > 80.0);
    assert!(an.max() > 1e6);
}

// Profile for n_z = 2, H = 0.01, omega2 = 6.71e-4, lambda2 = 3.32e-2, from the
// same NumPy reference.
#[test]
fn two_level_profile_matches_reference() {
    let g = build_graded_vertical_grid(2, 0.01).unwrap();
    let p = build_vertical_profile(&g, 6.71e-4, 3.32e-2).unwrap();
    let u = p.unscaled();
    let a = [0.00250625520833325, 0.00759407812500005];
    let d = [-1.6816972447916125e-06, -5.0956264218750350e-06];
    for k in 0..2 {
        assert_relative_eq!(u.a[k], a[k], max_relative = 1e-12);
        assert_relative_eq!(u.d[k], d[k], max_relative = 1e-12);
        assert_relative_eq!(p.a_prime[k], -1.0 / 6.71e-4, max_relative = 1e-12);
    }
    assert_relative_eq!(u.b[0], -0.0044777450464999, max_relative = 1e-12);
    assert_relative_eq!(p.b_prime[0], 2662.6344666781897, max_relative = 1e-12);
    assert_eq!(p.b_prime[1], 0.0);
    assert_eq!(p.c_prime[0], 0.0);
    assert_eq!(u.c[1], u.b[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sphere_panel_invariants(m in 1usize..24) {
        let g = build_cubed_sphere_panel(m).unwrap();
        prop_assert!((g.total_area() - PANEL_SOLID_ANGLE).abs() <= 1e-12);
        for i in 0..m {
            for j in 0..m {
                prop_assert!(g.area(i, j) > 0.0);
                let nb = g.neighbor_alphas(i, j);
                let sum = nb.west + nb.east + nb.south + nb.north;
                prop_assert!((sum - g.alpha_diag(i, j)).abs() <= 1e-14 * sum.max(1.0));
                if let Some(e) = g.alpha_east_edge(i, j) {
                    prop_assert_eq!(Some(e), g.alpha_west_edge(i + 1, j));
                    prop_assert!(e > 0.0);
                }
                if let Some(n) = g.alpha_north_edge(i, j) {
                    prop_assert_eq!(Some(n), g.alpha_south_edge(i, j + 1));
                }
            }
        }
    }

    #[test]
    fn graded_grid_is_increasing(n_z in 1usize..300, h in 1e-4f64..1.0) {
        let g = build_graded_vertical_grid(n_z, h).unwrap();
        prop_assert!(g.radii().windows(2).all(|w| w[0] < w[1]));
        for k in 1..n_z {
            prop_assert!(g.spacing(k) > g.spacing(k - 1));
        }
    }

    #[test]
    fn profile_signs(n_z in 2usize..64, omega2 in 1e-6f64..1.0, lambda2 in 1e-4f64..10.0) {
        let g = build_graded_vertical_grid(n_z, 0.01).unwrap();
        let p = build_vertical_profile(&g, omega2, lambda2).unwrap();
        let u = p.unscaled();
        for k in 0..n_z {
            prop_assert!(u.a[k] > 0.0);
            prop_assert!(u.d[k] < 0.0);
            prop_assert!(u.b[k] <= 0.0 && u.c[k] <= 0.0);
        }
        prop_assert_eq!(u.b[n_z - 1], 0.0);
        prop_assert_eq!(u.c[0], 0.0);
    }
}

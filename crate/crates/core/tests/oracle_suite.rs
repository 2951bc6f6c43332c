mod common;

use std::f64::consts::PI;

use common::*;
use grating::geometry::{discretize, BoundaryCurve, Lattice};
use grating::kernels::CombinedFieldOperator;
use grating::linalg::C64;
use grating::periodic::{PeriodicSolver, SolverOptions};
use grating::postprocess::bragg_amplitudes;
use grating::specialfn::hankel01;

fn star() -> BoundaryCurve {
    BoundaryCurve::star(0.35, 0.105, 3)
}

fn solver(curve: &BoundaryCurve, n: usize, omega: f64) -> PeriodicSolver<CombinedFieldOperator> {
    let op = CombinedFieldOperator::new(discretize(curve, n).unwrap(), omega).unwrap();
    PeriodicSolver::new(op, Lattice::new(1.0).unwrap(), SolverOptions::default()).unwrap()
}

#[test]
fn oracle_bessel_agrees_with_library_hankel() {
    for &x in &[1e-3, 0.5, 1.0, 3.7, 8.0, 12.5, 25.0, 60.0] {
        let (j, y) = (bessel_j(1, x), bessel_y(1, x));
        let h = hankel01(x).unwrap();
        for (a, b) in [
            (j[0], h.j0()),
            (j[1], h.j1()),
            (y[0], h.y0()),
            (y[1], h.y1()),
        ] {
            assert!(
                (a - b).abs() <= 1e-12 * b.abs().max(1.0),
                "x={x}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn oracle_bessel_wronskian_at_higher_orders() {
    for &x in &[0.7, 4.0, 11.0, 30.0] {
        let (j, y) = (bessel_j(20, x), bessel_y(20, x));
        for m in 0..12 {
            let w = j[m + 1] * y[m] - j[m] * y[m + 1];
            let exact = 2.0 / (PI * x);
            assert!(((w - exact) / exact).abs() < 1e-11, "x={x} m={m}");
        }
    }
}

#[test]
fn mie_without_contrast_scatters_nothing() {
    let b = mie_coefficients(2.0, 1.0, Some(1.0));
    assert!(b.iter().all(|z| z.norm() < 1e-15));
}

#[test]
fn mie_long_wavelength_is_monopole_dominated() {
    let b = mie_coefficients(0.01, 1.0, None);
    assert!(b[0].norm() > 0.1);
    assert!(b[1].norm() < 1e-3 * b[0].norm());
    assert!(b.iter().skip(2).all(|z| z.norm() < 1e-7 * b[0].norm()));
}

#[test]
fn mie_dirichlet_coefficients_match_library_hankel() {
    let b = mie_coefficients(1.0, 1.0, None);
    let h = hankel01(1.0).unwrap();
    assert!((b[0] + h.j0() / h.h0).norm() < 1e-14);
    assert!((b[1] + C64::new(0.0, 1.0) * h.j1() / h.h1).norm() < 1e-14);
}

#[test]
fn dense_reference_matches_fast_path_on_star() {
    let s = solver(&star(), 512, 10.0);
    let theta = -PI / 5.0;
    let sys = s.system_for_angle(theta).unwrap();
    let rhs = s.incident_rhs(theta);
    let (dense, residual) = dense_reference(&sys, &rhs);
    assert!(residual <= 1e-12, "dense residual {residual:e}");
    let (fast, _) = sys.solve_block(&rhs).unwrap();
    let eta = (&fast.eta - &dense.eta).norm() / dense.eta.norm();
    let xi = (&fast.xi - &dense.xi).norm() / dense.xi.norm();
    assert!(eta <= 1e-9 && xi <= 1e-9, "eta {eta:e} xi {xi:e}");
    let a = bragg_amplitudes(&sys, &fast, 0, theta, None, None).unwrap();
    let b = bragg_amplitudes(&sys, &dense, 0, theta, None, None).unwrap();
    for i in 0..a.orders.len() {
        assert!((a.up[i] - b.up[i]).norm() <= 1e-9 && (a.down[i] - b.down[i]).norm() <= 1e-9);
    }
}

/// Unpreconditioned GMRES iterations on Ã alone and on the full block
/// system, at ω = 10, θ = −π/5, N = 1024.
fn gmres_counts(curve: &BoundaryCurve) -> (usize, usize) {
    let s = solver(curve, 1024, 10.0);
    let theta = -PI / 5.0;
    let sys = s.system_for_angle(theta).unwrap();
    let boundary: Vec<C64> = s.incident_rhs(theta).iter().copied().collect();
    let own = gmres_iterations(&sys.dense_atilde(), &boundary, 1e-8, 600).expect("GMRES stalled");
    let big = dense_block_matrix(&sys);
    let mut rhs = vec![C64::new(0.0, 0.0); big.nrows()];
    rhs[..boundary.len()].copy_from_slice(&boundary);
    (
        own,
        gmres_iterations(&big, &rhs, 1e-8, 600).expect("GMRES stalled"),
    )
}

#[test]
fn gmres_iterations_grow_with_boundary_complexity() {
    let curves = [
        BoundaryCurve::circle(0.3),
        star(),
        BoundaryCurve::star(0.3, 0.12, 8),
        BoundaryCurve::star(0.3, 0.1, 13),
    ];
    let counts: Vec<(usize, usize)> = curves.iter().map(gmres_counts).collect();
    eprintln!("GMRES iterations (self+neighbors, full): {counts:?}");
    for w in counts.windows(2) {
        assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1, "{counts:?}");
    }
}

mod common;

use std::f64::consts::PI;

use common::dense_block_matrix;
use grating::geometry::{discretize, BoundaryCurve, Lattice};
use grating::kernels::CombinedFieldOperator;
use grating::linalg::{vstack, CMat};
use grating::periodic::{PeriodicSolver, SolverOptions, WoodMode};
use grating::postprocess::{bragg_amplitudes, eval_field};
use grating::Error;

fn star() -> BoundaryCurve {
    BoundaryCurve::star(0.35, 0.105, 3)
}

fn solver_with(curve: &BoundaryCurve, n: usize, omega: f64, options: SolverOptions) -> PeriodicSolver<CombinedFieldOperator> {
    let op = CombinedFieldOperator::new(discretize(curve, n).unwrap(), omega).unwrap();
    PeriodicSolver::new(op, Lattice::new(1.0).unwrap(), options).unwrap()
}

fn star_flux_error(n: usize) -> f64 {
    let s = solver_with(&star(), n, 10.0, SolverOptions::default());
    let theta = -PI / 5.0;
    let sweep = s.solve_angles(&[theta]).unwrap();
    let (b, c) = sweep.column(0);
    bragg_amplitudes(&b.system, &b.solution, c, theta, None, None).unwrap().flux_error
}

#[test]
fn star_grating_flux_error_converges() {
    let errs: Vec<f64> = [512, 1024, 2048].iter().map(|&n| star_flux_error(n)).collect();
    eprintln!("flux errors N=512,1024,2048: {errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] <= 1e-10, "N=2048 flux error {:e}", errs[2]);
}

#[test]
fn fast_path_solves_the_dense_block_system() {
    for n in [512, 1024] {
        let s = solver_with(&star(), n, 10.0, SolverOptions::default());
        let theta = -PI / 5.0;
        let sys = s.system_for_angle(theta).unwrap();
        let rhs = s.incident_rhs(theta);
        let (sol, _) = sys.solve_block(&rhs).unwrap();
        let big = dense_block_matrix(&sys);
        let x = vstack(&[&sol.eta, &sol.xi]);
        let full = vstack(&[&rhs, &CMat::zeros(sol.xi.nrows(), 1)]);
        let residual = (&big * &x - &full).norm() / full.norm();
        assert!(residual <= 1e-9, "N={n}: residual {residual:e}");
    }
}

#[test]
fn angles_sharing_a_bloch_phase_share_one_solve() {
    let s = solver_with(&star(), 1024, 10.0, SolverOptions::default());
    let omega = 10.0;
    let base = (-PI / 5.0f64).cos();
    // cos θ_k = cos θ_0 + 2πk/(ωd) keeps α fixed
    let thetas: Vec<f64> = (-2..=1)
        .map(|k| base + 2.0 * PI * k as f64 / omega)
        .filter(|c: &f64| c.abs() < 1.0)
        .map(|c| -c.acos())
        .collect();
    let q = thetas.len();
    assert!(q >= 3);
    let sweep = s.solve_angles(&thetas).unwrap();
    assert_eq!(sweep.buckets.len(), 1);
    let bucket = &sweep.buckets[0];
    let m = bucket.system.contour.len();
    let l = s.neighbors.rank;
    let p = s.options.images;
    assert_eq!(bucket.stats.calls, 2);
    assert_eq!(bucket.stats.columns, 2 * m + q + 2 * p * l);
    for (i, &t) in thetas.iter().enumerate() {
        let single = s.solve_angles(&[t]).unwrap();
        let (sb, sc) = single.column(0);
        let (bb, bc) = sweep.column(i);
        let diff = (bb.solution.eta.column(bc) - sb.solution.eta.column(sc)).norm() / sb.solution.eta.column(sc).norm();
        assert!(diff <= 1e-12, "angle {i}: {diff:e}");
        let a = bragg_amplitudes(&bb.system, &bb.solution, bc, t, None, None).unwrap();
        let b = bragg_amplitudes(&sb.system, &sb.solution, sc, t, None, None).unwrap();
        for k in 0..a.up.len() {
            assert!((a.up[k] - b.up[k]).norm() <= 1e-12 && (a.down[k] - b.down[k]).norm() <= 1e-12);
        }
    }
}

/// max over a probe column of |u(d/2, y) − α u(−d/2, y)| and the same for
/// ∂u/∂y, relative to max|u|.
fn wall_mismatch(s: &PeriodicSolver<CombinedFieldOperator>, theta: f64) -> f64 {
    let sweep = s.solve_angles(&[theta]).unwrap();
    let (b, c) = sweep.column(0);
    let ys: Vec<f64> = (0..41).map(|i| -1.2 + 2.4 * i as f64 / 40.0).collect();
    let left: Vec<[f64; 2]> = ys.iter().map(|&y| [-0.5, y]).collect();
    let right: Vec<[f64; 2]> = ys.iter().map(|&y| [0.5, y]).collect();
    let inner: Vec<[f64; 2]> = ys.iter().map(|&y| [0.0, 0.8 * y.signum() + 0.4 * y]).collect();
    let fl = eval_field(&b.system, &b.solution, c, &left).unwrap();
    let fr = eval_field(&b.system, &b.solution, c, &right).unwrap();
    let fi = eval_field(&b.system, &b.solution, c, &inner).unwrap();
    let scale = fl.values.iter().chain(&fr.values).chain(&fi.values).map(|z| z.norm()).fold(0.0, f64::max);
    let alpha = b.system.alpha;
    (0..ys.len())
        .map(|i| (fr.values[i] - alpha * fl.values[i]).norm().max((fr.dy[i] - alpha * fl.dy[i]).norm()))
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn scattered_field_is_quasi_periodic() {
    let s = solver_with(&star(), 1024, 10.0, SolverOptions::default());
    for theta in [-PI / 5.0, -PI / 2.0, -2.5] {
        let err = wall_mismatch(&s, theta);
        assert!(err <= 1e-8, "θ={theta}: {err:e}");
    }
}

fn wood_angle(omega: f64) -> f64 {
    -(1.0 - 2.0 * PI / omega).acos()
}

fn wood_flux(mode: WoodMode, n: usize) -> f64 {
    let omega = 10.0;
    let s = solver_with(&star(), n, omega, SolverOptions { wood: mode, ..Default::default() });
    let theta = wood_angle(omega);
    let sweep = s.solve_angles(&[theta]).unwrap();
    let (b, c) = sweep.column(0);
    if mode != WoodMode::Off {
        assert!(b.system.wood.is_some());
    }
    bragg_amplitudes(&b.system, &b.solution, c, theta, None, None).unwrap().flux_error
}

#[test]
fn wood_anomaly_is_resolved_by_augmentation() {
    let theta = wood_angle(10.0);
    let kappa1 = 10.0 * theta.cos() + 2.0 * PI;
    assert!((kappa1.abs() - 10.0).abs() < 1e-13, "order 1 is not grazing");
    let on = wood_flux(WoodMode::Auto, 2048);
    let off = wood_flux(WoodMode::Off, 2048);
    eprintln!("Wood anomaly flux error: augmented {on:e}, plain {off:e}");
    assert!(on <= 1e-8, "{on:e}");
    assert!(off >= 1e3 * on, "{off:e} vs {on:e}");
}

#[test]
fn wood_augmented_field_stays_quasi_periodic() {
    let s = solver_with(&star(), 1024, 10.0, SolverOptions::default());
    let err = wall_mismatch(&s, wood_angle(10.0));
    assert!(err <= 1e-8, "{err:e}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let op = CombinedFieldOperator::new(discretize(&star(), 256).unwrap(), 10.0).unwrap();
    let narrow = PeriodicSolver::new(op, Lattice::new(0.8).unwrap(), SolverOptions::default());
    assert!(matches!(narrow, Err(Error::Geometry(_))), "{narrow:?}");
    let s = solver_with(&star(), 256, 10.0, SolverOptions::default());
    assert!(matches!(s.solve_angles(&[0.3]), Err(Error::Domain(_))));
    assert!(matches!(s.solve_angles(&[-PI]), Err(Error::Domain(_))));
}

mod common;

use common::*;
use grating::geometry::{discretize, BoundaryCurve};
use grating::kernels::{assemble_self, EntryOracle};
use grating::linalg::{CMat, C64};
use grating::transmission::TransmissionOperator;

const I: C64 = C64::new(0.0, 1.0);

fn dirichlet_far_error(omega: f64, n: usize, phi_inc: f64) -> f64 {
    let disc = discretize(&BoundaryCurve::circle(1.0), n).unwrap();
    let a = assemble_self(&disc, omega).unwrap().entries;
    let d = [phi_inc.cos(), phi_inc.sin()];
    let rhs = CMat::from_fn(n, 1, |i, _| {
        -(I * omega * (d[0] * disc.points[i][0] + d[1] * disc.points[i][1])).exp()
    });
    let eta: Vec<C64> = dense_solve(&a, &rhs).iter().copied().collect();
    let coeffs = mie_coefficients(omega, 1.0, None);
    (0..16)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / 16.0 + 0.1;
            (combined_far_field(&disc, omega, &eta, phi) - mie_far_field(&coeffs, phi - phi_inc))
                .norm()
        })
        .fold(0.0, f64::max)
}

fn slope(omega: f64) -> f64 {
    let coarse = dirichlet_far_error(omega, 64, 0.3);
    let fine = dirichlet_far_error(omega, 512, 0.3);
    (fine / coarse).log2() / 3.0
}

#[test]
fn sound_soft_circle_converges_at_sixth_order() {
    for omega in [1.0, 3.0] {
        let s = slope(omega);
        assert!((s + 6.0).abs() <= 0.7, "omega {omega}: slope {s}");
    }
}

#[test]
fn sound_soft_circle_far_field_accuracy() {
    assert!(dirichlet_far_error(1.0, 512, -0.8) < 1e-10);
}

fn transmission_errors(omega: f64, index: f64, n: usize) -> (f64, f64) {
    let disc = discretize(&BoundaryCurve::circle(1.0), n).unwrap();
    let op = TransmissionOperator::new(disc.clone(), omega, index).unwrap();
    let all: Vec<usize> = (0..op.size()).collect();
    let a = op.block(&all, &all);
    let phi_inc: f64 = 0.3;
    let (kx, ky) = (omega * phi_inc.cos(), omega * phi_inc.sin());
    let rhs = CMat::from_fn(2 * n, 1, |r, _| {
        let (p, nv) = (disc.points[r / 2], disc.normals[r / 2]);
        let u = (I * (kx * p[0] + ky * p[1])).exp();
        if r % 2 == 0 {
            -I * (kx * nv[0] + ky * nv[1]) * u
        } else {
            -u
        }
    });
    let density: Vec<C64> = dense_solve(&a, &rhs).iter().copied().collect();
    let (coeffs, interior) = mie_series(omega, 1.0, Some(index));
    let far = (0..16)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / 16.0 + 0.1;
            (transmission_far_field(&disc, omega, &density, phi)
                - mie_far_field(&coeffs, phi - phi_inc))
            .norm()
        })
        .fold(0.0, f64::max);
    let probes: Vec<[f64; 2]> = [0.0, 0.3, 0.55]
        .iter()
        .map(|&r| [r * 0.7f64.cos(), r * 0.7f64.sin() + 1e-3])
        .collect();
    let inner = op.interior_field(&probes, &density).unwrap();
    let near = probes
        .iter()
        .zip(&inner)
        .map(|(&p, u)| (u - mie_interior_field(&interior, index * omega, phi_inc, p)).norm())
        .fold(0.0, f64::max);
    (far, near)
}

#[test]
fn dielectric_circle_matches_mie_series() {
    let (far, inner) = transmission_errors(1.0, 1.5, 256);
    assert!(far < 1e-8, "{far:e}");
    assert!(inner < 1e-8, "{inner:e}");
    let (far, inner) = transmission_errors(4.0, 0.7, 512);
    assert!(far < 1e-7 && inner < 1e-7, "{far:e} {inner:e}");
}

#[test]
fn unit_index_is_rejected_and_small_contrast_is_near_identity() {
    let disc = discretize(&BoundaryCurve::circle(1.0), 64).unwrap();
    assert!(TransmissionOperator::new(disc.clone(), 2.0, 1.0).is_err());
    assert!(TransmissionOperator::new(disc.clone(), 2.0, -1.5).is_err());
    let op = TransmissionOperator::new(disc, 2.0, 1.0 + 1e-9).unwrap();
    let all: Vec<usize> = (0..op.size()).collect();
    let a = op.block(&all, &all);
    let off = (a - CMat::identity(128, 128))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(off < 1e-7, "{off:e}");
}

#[test]
fn interlaced_ranks_stay_within_twice_dirichlet() {
    use grating::hbs::{compress, HbsOptions};
    use grating::kernels::CombinedFieldOperator;
    let disc = discretize(&BoundaryCurve::star(0.35, 0.105, 3), 1024).unwrap();
    let opts = HbsOptions::default();
    let soft = compress(
        &CombinedFieldOperator::new(disc.clone(), 10.0).unwrap(),
        opts,
    )
    .unwrap();
    let opts2 = HbsOptions {
        leaf_size: 2 * opts.leaf_size,
        ..opts
    };
    let diel = compress(&TransmissionOperator::new(disc, 10.0, 1.5).unwrap(), opts2).unwrap();
    assert_eq!(soft.depth(), diel.depth());
    assert!(
        diel.max_rank() <= 2 * soft.max_rank() + 10,
        "{} vs {}",
        diel.max_rank(),
        soft.max_rank()
    );
}

use grating::geometry::{discretize, BoundaryCurve};
use std::sync::OnceLock;

use grating::hbs::{
    build_inverse, compress, id_decompose, reconstruct, CompressedInverse, HbsOptions,
};
use grating::kernels::{CombinedFieldOperator, EntryOracle};
use grating::linalg::{condition_estimate, matmul, select_rows, CMat, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_block(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn check_curve(curve: &BoundaryCurve, n: usize, omega: f64) {
    let opts = HbsOptions::default();
    let eps = opts.tol;
    let op = CombinedFieldOperator::new(discretize(curve, n).unwrap(), omega).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let dense = op.block(&all, &all);
    let tree = compress(&op, opts).unwrap();
    let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let recon = (reconstruct(&tree).unwrap() - &dense)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    assert!(
        recon <= 10.0 * eps * scale,
        "N={n}: reconstruction {recon:e} vs {:e}",
        10.0 * eps * scale
    );

    let inv = build_inverse(&tree).unwrap();
    let kappa = condition_estimate(&dense);
    let x = random_block(n, 3, n as u64);
    let back = matmul(&dense, &inv.apply(&x).unwrap());
    let residual = (back - &x).norm() / x.norm();
    assert!(
        residual <= 10.0 * eps * kappa,
        "N={n}: residual {residual:e}, κ={kappa:e}"
    );
}

#[test]
fn circle_compresses_and_inverts_within_tolerance() {
    for n in [512, 2048] {
        check_curve(&BoundaryCurve::circle(0.35), n, 10.0);
    }
}

#[test]
fn star_compresses_and_inverts_within_tolerance() {
    for n in [512, 2048] {
        check_curve(&BoundaryCurve::star(0.35, 0.105, 3), n, 10.0);
    }
}

#[test]
fn compressed_matvec_matches_dense() {
    let op = CombinedFieldOperator::new(
        discretize(&BoundaryCurve::star(0.35, 0.105, 3), 1024).unwrap(),
        10.0,
    )
    .unwrap();
    let all: Vec<usize> = (0..1024).collect();
    let dense = op.block(&all, &all);
    let tree = compress(&op, HbsOptions::default()).unwrap();
    let x = random_block(1024, 2, 5);
    let err = (tree.matvec(&x).unwrap() - matmul(&dense, &x)).norm() / matmul(&dense, &x).norm();
    assert!(err < 1e-9, "{err:e}");
}

fn small_system() -> &'static CompressedInverse {
    static CACHE: OnceLock<CompressedInverse> = OnceLock::new();
    CACHE.get_or_init(|| {
        let op = CombinedFieldOperator::new(
            discretize(&BoundaryCurve::star(0.35, 0.105, 3), 256).unwrap(),
            10.0,
        )
        .unwrap();
        let opts = HbsOptions {
            leaf_size: 32,
            ..HbsOptions::default()
        };
        build_inverse(&compress(&op, opts).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inverse_apply_is_linear(seed in 0u64..1000, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let inv = small_system();
        let a = random_block(256, 1, seed);
        let b = random_block(256, 1, seed + 1);
        let s = C64::new(re, im);
        let lhs = inv.apply(&(&a * s + &b)).unwrap();
        let rhs = inv.apply(&a).unwrap() * s + inv.apply(&b).unwrap();
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
    }

    #[test]
    fn block_apply_equals_column_apply(seed in 0u64..1000, cols in 1usize..6) {
        let inv = small_system();
        let x = random_block(256, cols, seed);
        let block = inv.apply(&x).unwrap();
        for c in 0..cols {
            let single = inv.apply(&x.columns(c, 1).into_owned()).unwrap();
            prop_assert!((block.columns(c, 1) - &single).norm() <= 1e-13 * single.norm());
        }
    }

    #[test]
    fn id_reconstructs_low_rank_products(seed in 0u64..1000, rank in 1usize..12, rows in 12usize..40, cols in 12usize..40) {
        let m = matmul(&random_block(rows, rank, seed), &random_block(rank, cols, seed + 7));
        let id = id_decompose(&m, 1e-10);
        prop_assert_eq!(id.rank, rank);
        prop_assert_eq!(id.interp.shape(), (rows, rank));
        let approx = matmul(&id.interp, &select_rows(&m, id.skeleton()));
        prop_assert!((approx - &m).norm() <= 1e-9 * m.norm());
        for (k, &j) in id.skeleton().iter().enumerate() {
            for c in 0..rank {
                let expect = if c == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                prop_assert_eq!(id.interp[(j, c)], expect);
            }
        }
    }

    #[test]
    fn id_rank_never_exceeds_dimensions(seed in 0u64..1000, rows in 1usize..30, cols in 1usize..30, tol_exp in 2i32..14) {
        let m = random_block(rows, cols, seed);
        let id = id_decompose(&m, 10f64.powi(-tol_exp));
        prop_assert!(id.rank <= rows.min(cols));
        let mut sk = id.skeleton().to_vec();
        sk.sort_unstable();
        sk.dedup();
        prop_assert_eq!(sk.len(), id.rank);
    }
}

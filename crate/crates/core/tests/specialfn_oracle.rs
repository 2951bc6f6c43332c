use grating::specialfn::{hankel01, hankel01_asymptotic, hankel01_recurrence};
use num_complex::Complex64;

fn oracle() -> Vec<(f64, [f64; 4])> {
    include_str!("data/hankel_oracle.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
            (v[0], [v[1], v[2], v[3], v[4]])
        })
        .collect()
}

#[test]
fn hankel_matches_high_precision_reference() {
    let mut worst = 0.0f64;
    for (x, [j0, j1, y0, y1]) in oracle() {
        let h = hankel01(x).unwrap();
        let e0 = (h.h0 - Complex64::new(j0, y0)).norm() / Complex64::new(j0, y0).norm();
        let e1 = (h.h1 - Complex64::new(j1, y1)).norm() / Complex64::new(j1, y1).norm();
        worst = worst.max(e0).max(e1);
        assert!(e0 <= 1e-13 && e1 <= 1e-13, "x={x}: {e0:e} {e1:e}");
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn wronskian_on_log_grid() {
    for i in 0..1000 {
        let x = 10f64.powf(-6.0 + 9.0 * i as f64 / 999.0);
        let h = hankel01(x).unwrap();
        let w = h.j1() * h.y0() - h.j0() * h.y1();
        let exact = 2.0 / (std::f64::consts::PI * x);
        assert!(((w - exact) / exact).abs() <= 1e-12, "x={x}");
    }
}

#[test]
fn recurrence_and_asymptotic_overlap() {
    for (x, _) in oracle()
        .into_iter()
        .filter(|(x, _)| (17.0..=20.0).contains(x))
    {
        let a = hankel01_recurrence(x);
        let b = hankel01_asymptotic(x);
        assert!((a.h0 - b.h0).norm() / b.h0.norm() <= 1e-13);
        assert!((a.h1 - b.h1).norm() / b.h1.norm() <= 1e-13);
    }
}

//! Reference implementations used only by tests: Bessel functions of integer
//! order, Mie series for the isolated circle, dense solves of the periodized
//! block system and an unpreconditioned GMRES.
#![allow(dead_code)]

use std::f64::consts::PI;

use grating::geometry::Discretization;
use grating::linalg::{CMat, C64};
use grating::periodic::{Formulation, PeriodicSystem, Solution};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const I: C64 = C64::new(0.0, 1.0);

/// J_0..J_nmax at x > 0 by Miller's backward recurrence normalized with
/// J_0 + 2ΣJ_2k = 1.
pub fn bessel_j(nmax: usize, x: f64) -> Vec<f64> {
    let start = 2
        * ((nmax.max(x as usize) + 30 + (40.0 * (nmax.max(x as usize) as f64)).sqrt() as usize)
            / 2
            + 1);
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / x * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm: f64 = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    vals.truncate(nmax + 1);
    vals.iter().map(|v| v / norm).collect()
}

/// Y_0..Y_nmax from Neumann series for Y_0, Y_1 and forward recurrence.
pub fn bessel_y(nmax: usize, x: f64) -> Vec<f64> {
    let j = bessel_j(2 * (x as usize) + 80, x);
    let log = (0.5 * x).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    for k in 1..(j.len() - 1) / 2 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        s1 += sign * (2 * k + 1) as f64 / (k * (k + 1)) as f64 * j[2 * k + 1];
    }
    let y0 = 2.0 / PI * (log * j[0] - 2.0 * s0);
    let y1 = 2.0 / PI * (-j[0] / x + (log - 1.0) * j[1] - s1);
    let mut y = vec![y0, y1];
    for n in 1..nmax {
        y.push(2.0 * n as f64 / x * y[n] - y[n - 1]);
    }
    y.truncate(nmax + 1);
    y
}

pub fn hankel(nmax: usize, x: f64) -> Vec<C64> {
    bessel_j(nmax, x)
        .into_iter()
        .zip(bessel_y(nmax, x))
        .map(|(a, b)| C64::new(a, b))
        .collect()
}

/// Derivatives from Z'_m = (Z_{m-1} − Z_{m+1})/2, with Z_{-1} = −Z_1.
fn derivs<T>(z: &[T]) -> Vec<T>
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Mul<f64, Output = T>
        + std::ops::Neg<Output = T>,
{
    (0..z.len() - 1)
        .map(|m| {
            if m == 0 {
                -z[1]
            } else {
                (z[m - 1] - z[m + 1]) * 0.5
            }
        })
        .collect()
}

/// Scattering coefficients b_m, m ≥ 0, of the isolated circle for the
/// incident wave e^{iωx·d̂}: u_s = Σ_m b_|m| H_|m|(ωr) e^{im(φ − φ_inc)}.
/// `index` None is sound-soft; Some(n) a dielectric of refractive index n.
pub fn mie_coefficients(omega: f64, radius: f64, index: Option<f64>) -> Vec<C64> {
    mie_series(omega, radius, index).0
}

/// Exterior coefficients b_m and, for a dielectric, interior coefficients
/// c_m of the total field Σ c_|m| J_|m|(nωr) e^{imψ}. Truncated once |b_m|
/// drops below 1e-17.
pub fn mie_series(omega: f64, radius: f64, index: Option<f64>) -> (Vec<C64>, Vec<C64>) {
    let ka = omega * radius;
    let nmax = (ka + 20.0 + 4.0 * ka.cbrt()) as usize;
    let j = bessel_j(nmax + 1, ka);
    let h = hankel(nmax + 1, ka);
    let (jd, hd) = (derivs(&j), derivs(&h));
    let interior = index.map(|n| {
        let jn = bessel_j(nmax + 1, n * ka);
        let jnd = derivs(&jn);
        (n, jn, jnd)
    });
    let (mut bs, mut cs) = (Vec::new(), Vec::new());
    for m in 0..=nmax {
        let im = I.powi(m as i32);
        let (b, c) = match &interior {
            None => (-im * j[m] / h[m], C64::new(0.0, 0.0)),
            Some((n, jn, jnd)) => {
                // [h, −jn; h', −n jn'] [b; c] = −i^m [j; j']
                let det = -h[m] * n * jnd[m] + hd[m] * jn[m];
                let (r0, r1) = (-im * j[m], -im * jd[m]);
                (
                    (r0 * (-n * jnd[m]) + r1 * jn[m]) / det,
                    (h[m] * r1 - hd[m] * r0) / det,
                )
            }
        };
        if m > 10 && b.norm() < 1e-17 {
            break;
        }
        bs.push(b);
        cs.push(c);
    }
    if index.is_none() {
        cs.clear();
    }
    (bs, cs)
}

/// Interior total field of the dielectric circle.
pub fn mie_interior_field(coeffs: &[C64], wavenumber: f64, phi_inc: f64, p: [f64; 2]) -> C64 {
    let r = p[0].hypot(p[1]);
    let psi = p[1].atan2(p[0]) - phi_inc;
    let j = bessel_j(coeffs.len(), wavenumber * r);
    let mut u = coeffs[0] * j[0];
    for m in 1..coeffs.len() {
        u += 2.0 * coeffs[m] * j[m] * (m as f64 * psi).cos();
    }
    u
}

/// Far-field pattern Σ_m b_|m| (−i)^|m| e^{imψ}, ψ = φ − φ_inc, normalized
/// so that u_s ≈ √(2/(πωr)) e^{i(ωr − π/4)} F(φ).
pub fn mie_far_field(coeffs: &[C64], psi: f64) -> C64 {
    let mut f = coeffs[0];
    for (m, b) in coeffs.iter().enumerate().skip(1) {
        f += 2.0 * b * (-I).powi(m as i32) * (m as f64 * psi).cos();
    }
    f
}

/// Scattered field of the isolated circle at a point outside it.
pub fn mie_field(coeffs: &[C64], omega: f64, phi_inc: f64, p: [f64; 2]) -> C64 {
    let r = p[0].hypot(p[1]);
    let psi = p[1].atan2(p[0]) - phi_inc;
    let h = hankel(coeffs.len(), omega * r);
    let mut u = coeffs[0] * h[0];
    for m in 1..coeffs.len() {
        u += 2.0 * coeffs[m] * h[m] * (m as f64 * psi).cos();
    }
    u
}

/// Far field of the combined-field representation (D − iωS)η.
pub fn combined_far_field(disc: &Discretization, omega: f64, eta: &[C64], phi: f64) -> C64 {
    let dir = [phi.cos(), phi.sin()];
    (0..disc.len())
        .map(|j| {
            let (y, n) = (disc.points[j], disc.normals[j]);
            let phase = (-I * omega * (dir[0] * y[0] + dir[1] * y[1])).exp();
            0.25 * omega * (dir[0] * n[0] + dir[1] * n[1] + 1.0) * phase * eta[j] * disc.weight(j)
        })
        .sum()
}

/// Far field of the transmission representation Dτ − Sσ with interlaced
/// densities.
pub fn transmission_far_field(disc: &Discretization, omega: f64, density: &[C64], phi: f64) -> C64 {
    let dir = [phi.cos(), phi.sin()];
    (0..disc.len())
        .map(|j| {
            let (y, n) = (disc.points[j], disc.normals[j]);
            let phase = (-I * omega * (dir[0] * y[0] + dir[1] * y[1])).exp();
            let dn = -I * omega * (dir[0] * n[0] + dir[1] * n[1]);
            0.25 * I * (dn * density[2 * j + 1] - density[2 * j]) * phase * disc.weight(j)
        })
        .sum()
}

/// Dense square matrix solve through nalgebra's LU.
pub fn dense_solve(a: &CMat, b: &CMat) -> CMat {
    a.clone()
        .lu()
        .solve(b)
        .expect("dense reference system is singular")
}

/// The full block matrix [Ã B; C̃ Q], materialized.
pub fn dense_block_matrix<F: Formulation>(sys: &PeriodicSystem<'_, F>) -> CMat {
    let n = sys.size();
    let m2 = sys.q.nrows();
    let mut big = CMat::zeros(n + m2, n + m2);
    big.view_mut((0, 0), (n, n)).copy_from(&sys.dense_atilde());
    big.view_mut((0, n), (n, m2)).copy_from(&sys.b);
    big.view_mut((n, 0), (m2, n)).copy_from(&sys.c);
    big.view_mut((n, n), (m2, m2)).copy_from(&sys.q);
    big
}

/// Dense solve of the block system for one right-hand side on the boundary
/// rows, without Wood augmentation.
pub fn dense_reference<F: Formulation>(sys: &PeriodicSystem<'_, F>, rhs: &CMat) -> (Solution, f64) {
    let n = sys.size();
    let big = dense_block_matrix(sys);
    let mut full = CMat::zeros(big.nrows(), rhs.ncols());
    full.view_mut((0, 0), (n, rhs.ncols())).copy_from(rhs);
    let x = dense_solve(&big, &full);
    let residual = (&big * &x - &full).norm() / full.norm();
    let m2 = big.nrows() - n;
    let sol = Solution {
        eta: x.rows(0, n).into_owned(),
        xi: x.rows(n, m2).into_owned(),
        mode: CMat::zeros(0, rhs.ncols()),
    };
    (sol, residual)
}

/// Iterations unpreconditioned GMRES (no restarts) needs to reduce the
/// residual by `tol`, or None past `max_iter`.
pub fn gmres_iterations(a: &CMat, b: &[C64], tol: f64, max_iter: usize) -> Option<usize> {
    let n = b.len();
    let beta: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut v: Vec<Vec<C64>> = vec![b.iter().map(|z| z / beta).collect()];
    let mut h = vec![vec![C64::new(0.0, 0.0); max_iter]; max_iter + 1];
    let mut cs: Vec<C64> = Vec::new();
    let mut sn: Vec<C64> = Vec::new();
    let mut g = vec![C64::new(0.0, 0.0); max_iter + 1];
    g[0] = C64::new(beta, 0.0);
    for k in 0..max_iter {
        let mut w: Vec<C64> = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)] * v[k][j]).sum())
            .collect();
        for (j, vj) in v.iter().enumerate() {
            let hij: C64 = vj.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
            h[j][k] = hij;
            for (wi, x) in w.iter_mut().zip(vj) {
                *wi -= hij * x;
            }
        }
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        h[k + 1][k] = C64::new(norm, 0.0);
        for j in 0..k {
            let t = cs[j].conj() * h[j][k] + sn[j].conj() * h[j + 1][k];
            h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
            h[j][k] = t;
        }
        let r = (h[k][k].norm_sqr() + h[k + 1][k].norm_sqr()).sqrt();
        let (c, s) = (h[k][k] / r, h[k + 1][k] / r);
        h[k][k] = C64::new(r, 0.0);
        h[k + 1][k] = C64::new(0.0, 0.0);
        g[k + 1] = -s * g[k];
        g[k] = c.conj() * g[k];
        cs.push(c);
        sn.push(s);
        if g[k + 1].norm() <= tol * beta {
            return Some(k + 1);
        }
        v.push(w.iter().map(|z| z / norm).collect());
    }
    None
}

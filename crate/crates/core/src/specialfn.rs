//! Bessel functions of the first and second kind and outgoing Hankel
//! functions of orders 0 and 1, real positive argument.
//!
//! Three branches: the ascending power series for small arguments, Miller
//! backward recurrence with Neumann series for Y in the middle range, and the
//! Hankel asymptotic expansion for large arguments.

use num_complex::Complex64;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const FRAC_2_PI: f64 = std::f64::consts::FRAC_2_PI;
const FRAC_1_PI: f64 = std::f64::consts::FRAC_1_PI;

/// Upper end of the ascending series branch.
pub const SERIES_LIMIT: f64 = 4.0;
/// Lower end of the asymptotic branch.
pub const ASYMPTOTIC_LIMIT: f64 = 17.0;

/// Values of H0^(1)(x) and H1^(1)(x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HankelPair {
    pub h0: Complex64,
    pub h1: Complex64,
}

impl HankelPair {
    pub fn j0(&self) -> f64 {
        self.h0.re
    }
    pub fn j1(&self) -> f64 {
        self.h1.re
    }
    pub fn y0(&self) -> f64 {
        self.h0.im
    }
    pub fn y1(&self) -> f64 {
        self.h1.im
    }
}

/// Checked entry point: H0^(1) and H1^(1) at `x`.
pub fn hankel01(x: f64) -> Result<HankelPair> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!(
            "Hankel argument must be finite and positive, got {x}"
        )));
    }
    Ok(hankel01_unchecked(x))
}

/// Hot-path evaluation without argument validation.
#[inline]
pub fn hankel01_unchecked(x: f64) -> HankelPair {
    if x < SERIES_LIMIT {
        hankel01_series(x)
    } else if x < ASYMPTOTIC_LIMIT {
        hankel01_recurrence(x)
    } else {
        hankel01_asymptotic(x)
    }
}

fn pair(j0: f64, j1: f64, y0: f64, y1: f64) -> HankelPair {
    HankelPair {
        h0: Complex64::new(j0, y0),
        h1: Complex64::new(j1, y1),
    }
}

/// Ascending series. Accurate for x up to a few units.
pub fn hankel01_series(x: f64) -> HankelPair {
    let q = -0.25 * x * x;
    // J0 and the harmonic-number series for Y0
    let mut t = 1.0;
    let mut j0 = 1.0;
    let mut harm = 0.0;
    let mut y0s = 0.0;
    // J1/(x/2) and the digamma series for Y1
    let mut t1 = 1.0;
    let mut j1s = 1.0;
    let mut psi_sum = 1.0 - 2.0 * EULER_GAMMA; // psi(1) + psi(2)
    let mut y1s = psi_sum;
    for k in 1..60 {
        let kf = k as f64;
        t *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        harm += 1.0 / kf;
        psi_sum += 1.0 / kf + 1.0 / (kf + 1.0);
        j0 += t;
        y0s -= harm * t;
        j1s += t1;
        y1s += psi_sum * t1;
        if t.abs() < 1e-18 * j0.abs().max(1e-300) && t1.abs() < 1e-18 {
            break;
        }
    }
    let half = 0.5 * x;
    let lg = half.ln();
    let j1 = half * j1s;
    let y0 = FRAC_2_PI * ((lg + EULER_GAMMA) * j0 + y0s);
    let y1 = -FRAC_2_PI / x + FRAC_2_PI * lg * j1 - FRAC_1_PI * half * y1s;
    pair(j0, j1, y0, y1)
}

/// Miller backward recurrence for J_n normalized by J0 + 2ΣJ_2k = 1, with
/// Neumann series for Y0 and Y1. Intended for moderate x.
pub fn hankel01_recurrence(x: f64) -> HankelPair {
    let start = 2 * ((x + 12.0 + 6.0 * x.cbrt()) as usize / 2);
    let inv = 2.0 / x;
    let mut jp1 = 0.0; // J_{k+1}
    let mut jk = 1e-30; // J_k
    let mut norm = 0.0;
    let mut y0s = 0.0; // Σ_{k≥1} (-1)^k J_{2k}/k
    let mut y1s = 0.0; // Σ_{k≥1} (-1)^k (J_{2k-1} - J_{2k+1})/k
    let mut j1 = 0.0;
    // walk k = start down to 1, producing J_{k-1}
    let mut k = start;
    while k >= 1 {
        let jm1 = (k as f64) * inv * jk - jp1;
        if k % 2 == 0 {
            // jk is J_k with k even
            let half = (k / 2) as f64;
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            norm += 2.0 * jk;
            y0s += sign * jk / half;
            y1s += sign * (jm1 - jp1) / half;
        }
        if k == 1 {
            j1 = jk;
        }
        jp1 = jk;
        jk = jm1;
        if jk.abs() > 1e200 {
            jk *= 1e-200;
            jp1 *= 1e-200;
            norm *= 1e-200;
            y0s *= 1e-200;
            y1s *= 1e-200;
        }
        k -= 1;
    }
    let j0 = jk;
    norm += j0;
    let s = 1.0 / norm;
    let (j0, j1, y0s, y1s) = (j0 * s, j1 * s, y0s * s, y1s * s);
    let lg = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = FRAC_2_PI * lg * j0 - 2.0 * FRAC_2_PI * y0s;
    let y1 = FRAC_2_PI * (lg * j1 - j0 / x) + FRAC_2_PI * y1s;
    pair(j0, j1, y0, y1)
}

/// Hankel asymptotic expansion, summed until the terms stop decreasing.
pub fn hankel01_asymptotic(x: f64) -> HankelPair {
    let sum0 = asymptotic_sum(0.0, x);
    let sum1 = asymptotic_sum(4.0, x);
    // e^{i(x - π/4)} from cos x, sin x of the exact argument
    let (s, c) = x.sin_cos();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let phase = Complex64::new(c, s) * Complex64::new(r, -r);
    let amp = (FRAC_2_PI / x).sqrt();
    let h0 = phase * sum0 * amp;
    // extra factor e^{-iπ/2} = -i for order 1
    let h1 = phase * sum1 * Complex64::new(0.0, -amp);
    HankelPair { h0, h1 }
}

fn asymptotic_sum(mu: f64, x: f64) -> Complex64 {
    // Σ i^k a_k / x^k, a_k = Π_{j=1..k} (μ - (2j-1)²) / (k! 8^k)
    let mut re = 1.0;
    let mut im = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    let scale = 1.0 / (8.0 * x);
    for k in 1..80 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = term * (mu - odd * odd) * scale / kf;
        let mag = next.abs();
        if mag >= prev {
            break;
        }
        term = next;
        prev = mag;
        // i^k cycles through 1, i, -1, -i
        match k & 3 {
            0 => re += term,
            1 => im += term,
            2 => re -= term,
            _ => im -= term,
        }
        if mag < 1e-17 {
            break;
        }
    }
    Complex64::new(re, im)
}

//! Sommerfeld contour quadrature, grating orders and the periodizing blocks
//! coupling the obstacle to the unit-cell walls.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, Lattice, Point};
use crate::linalg::{par_from_fn, CMat};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Shape of the contour k(s) = s - iA·tanh((s - s0)/w) for s ∈ [-K, K].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourShape {
    /// A
    pub height: f64,
    /// w
    pub width: f64,
    /// K
    pub half_width: f64,
}

impl ContourShape {
    /// Shape for plane-wave representations between sources and targets
    /// separated horizontally by at least `gap`, all within |y| ≤ `extent`.
    /// The endpoint integrand then decays like e^{-24}.
    pub fn for_region(omega: f64, gap: f64, extent: f64) -> Result<Self> {
        if !(gap > 0.0) {
            return Err(Error::Geometry(format!(
                "wall clearance must be positive, got {gap}"
            )));
        }
        let height = (0.5 * omega).min(8.0);
        let decay = (24.0 + height * extent.abs()) / gap;
        Ok(ContourShape {
            height,
            width: 0.8 * omega,
            half_width: (omega * omega + decay * decay).sqrt(),
        })
    }
}

/// Trapezoid nodes and weights on the complex k contour.
#[derive(Clone, Debug)]
pub struct SommerfeldContour {
    pub omega: f64,
    pub nodes: Vec<Complex64>,
    /// h·k'(s)
    pub weights: Vec<Complex64>,
    /// sqrt(ω² - k²) continued along the contour.
    pub betas: Vec<Complex64>,
    pub shape: ContourShape,
    /// Real displacement s0 of the axis crossing.
    pub shift: f64,
}

/// Contour resolving interactions at horizontal distance at least d/2 and
/// heights |y| ≤ d.
pub fn build_contour(omega: f64, period: f64, m: usize, s0: f64) -> Result<SommerfeldContour> {
    build_contour_with(
        omega,
        m,
        s0,
        ContourShape::for_region(omega, 0.5 * period, period)?,
    )
}

pub fn build_contour_with(
    omega: f64,
    m: usize,
    s0: f64,
    shape: ContourShape,
) -> Result<SommerfeldContour> {
    if m < 40 || m % 2 != 0 {
        return Err(Error::Config(format!(
            "contour node count must be even and at least 40, got {m}"
        )));
    }
    let ContourShape {
        height,
        width,
        half_width,
    } = shape;
    for branch in [omega, -omega] {
        let clearance = height * ((branch - s0) / width).tanh().abs();
        if clearance < 1e-2 * omega {
            return Err(Error::Contour(format!(
                "contour passes within {clearance:.2e} of branch point {branch}; adjust the displacement"
            )));
        }
    }
    let h = 2.0 * half_width / m as f64;
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let mut betas: Vec<Complex64> = Vec::with_capacity(m);
    for i in 0..m {
        let s = -half_width + h * (i as f64 + 0.5);
        let t = ((s - s0) / width).tanh();
        let k = Complex64::new(s, -height * t);
        let dk = Complex64::new(1.0, -height / width * (1.0 - t * t));
        let mut b = (omega * omega - k * k).sqrt();
        if let Some(prev) = betas.last() {
            if (b - prev).norm() > (b + prev).norm() {
                b = -b;
            }
        }
        nodes.push(k);
        weights.push(h * dk);
        betas.push(b);
    }
    Ok(SommerfeldContour {
        omega,
        nodes,
        weights,
        betas,
        shape,
        shift: s0,
    })
}

impl SommerfeldContour {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature of the plane-wave representation of G(x, 0), valid for x_1 ≠ 0.
    pub fn spectral_green(&self, x: Point) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..self.len() {
            let (k, b) = (self.nodes[j], self.betas[j]);
            s += self.weights[j] * (I * k * x[1]).exp() * (I * b * x[0].abs()).exp() / b;
        }
        I / (4.0 * PI) * s
    }
}

/// α = e^{iωd cosθ}
pub fn bloch_phase(omega: f64, theta: f64, period: f64) -> Complex64 {
    Complex64::from_polar(1.0, omega * period * theta.cos())
}

/// sqrt(ω² - κ²) as a non-negative real or positive imaginary number, with a
/// grazing order snapped to exactly zero.
pub fn vertical_wavenumber(omega: f64, kappa: f64) -> Complex64 {
    let gap = omega - kappa.abs();
    if gap.abs() <= 8.0 * f64::EPSILON * omega {
        return Complex64::new(0.0, 0.0);
    }
    let q = (omega - kappa) * (omega + kappa);
    if q >= 0.0 {
        Complex64::new(q.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-q).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct GratingOrders {
    pub omega: f64,
    pub theta: f64,
    pub period: f64,
    pub orders: Vec<i64>,
    /// κ_n = ω cosθ + 2πn/d
    pub kappa: Vec<f64>,
    /// k_n
    pub kz: Vec<Complex64>,
    pub propagating: Vec<bool>,
}

/// Orders with |n| ≤ window.
pub fn grating_orders(omega: f64, theta: f64, period: f64, window: usize) -> Result<GratingOrders> {
    if !(theta > -PI && theta < 0.0) {
        return Err(Error::Domain(format!(
            "incidence angle must lie in (-π, 0), got {theta}"
        )));
    }
    let w = window as i64;
    let orders: Vec<i64> = (-w..=w).collect();
    let base = omega * theta.cos();
    let kappa: Vec<f64> = orders
        .iter()
        .map(|&n| base + 2.0 * PI * n as f64 / period)
        .collect();
    let kz: Vec<Complex64> = kappa
        .iter()
        .map(|&k| vertical_wavenumber(omega, k))
        .collect();
    let propagating = kz.iter().map(|k| k.im == 0.0).collect();
    Ok(GratingOrders {
        omega,
        theta,
        period,
        orders,
        kappa,
        kz,
        propagating,
    })
}

impl GratingOrders {
    pub fn index_of(&self, n: i64) -> Option<usize> {
        self.orders.iter().position(|&m| m == n)
    }

    pub fn kz_of(&self, n: i64) -> Option<Complex64> {
        self.index_of(n).map(|i| self.kz[i])
    }
}

/// Window covering every propagating order plus evanescent ones up to
/// |κ_n| ≤ ω + 10/d.
pub fn default_window(omega: f64, period: f64) -> usize {
    ((omega + 10.0 / period) * period / (2.0 * PI)).ceil() as usize + 1
}

fn check_inside_strip(disc: &Discretization, period: f64) -> Result<()> {
    if disc.max_abs_x() >= 0.5 * period {
        return Err(Error::Geometry(
            "obstacle reaches the unit-cell walls".into(),
        ));
    }
    Ok(())
}

/// Wall-to-target operator at arbitrary points for the representation
/// u = Ŝ_L μ + α Ŝ_R μ + D̂_L ν + α D̂_R ν.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WallFieldKind {
    Value,
    /// ∂/∂y of the field.
    DerivY,
}

/// sign(x - x_L) with the interior limit taken on the wall itself.
#[inline]
fn side_left(x: f64, period: f64) -> f64 {
    if x + 0.5 * period >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn side_right(x: f64, period: f64) -> f64 {
    if x - 0.5 * period > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-point wall plane waves e^{iky}e^{iβ|x - x_W|} and their sides.
#[inline]
fn wall_waves(
    p: Point,
    k: Complex64,
    b: Complex64,
    period: f64,
) -> (Complex64, Complex64, f64, f64) {
    let ey = (I * k * p[1]).exp();
    let el = ey * (I * b * (p[0] + 0.5 * period).abs()).exp();
    let er = ey * (I * b * (p[0] - 0.5 * period).abs()).exp();
    (el, er, side_left(p[0], period), side_right(p[0], period))
}

/// Field of the wall densities at `points` (rows) from the 2M wall unknowns [μ; ν].
pub fn wall_field(
    points: &[Point],
    contour: &SommerfeldContour,
    period: f64,
    alpha: Complex64,
    kind: WallFieldKind,
) -> CMat {
    let m = contour.len();
    par_from_fn(points.len(), 2 * m, |i, col| {
        let j = col % m;
        let (k, b, w) = (contour.nodes[j], contour.betas[j], contour.weights[j]);
        let (el, er, sl, sr) = wall_waves(points[i], k, b, period);
        let v = if col < m {
            0.5 * I * (el + alpha * er) / b
        } else {
            0.5 * (sl * el + alpha * sr * er)
        };
        let v = v * w;
        match kind {
            WallFieldKind::Value => v,
            WallFieldKind::DerivY => I * k * v,
        }
    })
}

/// Normal derivative of the wall field at points with given normals.
pub fn wall_field_normal(
    points: &[Point],
    normals: &[Point],
    contour: &SommerfeldContour,
    period: f64,
    alpha: Complex64,
) -> CMat {
    let m = contour.len();
    par_from_fn(points.len(), 2 * m, |i, col| {
        let j = col % m;
        let (k, b, w) = (contour.nodes[j], contour.betas[j], contour.weights[j]);
        let (el, er, sl, sr) = wall_waves(points[i], k, b, period);
        let n = normals[i];
        let dl = (I * b * sl * n[0] + I * k * n[1]) * el;
        let dr = (I * b * sr * n[0] + I * k * n[1]) * er;
        let v = if col < m {
            0.5 * I * (dl + alpha * dr) / b
        } else {
            0.5 * (sl * dl + alpha * sr * dr)
        };
        v * w
    })
}

/// B: wall unknowns to the obstacle boundary nodes (N × 2M).
pub fn assemble_b(
    disc: &Discretization,
    contour: &SommerfeldContour,
    lattice: &Lattice,
    alpha: Complex64,
) -> Result<CMat> {
    check_inside_strip(disc, lattice.period)?;
    Ok(wall_field(
        &disc.points,
        contour,
        lattice.period,
        alpha,
        WallFieldKind::Value,
    ))
}

/// Fourier transforms along the wall x = x0 of the four layer kernels of a
/// source copy, each times the boundary weight: (Ŝ, D̂, D̂*, T̂) as M × N blocks.
pub struct WallTransforms {
    pub single: CMat,
    pub double: CMat,
    pub adjoint: CMat,
    pub hyper: CMat,
}

pub fn wall_transforms(
    source: &Discretization,
    contour: &SommerfeldContour,
    x0: f64,
) -> WallTransforms {
    let m = contour.len();
    let n = source.len();
    let c = 1.0 / (4.0 * PI);
    let waves = par_from_fn(m, n, |j, s| {
        let (k, b) = (contour.nodes[j], contour.betas[j]);
        let p = source.points[s];
        c * (-I * k * p[1]).exp() * (I * b * (p[0] - x0).abs()).exp() * source.weight(s)
    });
    let side = |s: usize| {
        if source.points[s][0] - x0 >= 0.0 {
            1.0
        } else {
            -1.0
        }
    };
    let single = CMat::from_fn(m, n, |j, s| I * waves[(j, s)] / contour.betas[j]);
    let double = CMat::from_fn(m, n, |j, s| {
        let nv = source.normals[s];
        waves[(j, s)] * (-side(s) * nv[0] + contour.nodes[j] / contour.betas[j] * nv[1])
    });
    let adjoint = CMat::from_fn(m, n, |j, s| waves[(j, s)] * side(s));
    let hyper = CMat::from_fn(m, n, |j, s| {
        let nv = source.normals[s];
        I * waves[(j, s)] * (contour.betas[j] * nv[0] - contour.nodes[j] * side(s) * nv[1])
    });
    WallTransforms {
        single,
        double,
        adjoint,
        hyper,
    }
}

/// Checks that the image copies used by C lie on the correct side of the left wall.
pub(crate) fn check_images(disc: &Discretization, lattice: &Lattice, images: usize) -> Result<()> {
    check_inside_strip(disc, lattice.period)?;
    if images > 2 {
        return Err(Error::Config(format!(
            "neighbor image count must be 0, 1 or 2, got {images}"
        )));
    }
    Ok(())
}

/// C̃: obstacle density to wall mismatch rows [value; derivative] (2M × N),
/// from the extreme images +P (seen from the left wall) and -(P+1).
pub fn assemble_c(
    disc: &Discretization,
    contour: &SommerfeldContour,
    lattice: &Lattice,
    alpha: Complex64,
    images: usize,
) -> Result<CMat> {
    check_images(disc, lattice, images)?;
    let d = lattice.period;
    let x0 = -0.5 * d;
    let near = disc.translate(images as i64, lattice);
    let far = disc.translate(-(images as i64) - 1, lattice);
    let a = wall_transforms(&near, contour, x0);
    let b = wall_transforms(&far, contour, x0);
    let fa = alpha.powi(images as i32);
    let fb = alpha.powi(-(images as i32) - 1);
    let w = Complex64::new(0.0, contour.omega);
    let m = contour.len();
    let mut out = CMat::zeros(2 * m, disc.len());
    // value rows: D̂ - iωŜ ; derivative rows: T̂ - iωD̂*
    let value = (&a.double - &a.single * w) * fa - (&b.double - &b.single * w) * fb;
    let deriv = (&a.hyper - &a.adjoint * w) * fa - (&b.hyper - &b.adjoint * w) * fb;
    out.rows_mut(0, m).copy_from(&value);
    out.rows_mut(m, m).copy_from(&deriv);
    Ok(out)
}

/// Diagonal coefficients (a, b, c) of Q at every node:
/// Q = [[a, 1 - b], [b - 1, c]] blockwise.
pub fn q_coefficients(
    contour: &SommerfeldContour,
    period: f64,
    alpha: Complex64,
) -> Vec<(Complex64, Complex64, Complex64)> {
    let sum = alpha + 1.0 / alpha;
    let diff = alpha - 1.0 / alpha;
    contour
        .betas
        .iter()
        .map(|&b| {
            let e = 0.5 * (I * b * period).exp();
            (e * I * diff / b, e * sum, e * I * diff * b)
        })
        .collect()
}

/// Q: wall unknowns to wall mismatch rows (2M × 2M).
pub fn assemble_q(contour: &SommerfeldContour, period: f64, alpha: Complex64) -> CMat {
    let m = contour.len();
    let mut q = CMat::zeros(2 * m, 2 * m);
    for (j, (a, b, c)) in q_coefficients(contour, period, alpha)
        .into_iter()
        .enumerate()
    {
        q[(j, j)] = a;
        q[(j, m + j)] = 1.0 - b;
        q[(m + j, j)] = b - 1.0;
        q[(m + j, m + j)] = c;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{discretize, BoundaryCurve};
    use crate::kernels::green;

    #[test]
    fn contour_symmetry_and_quadrants() {
        let c = build_contour(10.0, 1.0, 100, 0.0).unwrap();
        for j in 0..100 {
            let k = c.nodes[j];
            let mirror = c.nodes[99 - j];
            assert!((k + mirror).norm() < 1e-12);
        }
        assert!(c.nodes[0].im > 0.0 && c.nodes[99].im < 0.0);
        assert!(build_contour(10.0, 1.0, 39, 0.0).is_err());
        assert!(build_contour(10.0, 1.0, 100, 10.0).is_err());
    }

    #[test]
    fn reproduces_free_space_green() {
        let c = build_contour(10.0, 1.0, 120, 0.0).unwrap();
        let x = [1.0, 0.3];
        let e = (c.spectral_green(x) - green(10.0, x, [0.0, 0.0]).unwrap()).norm();
        assert!(e < 1e-12, "{e}");
    }

    #[test]
    fn orders_of_the_star_setup() {
        let g = grating_orders(10.0, -PI / 5.0, 1.0, 5).unwrap();
        let k0 = g.kz_of(0).unwrap();
        assert!((k0.re - 10.0 * (PI / 5.0).sin()).abs() < 1e-12 && k0.im == 0.0);
        let prop: Vec<i64> = g
            .orders
            .iter()
            .zip(&g.propagating)
            .filter(|(_, &p)| p)
            .map(|(n, _)| *n)
            .collect();
        assert_eq!(prop, vec![-2, -1, 0]);
        for w in g.kappa.windows(2) {
            assert!((w[1] - w[0] - 2.0 * PI).abs() < 1e-12);
        }
        assert!(grating_orders(10.0, 0.3, 1.0, 5).is_err());
    }

    #[test]
    fn wood_order_is_exactly_grazing() {
        let omega = 30.0;
        let theta = -(1.0 - 2.0 * PI / omega).acos();
        let g = grating_orders(omega, theta, 1.0, 8).unwrap();
        assert_eq!(g.kz_of(1).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn q_special_values() {
        let c = build_contour(10.0, 1.0, 90, 0.0).unwrap();
        let q1 = assemble_q(&c, 1.0, Complex64::new(1.0, 0.0));
        let m = 90;
        for j in 0..m {
            let e = (I * c.betas[j]).exp();
            assert!(q1[(j, j)].norm() < 1e-15 && q1[(m + j, m + j)].norm() < 1e-15);
            assert!((q1[(j, m + j)] - (1.0 - e)).norm() < 1e-14);
            assert!((q1[(m + j, j)] - (e - 1.0)).norm() < 1e-14);
        }
        // i(α - 1/α) = -2 at α = i
        let qi = q_coefficients(&c, 1.0, I);
        let (a, _, _) = qi[0];
        let e = 0.5 * (I * c.betas[0]).exp();
        assert!((a - e * -2.0 / c.betas[0]).norm() < 1e-15);
        // evanescent ends: Q reduces to the constant coupling
        let qa = assemble_q(&c, 1.0, Complex64::from_polar(1.0, 0.7));
        assert!(qa[(0, 0)].norm() < 1e-14 && (qa[(0, m)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn b_rejects_wall_crossing() {
        let disc = discretize(&BoundaryCurve::circle(0.6), 32).unwrap();
        let c = build_contour(10.0, 1.0, 90, 0.0).unwrap();
        assert!(assemble_b(
            &disc,
            &c,
            &Lattice::new(1.0).unwrap(),
            Complex64::new(1.0, 0.0)
        )
        .is_err());
    }
}

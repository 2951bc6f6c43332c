//! Free-space Helmholtz kernels and Nyström matrices of the combined-field
//! operator D - iωS, with Kapur-Rokhlin corrections on the self block.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, Point};
use crate::linalg::{par_from_fn, CMat};
use crate::specialfn::hankel01_unchecked;

/// Sixth-order Kapur-Rokhlin end corrections for a log singularity.
pub const KR_GAMMA: [f64; 6] = [
    4.967362978287758,
    -16.20501504859126,
    25.85153761832639,
    -22.22599466791883,
    9.930104998037539,
    -1.817995878141594,
];

/// Ring weights R_0..R_6: R_0 = 0, R_j = 1 + γ_j; every other offset has weight 1.
pub fn ring_weights() -> [f64; 7] {
    let mut r = [0.0; 7];
    for j in 1..7 {
        r[j] = 1.0 + KR_GAMMA[j - 1];
    }
    r
}

const RING: [f64; 7] = [
    0.0,
    1.0 + KR_GAMMA[0],
    1.0 + KR_GAMMA[1],
    1.0 + KR_GAMMA[2],
    1.0 + KR_GAMMA[3],
    1.0 + KR_GAMMA[4],
    1.0 + KR_GAMMA[5],
];

/// Weight R_{|n-m| mod N} for a node pair on a closed N-point curve.
#[inline]
pub fn ring_weight(n: usize, m: usize, count: usize) -> f64 {
    let d = if n >= m { n - m } else { m - n };
    let d = d.min(count - d);
    if d < 7 {
        RING[d]
    } else {
        1.0
    }
}

const I: Complex64 = Complex64::new(0.0, 1.0);

fn check_distinct(x: Point, y: Point) -> Result<f64> {
    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
    if r == 0.0 {
        return Err(Error::Domain("coincident target and source".into()));
    }
    Ok(r)
}

/// G(x, y) = (i/4) H0(ω|x - y|)
pub fn green(omega: f64, x: Point, y: Point) -> Result<Complex64> {
    let r = check_distinct(x, y)?;
    Ok(0.25 * I * hankel01_unchecked(omega * r).h0)
}

/// ∂G/∂n_y = (iω/4) H1(ω r) ((x - y)·n_y)/r
pub fn green_normal_deriv(omega: f64, x: Point, y: Point, ny: Point) -> Result<Complex64> {
    let r = check_distinct(x, y)?;
    let dn = (x[0] - y[0]) * ny[0] + (x[1] - y[1]) * ny[1];
    Ok(0.25 * I * omega * hankel01_unchecked(omega * r).h1 * (dn / r))
}

/// ∂G/∂n_y - iωG without the coincidence check.
#[inline]
pub fn combined(omega: f64, x: Point, y: Point, ny: Point) -> Complex64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let r = dx.hypot(dy);
    let h = hankel01_unchecked(omega * r);
    let dn = dx * ny[0] + dy * ny[1];
    0.25 * I * omega * (h.h1 * (dn / r) - I * h.h0)
}

/// Derivative of the combined kernel with respect to the target's y coordinate.
#[inline]
pub fn combined_dy(omega: f64, x: Point, y: Point, ny: Point) -> Complex64 {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let r = dx.hypot(dy);
    let z = omega * r;
    let h = hankel01_unchecked(z);
    let dn = dx * ny[0] + dy * ny[1];
    let gy = -0.25 * I * omega * h.h1 * (dy / r);
    let h1p = h.h0 - h.h1 / z;
    let fy = omega * h1p * (dy / r) * (dn / r) + h.h1 * (ny[1] / r - dn * dy / (r * r * r));
    0.25 * I * omega * fy - I * omega * gy
}

/// The four layer kernels at wavenumber k between a target (x, n_x) and a
/// source (y, n_y), x ≠ y.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerKernels {
    /// G
    pub single: Complex64,
    /// ∂G/∂n_y
    pub double: Complex64,
    /// ∂G/∂n_x
    pub adjoint: Complex64,
    /// ∂²G/∂n_x∂n_y
    pub hyper: Complex64,
}

#[inline]
pub fn layer_kernels(k: f64, x: Point, nx: Point, y: Point, ny: Point) -> LayerKernels {
    let dx = x[0] - y[0];
    let dy = x[1] - y[1];
    let r = dx.hypot(dy);
    let h = hankel01_unchecked(k * r);
    let dn_y = dx * ny[0] + dy * ny[1];
    let dn_x = dx * nx[0] + dy * nx[1];
    let nn = nx[0] * ny[0] + nx[1] * ny[1];
    let c = 0.25 * I * k;
    LayerKernels {
        single: 0.25 * I * h.h0,
        double: c * h.h1 * (dn_y / r),
        adjoint: -c * h.h1 * (dn_x / r),
        hyper: c * ((k * h.h0 / r - 2.0 * h.h1 / (r * r)) * (dn_x * dn_y / r) + h.h1 * (nn / r)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockRole {
    SelfInteraction,
    /// Source copy displaced by the given vector relative to the targets.
    Neighbor(Point),
}

#[derive(Clone, Debug)]
pub struct NystromBlock {
    pub entries: CMat,
    pub role: BlockRole,
    pub omega: f64,
}

/// Combined-field self-interaction matrix with Kapur-Rokhlin weights and the
/// jump term 1/2 on the diagonal.
pub fn assemble_self(disc: &Discretization, omega: f64) -> Result<NystromBlock> {
    let op = CombinedFieldOperator::new(disc.clone(), omega)?;
    let n = disc.len();
    let entries = par_from_fn(n, n, |i, j| op.entry(i, j));
    Ok(NystromBlock {
        entries,
        role: BlockRole::SelfInteraction,
        omega,
    })
}

/// Plain trapezoid matrix of the combined-field kernel from `source` nodes to
/// `target` nodes.
pub fn assemble_neighbor(
    target: &Discretization,
    source: &Discretization,
    omega: f64,
) -> Result<NystromBlock> {
    if target.min_distance(source) <= 0.0 {
        return Err(Error::Geometry("target and source nodes overlap".into()));
    }
    let entries = par_from_fn(target.len(), source.len(), |i, j| {
        combined(omega, target.points[i], source.points[j], source.normals[j]) * source.weight(j)
    });
    let shift = [
        source.center[0] - target.center[0],
        source.center[1] - target.center[1],
    ];
    Ok(NystromBlock {
        entries,
        role: BlockRole::Neighbor(shift),
        omega,
    })
}

/// Equispaced points on a circle used as equivalent sources or check targets.
#[derive(Clone, Debug)]
pub struct ProxyCircle {
    pub center: Point,
    pub radius: f64,
    pub points: Vec<Point>,
    /// Outward normals.
    pub normals: Vec<Point>,
    /// Arc-length weight 2πr/count.
    pub weight: f64,
}

impl ProxyCircle {
    pub fn new(center: Point, radius: f64, count: usize) -> Self {
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        for k in 0..count {
            let (s, c) = (2.0 * PI * k as f64 / count as f64).sin_cos();
            points.push([center[0] + radius * c, center[1] + radius * s]);
            normals.push([c, s]);
        }
        ProxyCircle {
            center,
            radius,
            points,
            normals,
            weight: 2.0 * PI * radius / count as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Matrix entries on demand, with the far-field surrogates needed for
/// proxy-based compression.
pub trait EntryOracle: Sync {
    fn size(&self) -> usize;
    /// Location of the boundary node carrying unknown `i`.
    fn location(&self, i: usize) -> Point;
    fn block(&self, rows: &[usize], cols: &[usize]) -> CMat;
    /// Response at `rows` to equivalent sources on the proxy circle: spans
    /// every interaction from unknowns outside the circle.
    fn from_proxies(&self, rows: &[usize], proxies: &ProxyCircle) -> CMat;
    /// Fields of `cols` observed on the proxy circle: spans every interaction
    /// toward unknowns outside the circle.
    fn to_proxies(&self, proxies: &ProxyCircle, cols: &[usize]) -> CMat;
    /// Largest wavenumber present in the kernels, used to size proxy circles.
    fn max_wavenumber(&self) -> f64 {
        0.0
    }
}

/// Proxy count resolving fields of wavenumber `k` on a circle of radius `r`.
pub fn proxy_count(k: f64, r: f64, base: usize) -> usize {
    base.max((2.0 * k * r).ceil() as usize + 30)
}

/// Entry oracle for the Kapur-Rokhlin corrected combined-field self block.
#[derive(Clone, Debug)]
pub struct CombinedFieldOperator {
    pub disc: Discretization,
    pub omega: f64,
    weights: Vec<f64>,
}

impl CombinedFieldOperator {
    pub fn new(disc: Discretization, omega: f64) -> Result<Self> {
        if disc.len() <= 12 {
            return Err(Error::Config(format!(
                "self block needs more than 12 nodes, got {}",
                disc.len()
            )));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Config(format!(
                "frequency must be positive, got {omega}"
            )));
        }
        let weights = (0..disc.len()).map(|j| disc.weight(j)).collect();
        Ok(CombinedFieldOperator {
            disc,
            omega,
            weights,
        })
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            return Complex64::new(0.5, 0.0);
        }
        let n = self.disc.len();
        let k = combined(
            self.omega,
            self.disc.points[i],
            self.disc.points[j],
            self.disc.normals[j],
        );
        k * (ring_weight(i, j, n) * self.weights[j])
    }
}

impl EntryOracle for CombinedFieldOperator {
    fn size(&self) -> usize {
        self.disc.len()
    }

    fn location(&self, i: usize) -> Point {
        self.disc.points[i]
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> CMat {
        par_from_fn(rows.len(), cols.len(), |a, b| self.entry(rows[a], cols[b]))
    }

    fn from_proxies(&self, rows: &[usize], proxies: &ProxyCircle) -> CMat {
        par_from_fn(rows.len(), proxies.len(), |a, b| {
            combined(
                self.omega,
                self.disc.points[rows[a]],
                proxies.points[b],
                proxies.normals[b],
            ) * proxies.weight
        })
    }

    fn to_proxies(&self, proxies: &ProxyCircle, cols: &[usize]) -> CMat {
        par_from_fn(proxies.len(), cols.len(), |a, b| {
            let j = cols[b];
            combined(
                self.omega,
                proxies.points[a],
                self.disc.points[j],
                self.disc.normals[j],
            ) * self.weights[j]
        })
    }

    fn max_wavenumber(&self) -> f64 {
        self.omega
    }
}

//! Dielectric obstacles: exterior field u = Dτ − Sσ at wavenumber ω, interior
//! field D₁τ − S₁σ at nω, matched in value and normal derivative across the
//! boundary. Unknowns are interlaced per node as [σ_j, τ_j]; equation rows
//! likewise as [normal-derivative condition, value condition].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, Lattice, Point};
use crate::kernels::{layer_kernels, ring_weight, EntryOracle, LayerKernels, ProxyCircle};
use crate::linalg::{par_from_fn, CMat};
use crate::periodic::Formulation;
use crate::sommerfeld::{
    assemble_b, check_images, wall_field_normal, wall_transforms, SommerfeldContour, WallFieldKind,
};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Second-kind transmission operator on one obstacle, 2N × 2N.
#[derive(Clone, Debug)]
pub struct TransmissionOperator {
    pub disc: Discretization,
    pub omega: f64,
    /// Refractive index n of the obstacle.
    pub index: f64,
    weights: Vec<f64>,
}

impl TransmissionOperator {
    pub fn new(disc: Discretization, omega: f64, index: f64) -> Result<Self> {
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
        if !(index.is_finite() && index > 0.0) {
            return Err(Error::Config(format!(
                "refractive index must be positive, got {index}"
            )));
        }
        if index == 1.0 {
            return Err(Error::Config(
                "refractive index 1 leaves nothing to scatter".into(),
            ));
        }
        let weights = (0..disc.len()).map(|j| disc.weight(j)).collect();
        Ok(TransmissionOperator {
            disc,
            omega,
            index,
            weights,
        })
    }

    pub fn interior_wavenumber(&self) -> f64 {
        self.index * self.omega
    }

    /// Entry of the interlaced self block.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let (i, j) = (row / 2, col / 2);
        if i == j {
            return if row % 2 == col % 2 {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            };
        }
        let d = &self.disc;
        let (x, nx, y, ny) = (d.points[i], d.normals[i], d.points[j], d.normals[j]);
        let w = ring_weight(i, j, d.len()) * self.weights[j];
        let outer = layer_kernels(self.omega, x, nx, y, ny);
        let inner = layer_kernels(self.interior_wavenumber(), x, nx, y, ny);
        let diff = LayerKernels {
            single: outer.single - inner.single,
            double: outer.double - inner.double,
            adjoint: outer.adjoint - inner.adjoint,
            hyper: outer.hyper - inner.hyper,
        };
        pick(&diff, row % 2, col % 2) * w
    }

    /// Interior field D₁τ − S₁σ at points strictly inside the obstacle, for
    /// one interlaced density column.
    pub fn interior_field(
        &self,
        points: &[Point],
        density: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        if density.len() != self.size() {
            return Err(Error::Dimension(format!(
                "density has {} entries, expected {}",
                density.len(),
                self.size()
            )));
        }
        let d = &self.disc;
        let k = self.interior_wavenumber();
        points
            .iter()
            .map(|&p| {
                if !d.contains(p) {
                    return Err(Error::Domain(format!(
                        "point {p:?} is outside the obstacle"
                    )));
                }
                Ok((0..d.len())
                    .map(|s| {
                        let lk = layer_kernels(k, p, [0.0, 0.0], d.points[s], d.normals[s]);
                        (lk.double * density[2 * s + 1] - lk.single * density[2 * s])
                            * self.weights[s]
                    })
                    .sum())
            })
            .collect()
    }

    /// Row functional of kind `row_kind` applied to the field of the combined
    /// source D − ikS at (y, n_y).
    fn combined_rows(
        k: f64,
        x: Point,
        nx: Point,
        y: Point,
        ny: Point,
        row_kind: usize,
    ) -> Complex64 {
        let lk = layer_kernels(k, x, nx, y, ny);
        if row_kind == 0 {
            lk.hyper - I * k * lk.adjoint
        } else {
            lk.double - I * k * lk.single
        }
    }
}

/// Kernel for an equation row kind (0 derivative, 1 value) and density kind
/// (0 σ, 1 τ): derivative rows −D*σ + Tτ, value rows −Sσ + Dτ.
#[inline]
fn pick(k: &LayerKernels, row_kind: usize, col_kind: usize) -> Complex64 {
    match (row_kind, col_kind) {
        (0, 0) => -k.adjoint,
        (0, _) => k.hyper,
        (_, 0) => -k.single,
        _ => k.double,
    }
}

impl EntryOracle for TransmissionOperator {
    fn size(&self) -> usize {
        2 * self.disc.len()
    }

    fn location(&self, i: usize) -> Point {
        self.disc.points[i / 2]
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> CMat {
        par_from_fn(rows.len(), cols.len(), |a, b| self.entry(rows[a], cols[b]))
    }

    /// Two columns per proxy: combined sources at ω and at nω.
    fn from_proxies(&self, rows: &[usize], proxies: &ProxyCircle) -> CMat {
        let d = &self.disc;
        let ks = [self.omega, self.interior_wavenumber()];
        par_from_fn(rows.len(), 2 * proxies.len(), |a, b| {
            let r = rows[a];
            let (p, k) = (b / 2, ks[b % 2]);
            let i = r / 2;
            Self::combined_rows(
                k,
                d.points[i],
                d.normals[i],
                proxies.points[p],
                proxies.normals[p],
                r % 2,
            ) * proxies.weight
        })
    }

    /// Two rows per proxy: impedance observations ∂_n u − iku of the ω and
    /// nω fields of each density column.
    fn to_proxies(&self, proxies: &ProxyCircle, cols: &[usize]) -> CMat {
        let d = &self.disc;
        let ks = [self.omega, self.interior_wavenumber()];
        par_from_fn(2 * proxies.len(), cols.len(), |a, b| {
            let c = cols[b];
            let (p, k) = (a / 2, ks[a % 2]);
            let j = c / 2;
            let lk = layer_kernels(
                k,
                proxies.points[p],
                proxies.normals[p],
                d.points[j],
                d.normals[j],
            );
            let v = if c % 2 == 0 {
                lk.adjoint - I * k * lk.single
            } else {
                lk.hyper - I * k * lk.double
            };
            v * self.weights[j]
        })
    }

    fn max_wavenumber(&self) -> f64 {
        self.omega.max(self.interior_wavenumber())
    }
}

impl Formulation for TransmissionOperator {
    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn omega(&self) -> f64 {
        self.omega
    }

    fn unknowns_per_node(&self) -> usize {
        2
    }

    fn neighbor_block(&self, rows: &[usize], shift: f64) -> CMat {
        let d = &self.disc;
        par_from_fn(rows.len(), self.size(), |a, c| {
            let (i, s) = (rows[a] / 2, c / 2);
            let y = [d.points[s][0] + shift, d.points[s][1]];
            let lk = layer_kernels(self.omega, d.points[i], d.normals[i], y, d.normals[s]);
            pick(&lk, rows[a] % 2, c % 2) * self.weights[s]
        })
    }

    fn exterior_response(&self, points: &[Point], normals: &[Point], weights: &[f64]) -> CMat {
        let d = &self.disc;
        par_from_fn(self.size(), 2 * points.len(), |r, c| {
            let (i, s) = (r / 2, c / 2);
            let lk = layer_kernels(self.omega, d.points[i], d.normals[i], points[s], normals[s]);
            pick(&lk, r % 2, c % 2) * weights[s]
        })
    }

    fn wall_coupling(
        &self,
        contour: &SommerfeldContour,
        lattice: &Lattice,
        alpha: Complex64,
    ) -> Result<CMat> {
        let value = assemble_b(&self.disc, contour, lattice, alpha)?;
        let deriv = wall_field_normal(
            &self.disc.points,
            &self.disc.normals,
            contour,
            lattice.period,
            alpha,
        );
        Ok(CMat::from_fn(self.size(), value.ncols(), |r, c| {
            if r % 2 == 0 {
                deriv[(r / 2, c)]
            } else {
                value[(r / 2, c)]
            }
        }))
    }

    fn wall_mismatch(
        &self,
        contour: &SommerfeldContour,
        lattice: &Lattice,
        alpha: Complex64,
        images: usize,
    ) -> Result<CMat> {
        check_images(&self.disc, lattice, images)?;
        let x0 = -0.5 * lattice.period;
        let near = wall_transforms(&self.disc.translate(images as i64, lattice), contour, x0);
        let far = wall_transforms(
            &self.disc.translate(-(images as i64) - 1, lattice),
            contour,
            x0,
        );
        let fa = alpha.powi(images as i32);
        let fb = alpha.powi(-(images as i32) - 1);
        let m = contour.len();
        Ok(CMat::from_fn(2 * m, self.size(), |r, c| {
            let (j, s) = (r % m, c / 2);
            let part = |t: &crate::sommerfeld::WallTransforms| match (r < m, c % 2 == 0) {
                (true, true) => -t.single[(j, s)],
                (true, false) => t.double[(j, s)],
                (false, true) => -t.adjoint[(j, s)],
                (false, false) => t.hyper[(j, s)],
            };
            part(&near) * fa - part(&far) * fb
        }))
    }

    fn plane_wave_data(&self, kappa: f64, kz: Complex64) -> CMat {
        let d = &self.disc;
        CMat::from_fn(self.size(), 1, |r, _| {
            let (p, n) = (d.points[r / 2], d.normals[r / 2]);
            let u = (I * (kappa * p[0] + kz * p[1])).exp();
            if r % 2 == 0 {
                I * (kappa * n[0] + kz * n[1]) * u
            } else {
                u
            }
        })
    }

    fn field_operator(&self, points: &[Point], shift: f64, kind: WallFieldKind) -> CMat {
        let d = &self.disc;
        // (0, 1) as target normal turns the adjoint and hypersingular kernels into ∂/∂y
        let (row_kind, normal) = match kind {
            WallFieldKind::Value => (1, [0.0, 0.0]),
            WallFieldKind::DerivY => (0, [0.0, 1.0]),
        };
        par_from_fn(points.len(), self.size(), |i, c| {
            let s = c / 2;
            let y = [d.points[s][0] + shift, d.points[s][1]];
            let lk = layer_kernels(self.omega, points[i], normal, y, d.normals[s]);
            pick(&lk, row_kind, c % 2) * self.weights[s]
        })
    }
}

//! Scattered-field evaluation, Bragg amplitudes on horizontal lines and the
//! flux balance.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::C64;
use crate::periodic::{density_field, Formulation, PeriodicSystem, Solution};
use crate::sommerfeld::{vertical_wavenumber, wall_field, WallFieldKind};

const I: C64 = C64::new(0.0, 1.0);

/// Points closer to the boundary than this many node spacings get flagged.
const NEAR_SPACINGS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldValues {
    pub values: Vec<C64>,
    /// y-derivatives at the same points.
    pub dy: Vec<C64>,
    /// Point within a few node spacings of an obstacle copy.
    pub low_accuracy: Vec<bool>,
}

/// Fold a point into the unit cell |x| ≤ d/2, returning the number of
/// periods removed.
fn fold(p: Point, period: f64) -> (Point, i32) {
    if p[0].abs() <= 0.5 * period {
        return (p, 0);
    }
    let m = (p[0] / period).round();
    let mut x = p[0] - m * period;
    let mut m = m as i32;
    if x < -0.5 * period {
        x += period;
        m -= 1;
    } else if x > 0.5 * period {
        x -= period;
        m += 1;
    }
    ([x, p[1]], m)
}

/// Scattered field and its y-derivative for right-hand side `column`.
/// Points outside the unit cell are mapped back with u(x + md) = α^m u(x).
pub fn eval_field<F: Formulation>(
    system: &PeriodicSystem<'_, F>,
    solution: &Solution,
    column: usize,
    points: &[Point],
) -> Result<FieldValues> {
    if column >= solution.eta.ncols() {
        return Err(Error::Dimension(format!(
            "solution has {} columns, asked for {column}",
            solution.eta.ncols()
        )));
    }
    let solver = system.solver;
    let d = solver.period();
    let disc = solver.form.discretization();
    let spacing = (0..disc.len()).map(|j| disc.weight(j)).fold(0.0, f64::max);
    let mut folded = Vec::with_capacity(points.len());
    let mut phases = Vec::with_capacity(points.len());
    let mut low = Vec::with_capacity(points.len());
    for &p in points {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::Domain(format!("non-finite evaluation point {p:?}")));
        }
        let (q, m) = fold(p, d);
        if disc.contains(q) {
            return Err(Error::Domain(format!(
                "point {p:?} lies inside an obstacle"
            )));
        }
        low.push(disc.node_distance(q) < NEAR_SPACINGS * spacing);
        folded.push(q);
        phases.push(system.alpha.powi(m));
    }
    let (fv, fy) = density_field(solver, system.alpha, &folded);
    let wv = wall_field(
        &folded,
        &system.contour,
        d,
        system.alpha,
        WallFieldKind::Value,
    );
    let wy = wall_field(
        &folded,
        &system.contour,
        d,
        system.alpha,
        WallFieldKind::DerivY,
    );
    let eta = solution.eta.column(column);
    let xi = solution.xi.column(column);
    let mut u: Vec<C64> = (&fv * eta + &wv * xi).iter().copied().collect();
    let mut uy: Vec<C64> = (&fy * eta + &wy * xi).iter().copied().collect();
    if let Some(w) = &system.wood {
        for (k, c) in w.crossings.iter().enumerate() {
            let a = solution.mode[(k, column)];
            for (i, q) in folded.iter().enumerate() {
                let phi = (I * (c.kappa * q[0] + c.kz * q[1])).exp();
                u[i] += a * phi;
                uy[i] += a * I * c.kz * phi;
            }
        }
    }
    for i in 0..u.len() {
        u[i] *= phases[i];
        uy[i] *= phases[i];
    }
    Ok(FieldValues {
        values: u,
        dy: uy,
        low_accuracy: low,
    })
}

/// Rayleigh-Bloch amplitudes of one incidence: above the grating
/// u = Σ c_n e^{iκ_n x + ik_n(y - y0)}, below u = Σ d_n e^{iκ_n x - ik_n(y + y0)}.
#[derive(Clone, Debug, PartialEq)]
pub struct BraggSpectrum {
    pub omega: f64,
    pub theta: f64,
    pub period: f64,
    pub y0: f64,
    pub orders: Vec<i64>,
    pub kappa: Vec<f64>,
    pub kz: Vec<C64>,
    /// c_n
    pub up: Vec<C64>,
    /// d_n, scattered part only.
    pub down: Vec<C64>,
    /// Total downward amplitude: d_n plus the incident wave for n = 0.
    pub transmitted: Vec<C64>,
    /// k_n(|c_n|² + |t_n|²)/(ω|sinθ|); zero for evanescent orders.
    pub flux_fraction: Vec<f64>,
    pub flux_error: f64,
}

impl BraggSpectrum {
    /// Spectrum from amplitudes; computes wavenumbers, transmitted
    /// amplitudes, flux fractions and the flux error.
    pub fn from_amplitudes(
        omega: f64,
        theta: f64,
        period: f64,
        y0: f64,
        orders: Vec<i64>,
        up: Vec<C64>,
        down: Vec<C64>,
    ) -> Result<Self> {
        if !(theta > -PI && theta < 0.0) {
            return Err(Error::Domain(format!(
                "incidence angle must lie in (-π, 0), got {theta}"
            )));
        }
        if up.len() != orders.len() || down.len() != orders.len() {
            return Err(Error::Dimension(
                "amplitude and order lists differ in length".into(),
            ));
        }
        let base = omega * theta.cos();
        let kappa: Vec<f64> = orders
            .iter()
            .map(|&n| base + 2.0 * PI * n as f64 / period)
            .collect();
        let kz: Vec<C64> = kappa
            .iter()
            .map(|&k| vertical_wavenumber(omega, k))
            .collect();
        let k0 = omega * theta.sin().abs();
        let transmitted: Vec<C64> = orders
            .iter()
            .zip(&down)
            .map(|(&n, &d)| {
                if n == 0 {
                    d + C64::from_polar(1.0, k0 * y0)
                } else {
                    d
                }
            })
            .collect();
        let flux_fraction: Vec<f64> = (0..orders.len())
            .map(|i| {
                if kz[i].im == 0.0 {
                    kz[i].re * (up[i].norm_sqr() + transmitted[i].norm_sqr()) / k0
                } else {
                    0.0
                }
            })
            .collect();
        let mut s = BraggSpectrum {
            omega,
            theta,
            period,
            y0,
            orders,
            kappa,
            kz,
            up,
            down,
            transmitted,
            flux_fraction,
            flux_error: 0.0,
        };
        s.flux_error = flux_error(&s)?;
        Ok(s)
    }

    pub fn propagating(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.orders.len()).filter(|&i| self.kz[i].im == 0.0)
    }

    pub fn index_of(&self, n: i64) -> Option<usize> {
        self.orders.iter().position(|&m| m == n)
    }
}

/// |1 − Σ_propagating k_n(|c_n|² + |t_n|²)/(ω|sinθ|)|.
pub fn flux_error(spectrum: &BraggSpectrum) -> Result<f64> {
    let mut any = false;
    let mut total = 0.0;
    for i in spectrum.propagating() {
        any = true;
        total += spectrum.flux_fraction[i];
    }
    if !any {
        return Err(Error::Domain("no propagating orders".into()));
    }
    Ok((1.0 - total).abs())
}

/// Propagating orders plus one evanescent order on each side.
pub fn retained_orders(omega: f64, theta: f64, period: f64) -> Vec<i64> {
    let base = omega * theta.cos();
    let step = 2.0 * PI / period;
    let lo = ((-omega - base) / step).ceil() as i64 - 1;
    let hi = ((omega - base) / step).floor() as i64 + 1;
    (lo..=hi).collect()
}

/// Amplitudes from the DFT of u and ∂u/∂y at `samples` equispaced points on
/// y = ±y0. The outgoing part is (U + U'/(ik))/2 on top and (U − U'/(ik))/2
/// below; a grazing order (k = 0) takes U itself.
pub fn bragg_amplitudes<F: Formulation>(
    system: &PeriodicSystem<'_, F>,
    solution: &Solution,
    column: usize,
    theta: f64,
    y0: Option<f64>,
    samples: Option<usize>,
) -> Result<BraggSpectrum> {
    let solver = system.solver;
    let d = solver.period();
    let omega = solver.omega();
    let y0 = y0.unwrap_or(solver.bragg_y0);
    let s = samples.unwrap_or(solver.options.bragg_samples);
    let ymax = solver.form.discretization().max_abs_y();
    if !(y0 > ymax) {
        return Err(Error::Domain(format!(
            "Bragg line height {y0} is inside the obstacle band |y| ≤ {ymax}"
        )));
    }
    let orders = retained_orders(omega, theta, d);
    if s < 2 * orders.len() + 2 {
        return Err(Error::Config(format!(
            "{s} samples cannot resolve {} orders",
            orders.len()
        )));
    }
    let xs = line_abscissae(d, s);
    let mut pts: Vec<Point> = xs.iter().map(|&x| [x, y0]).collect();
    pts.extend(xs.iter().map(|&x| [x, -y0]));
    let f = eval_field(system, solution, column, &pts)?;
    let top = LineSamples {
        values: &f.values[..s],
        dy: &f.dy[..s],
    };
    let bottom = LineSamples {
        values: &f.values[s..],
        dy: &f.dy[s..],
    };
    let (up, down) = split_orders(omega, theta, d, &orders, &xs, top, bottom);
    BraggSpectrum::from_amplitudes(omega, theta, d, y0, orders, up, down)
}

/// Cell-centered sample abscissae on one period.
fn line_abscissae(period: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| -0.5 * period + period * (i as f64 + 0.5) / samples as f64)
        .collect()
}

#[derive(Clone, Copy)]
struct LineSamples<'a> {
    values: &'a [C64],
    dy: &'a [C64],
}

/// Per-order outgoing amplitudes (c_n, d_n) from samples on the two lines.
fn split_orders(
    omega: f64,
    theta: f64,
    period: f64,
    orders: &[i64],
    xs: &[f64],
    top: LineSamples<'_>,
    bottom: LineSamples<'_>,
) -> (Vec<C64>, Vec<C64>) {
    let base = omega * theta.cos();
    let s = xs.len() as f64;
    let mut up = Vec::with_capacity(orders.len());
    let mut down = Vec::with_capacity(orders.len());
    for &n in orders {
        let kappa = base + 2.0 * PI * n as f64 / period;
        let k = vertical_wavenumber(omega, kappa);
        let coef = |line: LineSamples<'_>| -> (C64, C64) {
            let mut u = C64::new(0.0, 0.0);
            let mut uy = C64::new(0.0, 0.0);
            for (i, &x) in xs.iter().enumerate() {
                let ph = (-I * kappa * x).exp();
                u += line.values[i] * ph;
                uy += line.dy[i] * ph;
            }
            (u / s, uy / s)
        };
        let (ut, uyt) = coef(top);
        let (ub, uyb) = coef(bottom);
        if k == C64::new(0.0, 0.0) {
            up.push(ut);
            down.push(ub);
        } else {
            let ik = I * k;
            up.push(0.5 * (ut + uyt / ik));
            down.push(0.5 * (ub - uyb / ik));
        }
    }
    (up, down)
}

/// Rectangular grid of scattered-field samples, row-major with x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub origin: Point,
    pub corner: Point,
    pub nx: usize,
    pub ny: usize,
    /// NaN inside obstacles.
    pub values: Vec<C64>,
}

impl FieldGrid {
    pub fn spacing(&self) -> (f64, f64) {
        let step = |a: f64, b: f64, n: usize| if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
        (
            step(self.origin[0], self.corner[0], self.nx),
            step(self.origin[1], self.corner[1], self.ny),
        )
    }

    /// Write `<base>.bin` (little-endian re/im f64 pairs) and the plain-text
    /// sidecar `<base>.txt`, each through a temporary file and rename.
    pub fn write(&self, base: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 * self.values.len());
        for z in &self.values {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
        let (dx, dy) = self.spacing();
        let sidecar = format!(
            "# scattered field samples, complex128 little-endian (re, im), row-major with x fastest\n\
             x0 = {}\ny0 = {}\ndx = {}\ndy = {}\nnx = {}\nny = {}\n",
            self.origin[0], self.origin[1], dx, dy, self.nx, self.ny
        );
        write_atomic(&base.with_extension("bin"), &bytes)?;
        write_atomic(&base.with_extension("txt"), sidecar.as_bytes())
    }
}

/// Sample the scattered field on an nx × ny grid spanning `origin` to `corner`.
pub fn field_grid<F: Formulation>(
    system: &PeriodicSystem<'_, F>,
    solution: &Solution,
    column: usize,
    origin: Point,
    corner: Point,
    nx: usize,
    ny: usize,
) -> Result<FieldGrid> {
    if nx == 0 || ny == 0 {
        return Err(Error::Config(
            "field grid needs at least one point per axis".into(),
        ));
    }
    let disc = system.solver.form.discretization();
    let d = system.solver.period();
    let mut grid = FieldGrid {
        origin,
        corner,
        nx,
        ny,
        values: vec![C64::new(f64::NAN, f64::NAN); nx * ny],
    };
    let (dx, dy) = grid.spacing();
    let mut outside = Vec::new();
    let mut pts = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = [origin[0] + dx * i as f64, origin[1] + dy * j as f64];
            if !disc.contains(fold(p, d).0) {
                outside.push(j * nx + i);
                pts.push(p);
            }
        }
    }
    if !pts.is_empty() {
        let f = eval_field(system, solution, column, &pts)?;
        for (k, &idx) in outside.iter().enumerate() {
            grid.values[idx] = f.values[k];
        }
    }
    Ok(grid)
}

/// Write through a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// e^{i(κx + k y)}
pub fn plane_wave(kappa: f64, kz: C64, p: Point) -> C64 {
    (I * (kappa * p[0] + kz * p[1])).exp()
}

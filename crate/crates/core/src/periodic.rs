//! Periodized system for one frequency: neighbor factors, the Woodbury
//! correction of the compressed inverse, elimination of the wall unknowns
//! and Wood's-anomaly augmentation.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, Lattice, Point};
use crate::hbs::{build_inverse, compress, id_decompose, CompressedInverse, HbsOptions};
use crate::kernels::{
    combined, combined_dy, proxy_count, CombinedFieldOperator, EntryOracle, ProxyCircle,
};
use crate::linalg::{gemm, hstack, matmul, par_from_fn, CMat, Lu, C64};
use crate::sommerfeld::{
    assemble_b, assemble_c, assemble_q, bloch_phase, build_contour_with, vertical_wavenumber,
    wall_field, ContourShape, SommerfeldContour, WallFieldKind,
};

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest source count of a neighbor copy used when sampling near-field
/// columns for the shared interpolation basis.
const NEIGHBOR_SAMPLE_NODES: usize = 512;

/// Boundary integral formulation of one obstacle: the self block as an
/// entry oracle plus everything the periodizing scheme needs.
pub trait Formulation: EntryOracle + Send + Sync {
    fn discretization(&self) -> &Discretization;
    /// Wavenumber of the exterior medium.
    fn omega(&self) -> f64;
    fn unknowns_per_node(&self) -> usize;
    /// Rows `rows` of the interaction with the copy displaced by `shift` along x.
    fn neighbor_block(&self, rows: &[usize], shift: f64) -> CMat;
    /// Equation rows driven by exterior sources at the given points, one
    /// column per source and layer kind.
    fn exterior_response(&self, points: &[Point], normals: &[Point], weights: &[f64]) -> CMat;
    /// B: wall unknowns to equation rows.
    fn wall_coupling(
        &self,
        contour: &SommerfeldContour,
        lattice: &Lattice,
        alpha: C64,
    ) -> Result<CMat>;
    /// C̃: densities to wall mismatch rows.
    fn wall_mismatch(
        &self,
        contour: &SommerfeldContour,
        lattice: &Lattice,
        alpha: C64,
        images: usize,
    ) -> Result<CMat>;
    /// Boundary data of e^{i(κx + k y)} in equation-row layout.
    fn plane_wave_data(&self, kappa: f64, kz: C64) -> CMat;
    /// Exterior field, or its y-derivative, at `points` from the densities on
    /// the copy displaced by `shift`.
    fn field_operator(&self, points: &[Point], shift: f64, kind: WallFieldKind) -> CMat;
}

impl Formulation for CombinedFieldOperator {
    fn discretization(&self) -> &Discretization {
        &self.disc
    }

    fn omega(&self) -> f64 {
        self.omega
    }

    fn unknowns_per_node(&self) -> usize {
        1
    }

    fn neighbor_block(&self, rows: &[usize], shift: f64) -> CMat {
        let d = &self.disc;
        par_from_fn(rows.len(), d.len(), |a, s| {
            let y = [d.points[s][0] + shift, d.points[s][1]];
            combined(self.omega, d.points[rows[a]], y, d.normals[s]) * d.weight(s)
        })
    }

    fn exterior_response(&self, points: &[Point], normals: &[Point], weights: &[f64]) -> CMat {
        let d = &self.disc;
        par_from_fn(d.len(), points.len(), |i, s| {
            combined(self.omega, d.points[i], points[s], normals[s]) * weights[s]
        })
    }

    fn wall_coupling(
        &self,
        contour: &SommerfeldContour,
        lattice: &Lattice,
        alpha: C64,
    ) -> Result<CMat> {
        assemble_b(&self.disc, contour, lattice, alpha)
    }

    fn wall_mismatch(
        &self,
        contour: &SommerfeldContour,
        lattice: &Lattice,
        alpha: C64,
        images: usize,
    ) -> Result<CMat> {
        assemble_c(&self.disc, contour, lattice, alpha, images)
    }

    fn plane_wave_data(&self, kappa: f64, kz: C64) -> CMat {
        CMat::from_fn(self.disc.len(), 1, |i, _| {
            let p = self.disc.points[i];
            (I * (kappa * p[0] + kz * p[1])).exp()
        })
    }

    fn field_operator(&self, points: &[Point], shift: f64, kind: WallFieldKind) -> CMat {
        let d = &self.disc;
        par_from_fn(points.len(), d.len(), |i, s| {
            let y = [d.points[s][0] + shift, d.points[s][1]];
            let k = match kind {
                WallFieldKind::Value => combined(self.omega, points[i], y, d.normals[s]),
                WallFieldKind::DerivY => combined_dy(self.omega, points[i], y, d.normals[s]),
            };
            k * d.weight(s)
        })
    }
}

/// Shared row basis of the neighbor interactions: A_j ≈ P·R_j for every
/// image j = ±1..±P, with R_j = A_j(J, :).
#[derive(Clone, Debug)]
pub struct NeighborFactors {
    /// P, unknowns × rank, with P(J, :) = I.
    pub interp: CMat,
    pub skeleton: Vec<usize>,
    pub rank: usize,
    /// Image offsets in the order of the stacked rows: -P..-1, 1..P.
    pub images: Vec<i64>,
    /// R_j stacked in `images` order.
    pub rows: CMat,
}

impl NeighborFactors {
    fn empty(n: usize) -> Self {
        NeighborFactors {
            interp: CMat::zeros(n, 0),
            skeleton: Vec::new(),
            rank: 0,
            images: Vec::new(),
            rows: CMat::zeros(0, n),
        }
    }

    /// R_j for image offset `j`.
    pub fn image_rows(&self, j: i64) -> Option<CMat> {
        let k = self.images.iter().position(|&m| m == j)?;
        Some(self.rows.rows(k * self.rank, self.rank).into_owned())
    }

    /// L = [α^j P] over the images, unknowns × 2Pl.
    pub fn left_factor(&self, alpha: C64) -> CMat {
        let n = self.interp.nrows();
        let mut out = CMat::zeros(n, self.rank * self.images.len());
        for (k, &j) in self.images.iter().enumerate() {
            let phase = alpha.powi(j as i32);
            let mut block = out.columns_mut(k * self.rank, self.rank);
            block.copy_from(&self.interp);
            block.iter_mut().for_each(|z| *z *= phase);
        }
        out
    }
}

/// One interpolative decomposition of [near-field columns of the copies |
/// proxy columns] shared by every image up to `images`.
pub fn factor_neighbors<F: Formulation + ?Sized>(
    form: &F,
    lattice: &Lattice,
    images: usize,
    tol: f64,
    base_proxies: usize,
) -> Result<NeighborFactors> {
    let disc = form.discretization();
    let n = form.size();
    if images > 2 {
        return Err(Error::Config(format!(
            "neighbor image count must be 0, 1 or 2, got {images}"
        )));
    }
    if images == 0 {
        return Ok(NeighborFactors::empty(n));
    }
    if 2.0 * disc.max_abs_x() >= lattice.period {
        return Err(Error::Geometry("neighboring copies overlap".into()));
    }
    let center = disc.center;
    let radius = 2.0 * disc.radius();
    let proxies = ProxyCircle::new(
        center,
        radius,
        proxy_count(form.omega(), radius, base_proxies),
    );
    let stride = disc.len().div_ceil(NEIGHBOR_SAMPLE_NODES).max(1);
    let offsets: Vec<i64> = (-(images as i64)..0).chain(1..=images as i64).collect();
    let (mut pts, mut nrm, mut wts) = (Vec::new(), Vec::new(), Vec::new());
    for &j in &offsets {
        let shift = j as f64 * lattice.period;
        for s in (0..disc.len()).step_by(stride) {
            let p = [disc.points[s][0] + shift, disc.points[s][1]];
            if (p[0] - center[0]).hypot(p[1] - center[1]) < radius {
                pts.push(p);
                nrm.push(disc.normals[s]);
                wts.push(disc.weight(s) * stride as f64);
            }
        }
    }
    let near = form.exterior_response(&pts, &nrm, &wts);
    let far = form.exterior_response(
        &proxies.points,
        &proxies.normals,
        &vec![proxies.weight; proxies.len()],
    );
    let id = id_decompose(&hstack(&[&near, &far]), tol);
    let skeleton = id.skeleton().to_vec();
    let blocks: Vec<CMat> = offsets
        .par_iter()
        .map(|&j| form.neighbor_block(&skeleton, j as f64 * lattice.period))
        .collect();
    let refs: Vec<&CMat> = blocks.iter().collect();
    let rows = if refs.is_empty() {
        CMat::zeros(0, n)
    } else {
        crate::linalg::vstack(&refs)
    };
    Ok(NeighborFactors {
        interp: id.interp,
        skeleton,
        rank: id.rank,
        images: offsets,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WoodMode {
    /// Augment when some |k_n| falls below the threshold.
    Auto,
    Off,
    /// Always augment the order with the smallest |k_n|.
    Force,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Sommerfeld contour nodes M.
    pub contour_nodes: usize,
    /// Neighbor images P on each side.
    pub images: usize,
    pub hbs: HbsOptions,
    pub neighbor_proxies: usize,
    pub wood: WoodMode,
    /// Wood detection threshold on |k_n|; 0.1·2π/d when unset.
    pub wood_threshold: Option<f64>,
    /// Height of the Bragg extraction lines; max|y| + 0.2d when unset.
    pub bragg_y0: Option<f64>,
    pub bragg_samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            contour_nodes: 90,
            images: 1,
            hbs: HbsOptions::default(),
            neighbor_proxies: 75,
            wood: WoodMode::Auto,
            wood_threshold: None,
            bragg_y0: None,
            bragg_samples: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrecomputeTimings {
    pub compress: f64,
    pub inverse: f64,
    pub neighbors: f64,
}

impl PrecomputeTimings {
    pub fn total(&self) -> f64 {
        self.compress + self.inverse + self.neighbors
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeStats {
    pub depth: usize,
    pub max_rank: usize,
    pub stored_entries: usize,
    pub dense_fallbacks: usize,
}

/// Frequency-level precomputation: compressed inverse of the self block and
/// the neighbor factors. Everything α-dependent lives in [`PeriodicSystem`].
#[derive(Debug)]
pub struct PeriodicSolver<F> {
    pub form: F,
    pub lattice: Lattice,
    pub options: SolverOptions,
    pub inverse: CompressedInverse,
    pub neighbors: NeighborFactors,
    pub shape: ContourShape,
    pub bragg_y0: f64,
    pub timings: PrecomputeTimings,
    pub tree: Option<TreeStats>,
}

impl<F: Formulation> PeriodicSolver<F> {
    pub fn new(form: F, lattice: Lattice, options: SolverOptions) -> Result<Self> {
        let t = Instant::now();
        let tree = compress(&form, options.hbs)?;
        let compress_time = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let inverse = build_inverse(&tree)?;
        let inverse_time = t.elapsed().as_secs_f64();
        let stats = TreeStats {
            depth: tree.depth(),
            max_rank: tree.max_rank(),
            stored_entries: tree.stored_entries(),
            dense_fallbacks: tree.dense_fallbacks(),
        };
        drop(tree);
        let mut solver = Self::with_inverse(form, lattice, options, inverse)?;
        solver.timings.compress = compress_time;
        solver.timings.inverse = inverse_time;
        solver.tree = Some(stats);
        Ok(solver)
    }

    /// Reuse a compressed inverse built earlier for the same self block.
    pub fn with_inverse(
        form: F,
        lattice: Lattice,
        options: SolverOptions,
        inverse: CompressedInverse,
    ) -> Result<Self> {
        if inverse.size != form.size() {
            return Err(Error::Dimension(format!(
                "factorization has {} unknowns, the discretization {}",
                inverse.size,
                form.size()
            )));
        }
        let disc = form.discretization();
        let d = lattice.period;
        if 2.0 * disc.max_abs_x() >= d {
            return Err(Error::Geometry(
                "obstacle reaches the unit-cell walls".into(),
            ));
        }
        let ymax = disc.max_abs_y();
        let bragg_y0 = options.bragg_y0.unwrap_or(ymax + 0.2 * d);
        if bragg_y0 <= ymax {
            return Err(Error::Domain(format!(
                "Bragg line height {bragg_y0} is inside the obstacle band |y| ≤ {ymax}"
            )));
        }
        let gap = (options.images as f64 + 1.0) * d - 2.0 * disc.max_abs_x();
        let shape = ContourShape::for_region(form.omega(), gap, bragg_y0)?;
        build_contour_with(form.omega(), options.contour_nodes, 0.0, shape)?;
        let t = Instant::now();
        let neighbors = factor_neighbors(
            &form,
            &lattice,
            options.images,
            options.hbs.tol,
            options.neighbor_proxies,
        )?;
        let timings = PrecomputeTimings {
            neighbors: t.elapsed().as_secs_f64(),
            ..Default::default()
        };
        Ok(PeriodicSolver {
            form,
            lattice,
            options,
            inverse,
            neighbors,
            shape,
            bragg_y0,
            timings,
            tree: None,
        })
    }

    pub fn omega(&self) -> f64 {
        self.form.omega()
    }

    pub fn period(&self) -> f64 {
        self.lattice.period
    }

    pub fn contour(&self, shift: f64) -> Result<SommerfeldContour> {
        build_contour_with(self.omega(), self.options.contour_nodes, shift, self.shape)
    }

    pub fn wood_threshold(&self) -> f64 {
        self.options
            .wood_threshold
            .unwrap_or(0.1 * 2.0 * PI / self.period())
    }

    /// System for the Bloch phase e^{iκ₀d}.
    pub fn system(&self, kappa0: f64) -> Result<PeriodicSystem<'_, F>> {
        PeriodicSystem::new(self, kappa0)
    }

    pub fn system_for_angle(&self, theta: f64) -> Result<PeriodicSystem<'_, F>> {
        check_angle(theta)?;
        self.system(self.omega() * theta.cos())
    }

    fn woodbury(&self, a_inv_l: CMat) -> Result<Woodbury> {
        let rank = a_inv_l.ncols();
        let mut cap = CMat::identity(rank, rank);
        gemm(ONE, &self.neighbors.rows, &a_inv_l, ONE, &mut cap);
        let lu = Lu::factor(cap, "neighbor capacitance matrix (near resonance)")?;
        Ok(Woodbury {
            a_inv_l,
            capacitance: lu,
        })
    }

    /// Ã⁻¹X with Ã = A + Σ_j α^j A_j, through two applications of the
    /// compressed inverse: one to L and one to X.
    pub fn apply_atilde_inverse(&self, alpha: C64, x: &CMat) -> Result<CMat> {
        if self.neighbors.rank == 0 {
            return self.inverse.apply(x);
        }
        let wb = self.woodbury(self.inverse.apply(&self.neighbors.left_factor(alpha))?)?;
        Ok(wb.finish(self.inverse.apply(x)?, &self.neighbors.rows))
    }

    /// Boundary data −u^i of the incident plane wave at angle θ.
    pub fn incident_rhs(&self, theta: f64) -> CMat {
        let w = self.omega();
        -self
            .form
            .plane_wave_data(w * theta.cos(), C64::new(w * theta.sin(), 0.0))
    }

    /// Solve every angle, one block solve per group of angles sharing α.
    pub fn solve_angles(&self, thetas: &[f64]) -> Result<Sweep<'_, F>> {
        for &t in thetas {
            check_angle(t)?;
        }
        let groups = bucket_angles(self.omega(), self.period(), thetas)?;
        let buckets: Vec<Result<Bucket<'_, F>>> = groups
            .par_iter()
            .map(|members| {
                let t = Instant::now();
                let system = self.system_for_angle(thetas[members[0]])?;
                let cols: Vec<CMat> = members
                    .iter()
                    .map(|&i| self.incident_rhs(thetas[i]))
                    .collect();
                let refs: Vec<&CMat> = cols.iter().collect();
                let (solution, stats) = system.solve_block(&hstack(&refs))?;
                Ok(Bucket {
                    system,
                    members: members.clone(),
                    thetas: members.iter().map(|&i| thetas[i]).collect(),
                    solution,
                    stats,
                    seconds: t.elapsed().as_secs_f64(),
                })
            })
            .collect();
        let buckets = buckets.into_iter().collect::<Result<Vec<_>>>()?;
        let mut angles = vec![
            AngleRef {
                bucket: 0,
                column: 0
            };
            thetas.len()
        ];
        for (b, bucket) in buckets.iter().enumerate() {
            for (c, &i) in bucket.members.iter().enumerate() {
                angles[i] = AngleRef {
                    bucket: b,
                    column: c,
                };
            }
        }
        Ok(Sweep { buckets, angles })
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if !(theta > -PI && theta < 0.0) {
        return Err(Error::Domain(format!(
            "incidence angle must lie in (-π, 0), got {theta}"
        )));
    }
    Ok(())
}

/// Group angle indices whose Bloch phases agree to 1e-12, in order of first
/// appearance.
pub fn bucket_angles(omega: f64, period: f64, thetas: &[f64]) -> Result<Vec<Vec<usize>>> {
    let mut phases: Vec<C64> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &t) in thetas.iter().enumerate() {
        check_angle(t)?;
        let a = bloch_phase(omega, t, period);
        match phases.iter().position(|p| (p - a).norm() <= 1e-12) {
            Some(g) => groups[g].push(i),
            None => {
                phases.push(a);
                groups.push(vec![i]);
            }
        }
    }
    Ok(groups)
}

struct Woodbury {
    a_inv_l: CMat,
    capacitance: Lu,
}

impl Woodbury {
    /// Ã⁻¹X from Y = A⁻¹X: Y − A⁻¹L·(I + R·A⁻¹L)⁻¹·R·Y.
    fn finish(&self, mut y: CMat, rows: &CMat) -> CMat {
        let t = self.capacitance.solve(&matmul(rows, &y));
        gemm(-ONE, &self.a_inv_l, &t, ONE, &mut y);
        y
    }
}

/// Grating order whose k_n is close enough to zero to need augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WoodCrossing {
    /// Index relative to the system's κ₀.
    pub order: i64,
    pub kappa: f64,
    pub kz: C64,
}

/// Orders with |k_n| below `threshold`, nearest first. Only orders with
/// |κ_n| ≤ ω + 2π/d are scanned, so an infinite threshold lists the
/// propagating orders plus the first evanescent one on each side.
pub fn detect_wood(omega: f64, period: f64, kappa0: f64, threshold: f64) -> Vec<WoodCrossing> {
    let step = 2.0 * PI / period;
    let reach = omega + threshold.min(step);
    let lo = ((-reach - kappa0) / step).floor() as i64;
    let hi = ((reach - kappa0) / step).ceil() as i64;
    let mut out: Vec<WoodCrossing> = (lo..=hi)
        .map(|n| {
            let kappa = kappa0 + step * n as f64;
            WoodCrossing {
                order: n,
                kappa,
                kz: vertical_wavenumber(omega, kappa),
            }
        })
        .filter(|c| c.kappa.abs() <= reach && c.kz.norm() < threshold)
        .collect();
    out.sort_by(|a, b| {
        a.kz.norm()
            .total_cmp(&b.kz.norm())
            .then(a.order.cmp(&b.order))
    });
    out
}

fn nearest_order(omega: f64, period: f64, kappa0: f64) -> WoodCrossing {
    detect_wood(omega, period, kappa0, f64::INFINITY)[0]
}

/// Real displacement of the contour crossing: halfway between the crossed
/// |k| and the next larger propagating k_n, at most π/d.
fn contour_shift(omega: f64, period: f64, kappa0: f64, crossed: &[WoodCrossing]) -> f64 {
    let cap = PI / period;
    let top = crossed.iter().map(|c| c.kz.norm()).fold(0.0, f64::max);
    let next = detect_wood(omega, period, kappa0, f64::INFINITY)
        .into_iter()
        .filter(|c| c.kz.im == 0.0 && c.kz.re > top && !crossed.iter().any(|x| x.order == c.order))
        .map(|c| c.kz.re)
        .fold(f64::INFINITY, f64::min);
    (0.5 * (top + next)).min(cap)
}

/// Node count keeping the trapezoid error of a displaced contour near the
/// solver tolerance. Bloch poles at the real k_n (and the branch points)
/// sit at distance about A·|tanh((p - s0)/w)| from the contour, and the
/// error behaves like e^{-2πδ/h}. Never below the configured count and at
/// most four times it.
fn shifted_contour_nodes<F: Formulation>(
    solver: &PeriodicSolver<F>,
    kappa0: f64,
    shift: f64,
    crossed: &[WoodCrossing],
) -> usize {
    let base = solver.options.contour_nodes;
    let omega = solver.omega();
    let ContourShape {
        height,
        width,
        half_width,
    } = solver.shape;
    let mut poles: Vec<C64> = detect_wood(omega, solver.period(), kappa0, f64::INFINITY)
        .into_iter()
        .filter(|c| c.kz.im == 0.0 || !crossed.iter().any(|x| x.order == c.order))
        .flat_map(|c| [c.kz, -c.kz])
        .collect();
    poles.extend([C64::new(omega, 0.0), C64::new(-omega, 0.0)]);
    let delta = poles
        .iter()
        .map(|p| (p.im + height * ((p.re - shift) / width).tanh()).abs())
        .fold(f64::INFINITY, f64::min);
    let digits = (1.0 / solver.options.hbs.tol.clamp(1e-15, 1e-2)).ln();
    let needed = (2.0 * half_width * digits / (2.0 * PI * delta)).ceil() as usize;
    let needed = needed.clamp(base, 4 * base);
    needed + needed % 2
}

/// Extra unknowns multiplying Rayleigh-Bloch modes e^{i(κx + ky)} of the
/// crossed orders, with one no-incoming-radiation row per mode evaluated on
/// the lower Bragg line.
#[derive(Clone, Debug)]
pub struct WoodAugmentation {
    pub crossings: Vec<WoodCrossing>,
    /// Mode data on the boundary, unknowns × w.
    pub column: CMat,
    /// Row functional on the densities, w × unknowns.
    pub row_density: CMat,
    /// Row functional on the wall unknowns, w × 2M.
    pub row_wall: CMat,
    /// Row functional on the mode coefficients, w × w.
    pub row_mode: CMat,
}

impl WoodAugmentation {
    fn new<F: Formulation>(
        solver: &PeriodicSolver<F>,
        contour: &SommerfeldContour,
        alpha: C64,
        crossings: Vec<WoodCrossing>,
    ) -> Self {
        let d = solver.period();
        let s = solver.options.bragg_samples;
        let y0 = solver.bragg_y0;
        let xs: Vec<f64> = (0..s)
            .map(|i| -0.5 * d + d * (i as f64 + 0.5) / s as f64)
            .collect();
        let pts: Vec<Point> = xs.iter().map(|&x| [x, -y0]).collect();
        let (fv, fy) = density_field(solver, alpha, &pts);
        let wv = wall_field(&pts, contour, d, alpha, WallFieldKind::Value);
        let wy = wall_field(&pts, contour, d, alpha, WallFieldKind::DerivY);
        let w = crossings.len();
        let n = fv.ncols();
        let mut row_density = CMat::zeros(w, n);
        let mut row_wall = CMat::zeros(w, wv.ncols());
        let mut row_mode = CMat::zeros(w, w);
        for (r, c) in crossings.iter().enumerate() {
            let ik = I * c.kz;
            let ph: Vec<C64> = xs
                .iter()
                .map(|&x| (-I * c.kappa * x).exp() / s as f64)
                .collect();
            let weights = CMat::from_fn(1, s, |_, i| ph[i]);
            let dens = &fv * ik + &fy;
            let wall = &wv * ik + &wy;
            row_density.row_mut(r).copy_from(&matmul(&weights, &dens));
            row_wall.row_mut(r).copy_from(&matmul(&weights, &wall));
            for (q, m) in crossings.iter().enumerate() {
                let sum: C64 = xs
                    .iter()
                    .zip(&ph)
                    .map(|(&x, p)| p * (ik + I * m.kz) * (I * (m.kappa * x - m.kz * y0)).exp())
                    .sum();
                row_mode[(r, q)] = sum;
            }
        }
        let cols: Vec<CMat> = crossings
            .iter()
            .map(|c| solver.form.plane_wave_data(c.kappa, c.kz))
            .collect();
        let refs: Vec<&CMat> = cols.iter().collect();
        WoodAugmentation {
            crossings,
            column: hstack(&refs),
            row_density,
            row_wall,
            row_mode,
        }
    }

    pub fn len(&self) -> usize {
        self.crossings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crossings.is_empty()
    }
}

/// Σ_j α^j times the obstacle-copy field operators (value, y-derivative).
pub(crate) fn density_field<F: Formulation>(
    solver: &PeriodicSolver<F>,
    alpha: C64,
    pts: &[Point],
) -> (CMat, CMat) {
    let p = solver.options.images as i64;
    let n = solver.form.size();
    let mut fv = CMat::zeros(pts.len(), n);
    let mut fy = CMat::zeros(pts.len(), n);
    for j in -p..=p {
        let shift = j as f64 * solver.period();
        let phase = alpha.powi(j as i32);
        fv += solver.form.field_operator(pts, shift, WallFieldKind::Value) * phase;
        fy += solver
            .form
            .field_operator(pts, shift, WallFieldKind::DerivY)
            * phase;
    }
    (fv, fy)
}

/// α-dependent blocks of the periodized system.
#[derive(Debug)]
pub struct PeriodicSystem<'a, F> {
    pub solver: &'a PeriodicSolver<F>,
    pub alpha: C64,
    /// Representative horizontal wavenumber; α = e^{iκ₀d}.
    pub kappa0: f64,
    pub contour: SommerfeldContour,
    pub b: CMat,
    pub c: CMat,
    pub q: CMat,
    pub wood: Option<WoodAugmentation>,
}

/// Counts of compressed-inverse use during one block solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub calls: usize,
    pub columns: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Densities, unknowns × q.
    pub eta: CMat,
    /// Wall unknowns [μ̂; ν̂], 2M × q.
    pub xi: CMat,
    /// Coefficients of the augmented modes, w × q.
    pub mode: CMat,
}

impl<'a, F: Formulation> PeriodicSystem<'a, F> {
    fn new(solver: &'a PeriodicSolver<F>, kappa0: f64) -> Result<Self> {
        let omega = solver.omega();
        let d = solver.period();
        let alpha = C64::from_polar(1.0, kappa0 * d);
        let threshold = solver.wood_threshold();
        let crossings = match solver.options.wood {
            WoodMode::Off => Vec::new(),
            WoodMode::Auto => detect_wood(omega, d, kappa0, threshold),
            WoodMode::Force => {
                let mut near = detect_wood(omega, d, kappa0, threshold);
                if near.is_empty() {
                    near.push(nearest_order(omega, d, kappa0));
                }
                near
            }
        };
        let mut crossings = crossings;
        let mut shift = if crossings.is_empty() {
            0.0
        } else {
            contour_shift(omega, d, kappa0, &crossings)
        };
        // An evanescent pole i|k_n| below the displaced crossing height would
        // change sides of the contour; its mode is augmented as well.
        if shift > 0.0 {
            let lift = solver.shape.height * (shift / solver.shape.width).tanh();
            let swept: Vec<WoodCrossing> = detect_wood(omega, d, kappa0, lift)
                .into_iter()
                .filter(|c| c.kz.re == 0.0 && !crossings.iter().any(|x| x.order == c.order))
                .collect();
            if !swept.is_empty() {
                crossings.extend(swept);
                shift = contour_shift(omega, d, kappa0, &crossings);
            }
        }
        if crossings.len() > 2 {
            return Err(Error::Unsupported(format!(
                "{} grating orders graze simultaneously; at most 2 can be augmented",
                crossings.len()
            )));
        }
        let contour = if crossings.is_empty() {
            solver.contour(0.0)?
        } else {
            let m = shifted_contour_nodes(solver, kappa0, shift, &crossings);
            build_contour_with(omega, m, shift, solver.shape)?
        };
        let b = solver
            .form
            .wall_coupling(&contour, &solver.lattice, alpha)?;
        let c =
            solver
                .form
                .wall_mismatch(&contour, &solver.lattice, alpha, solver.options.images)?;
        let q = assemble_q(&contour, d, alpha);
        let wood = if crossings.is_empty() {
            None
        } else {
            Some(WoodAugmentation::new(solver, &contour, alpha, crossings))
        };
        Ok(PeriodicSystem {
            solver,
            alpha,
            kappa0,
            contour,
            b,
            c,
            q,
            wood,
        })
    }

    pub fn size(&self) -> usize {
        self.solver.form.size()
    }

    /// Unknown count of the full square system.
    pub fn total_unknowns(&self) -> usize {
        self.size() + self.q.nrows() + self.wood.as_ref().map_or(0, |w| w.len())
    }

    /// Solve [Ã B; C̃ Q][η; ξ] = [rhs; 0] for a block of right-hand sides
    /// sharing this α, bordered by the mode rows when augmented. The
    /// compressed inverse is applied exactly twice: to [L | B], then to the
    /// right-hand sides.
    pub fn solve_block(&self, rhs: &CMat) -> Result<(Solution, ApplyStats)> {
        let solver = self.solver;
        let n = self.size();
        if rhs.nrows() != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, expected {n}",
                rhs.nrows()
            )));
        }
        if rhs.ncols() == 0 {
            return Err(Error::Dimension("empty right-hand side block".into()));
        }
        let q = rhs.ncols();
        let nb = &solver.neighbors;
        let lw = nb.rank * nb.images.len();
        let m2 = self.b.ncols();
        let mut stats = ApplyStats::default();
        let mut apply = |x: &CMat| -> Result<CMat> {
            stats.calls += 1;
            stats.columns += x.ncols();
            solver.inverse.apply(x)
        };

        let first = apply(&hstack(&[&nb.left_factor(self.alpha), &self.b]))?;
        let woodbury = if lw > 0 {
            Some(solver.woodbury(first.columns(0, lw).into_owned())?)
        } else {
            None
        };
        let correct = |y: CMat| match &woodbury {
            Some(w) => w.finish(y, &nb.rows),
            None => y,
        };
        let ainv_b = correct(first.columns(lw, m2).into_owned());
        let full_rhs = match &self.wood {
            Some(w) => hstack(&[rhs, &w.column]),
            None => rhs.clone(),
        };
        let ainv_rhs = correct(apply(&full_rhs)?);

        let mut schur = self.q.clone();
        gemm(-ONE, &self.c, &ainv_b, ONE, &mut schur);
        let schur = Lu::factor(
            schur,
            "wall Schur complement (possible Wood's anomaly; enable augmentation)",
        )?;
        let xi = schur.solve(&(-matmul(&self.c, &ainv_rhs)));
        let mut eta = ainv_rhs;
        gemm(-ONE, &ainv_b, &xi, ONE, &mut eta);

        let Some(w) = &self.wood else {
            return Ok((
                Solution {
                    eta,
                    xi,
                    mode: CMat::zeros(0, q),
                },
                stats,
            ));
        };
        let k = w.len();
        let (eta_b, eta_m) = (
            eta.columns(0, q).into_owned(),
            eta.columns(q, k).into_owned(),
        );
        let (xi_b, xi_m) = (xi.columns(0, q).into_owned(), xi.columns(q, k).into_owned());
        let mut border = w.row_mode.clone();
        gemm(-ONE, &w.row_density, &eta_m, ONE, &mut border);
        gemm(-ONE, &w.row_wall, &xi_m, ONE, &mut border);
        let mut h = matmul(&w.row_density, &eta_b);
        gemm(ONE, &w.row_wall, &xi_b, ONE, &mut h);
        let border = Lu::factor(border, "Wood's-anomaly bordering")?;
        let mode = border.solve(&(-h));
        let mut eta = eta_b;
        gemm(-ONE, &eta_m, &mode, ONE, &mut eta);
        let mut xi = xi_b;
        gemm(-ONE, &xi_m, &mode, ONE, &mut xi);
        Ok((Solution { eta, xi, mode }, stats))
    }

    /// Dense Ã = A + Σ_j α^j A_j; meant for small verification sizes.
    pub fn dense_atilde(&self) -> CMat {
        let form = &self.solver.form;
        let n = form.size();
        let all: Vec<usize> = (0..n).collect();
        let mut a = form.block(&all, &all);
        for j in 1..=self.solver.options.images as i64 {
            for s in [-j, j] {
                a += form.neighbor_block(&all, s as f64 * self.solver.period())
                    * self.alpha.powi(s as i32);
            }
        }
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngleRef {
    pub bucket: usize,
    pub column: usize,
}

#[derive(Debug)]
pub struct Bucket<'a, F> {
    pub system: PeriodicSystem<'a, F>,
    /// Input positions of the angles in this bucket.
    pub members: Vec<usize>,
    pub thetas: Vec<f64>,
    pub solution: Solution,
    pub stats: ApplyStats,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct Sweep<'a, F> {
    pub buckets: Vec<Bucket<'a, F>>,
    /// Bucket and column of every input angle, in input order.
    pub angles: Vec<AngleRef>,
}

impl<F> Sweep<'_, F> {
    pub fn column(&self, angle: usize) -> (&Bucket<'_, F>, usize) {
        let r = self.angles[angle];
        (&self.buckets[r.bucket], r.column)
    }
}

//! Star-shaped obstacle boundaries given by a radial Fourier series, their
//! trapezoid-rule discretization and lattice translates.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Radial function f(t) = a0 + Σ_m [a_m cos(mt) + b_m sin(mt)] about `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCurve {
    /// a_0, a_1, ...
    pub cos_coeffs: Vec<f64>,
    /// b_0 (ignored), b_1, ...
    pub sin_coeffs: Vec<f64>,
    pub center: Point,
}

impl BoundaryCurve {
    pub fn circle(radius: f64) -> Self {
        BoundaryCurve {
            cos_coeffs: vec![radius],
            sin_coeffs: vec![],
            center: [0.0, 0.0],
        }
    }

    /// f(t) = a0 + a_m cos(m t).
    pub fn star(a0: f64, am: f64, m: usize) -> Self {
        let mut cos_coeffs = vec![0.0; m + 1];
        cos_coeffs[0] = a0;
        cos_coeffs[m] = am;
        BoundaryCurve {
            cos_coeffs,
            sin_coeffs: vec![],
            center: [0.0, 0.0],
        }
    }

    pub fn with_center(mut self, center: Point) -> Self {
        self.center = center;
        self
    }

    /// (f(t), f'(t))
    pub fn radial(&self, t: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut fp = 0.0;
        for (m, &a) in self.cos_coeffs.iter().enumerate() {
            if a != 0.0 {
                let (s, c) = (m as f64 * t).sin_cos();
                f += a * c;
                fp -= m as f64 * a * s;
            }
        }
        for (m, &b) in self.sin_coeffs.iter().enumerate().skip(1) {
            if b != 0.0 {
                let (s, c) = (m as f64 * t).sin_cos();
                f += b * s;
                fp += m as f64 * b * c;
            }
        }
        (f, fp)
    }

    pub fn point(&self, t: f64) -> Point {
        let (f, _) = self.radial(t);
        [self.center[0] + f * t.cos(), self.center[1] + f * t.sin()]
    }

    /// z'(t)
    pub fn tangent(&self, t: f64) -> Point {
        let (f, fp) = self.radial(t);
        let (s, c) = t.sin_cos();
        [fp * c - f * s, fp * s + f * c]
    }

    /// Minimum of f on an equispaced grid of `samples` points.
    pub fn min_radius(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| self.radial(2.0 * PI * i as f64 / samples as f64).0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn translated(&self, shift: Point) -> Self {
        let mut c = self.clone();
        c.center = [self.center[0] + shift[0], self.center[1] + shift[1]];
        c
    }

    /// Parse the plain-text geometry format: `a <m> <value>`, `b <m> <value>`,
    /// `center <x> <y>`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut curve = BoundaryCurve {
            cos_coeffs: vec![],
            sin_coeffs: vec![],
            center: [0.0, 0.0],
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err("expected three fields"));
            }
            match fields[0] {
                "a" | "b" => {
                    let m: usize = fields[1].parse().map_err(|_| err("bad mode index"))?;
                    let v: f64 = fields[2].parse().map_err(|_| err("bad coefficient"))?;
                    if !v.is_finite() {
                        return Err(err("non-finite coefficient"));
                    }
                    if fields[0] == "b" && m == 0 {
                        return Err(err("sine coefficient with m = 0"));
                    }
                    let list = if fields[0] == "a" {
                        &mut curve.cos_coeffs
                    } else {
                        &mut curve.sin_coeffs
                    };
                    if list.len() <= m {
                        list.resize(m + 1, 0.0);
                    }
                    list[m] = v;
                }
                "center" => {
                    let x: f64 = fields[1].parse().map_err(|_| err("bad center x"))?;
                    let y: f64 = fields[2].parse().map_err(|_| err("bad center y"))?;
                    curve.center = [x, y];
                }
                other => return Err(err(&format!("unknown key '{other}'"))),
            }
        }
        if curve.cos_coeffs.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "no coefficients given".into(),
            });
        }
        Ok(curve)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("center {:e} {:e}\n", self.center[0], self.center[1]);
        for (m, a) in self.cos_coeffs.iter().enumerate() {
            if *a != 0.0 || m == 0 {
                s += &format!("a {m} {a:e}\n");
            }
        }
        for (m, b) in self.sin_coeffs.iter().enumerate().skip(1) {
            if *b != 0.0 {
                s += &format!("b {m} {b:e}\n");
            }
        }
        s
    }
}

/// Reproducible random radial series with `terms` = 1 + 2·mmax coefficients.
///
/// a0 = 0.25 and a_2 = -`ellipse_bias` (vertical elongation); every other
/// mode draws a_m, b_m uniformly from [-1, 1]·0.03/m². If the result is not
/// positive on a 4096-point grid, the higher modes are halved and the curve
/// retried, up to 10 attempts.
pub fn random_fourier_curve(seed: u64, terms: usize, ellipse_bias: f64) -> Result<BoundaryCurve> {
    if terms == 0 || terms % 2 == 0 {
        return Err(Error::Config(format!(
            "terms must be odd and positive, got {terms}"
        )));
    }
    let mmax = (terms - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws_a = vec![0.0; mmax + 1];
    let mut draws_b = vec![0.0; mmax + 1];
    for m in 1..=mmax {
        draws_a[m] = rng.random_range(-1.0..=1.0);
        draws_b[m] = rng.random_range(-1.0..=1.0);
    }
    let mut amp = 0.03;
    for _ in 0..10 {
        let mut cos_coeffs = vec![0.0; mmax + 1];
        let mut sin_coeffs = vec![0.0; mmax + 1];
        cos_coeffs[0] = 0.25;
        for m in 1..=mmax {
            let decay = amp / (m * m) as f64;
            cos_coeffs[m] = decay * draws_a[m];
            sin_coeffs[m] = decay * draws_b[m];
        }
        if mmax >= 2 {
            cos_coeffs[2] = -ellipse_bias;
        }
        let curve = BoundaryCurve {
            cos_coeffs,
            sin_coeffs,
            center: [0.0, 0.0],
        };
        if curve.min_radius(4096) > 0.0 {
            return Ok(curve);
        }
        amp *= 0.5;
    }
    Err(Error::Geometry(
        "random curve not positive after 10 attempts".into(),
    ))
}

/// Trapezoid-rule nodes on a boundary curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretization {
    pub points: Vec<Point>,
    /// Outward unit normals.
    pub normals: Vec<Point>,
    /// |z'(t_j)|
    pub speeds: Vec<f64>,
    /// Curve center (after translation).
    pub center: Point,
}

impl Discretization {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parameter spacing 2π/N.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.len() as f64
    }

    /// Plain trapezoid weight (2π/N)|z'(t_j)|.
    pub fn weight(&self, j: usize) -> f64 {
        self.spacing() * self.speeds[j]
    }

    pub fn perimeter(&self) -> f64 {
        self.spacing() * self.speeds.iter().sum::<f64>()
    }

    pub fn max_abs_x(&self) -> f64 {
        self.points.iter().map(|p| p[0].abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_y(&self) -> f64 {
        self.points.iter().map(|p| p[1].abs()).fold(0.0, f64::max)
    }

    /// Distance from the center to the farthest node.
    pub fn radius(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] - self.center[0]).hypot(p[1] - self.center[1]))
            .fold(0.0, f64::max)
    }

    pub fn translate(&self, j: i64, lattice: &Lattice) -> Discretization {
        let dx = j as f64 * lattice.period;
        Discretization {
            points: self.points.iter().map(|p| [p[0] + dx, p[1]]).collect(),
            normals: self.normals.clone(),
            speeds: self.speeds.clone(),
            center: [self.center[0] + dx, self.center[1]],
        }
    }

    /// Whether `p` lies inside the polygon through the nodes.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the nearest node.
    pub fn node_distance(&self, p: Point) -> f64 {
        self.points
            .iter()
            .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest distance between nodes of `self` and `other`.
    pub fn min_distance(&self, other: &Discretization) -> f64 {
        let mut best = f64::INFINITY;
        for p in &self.points {
            for q in &other.points {
                best = best.min((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        best
    }
}

/// Nodes at t_j = 2πj/N, j = 1..N.
pub fn discretize(curve: &BoundaryCurve, n: usize) -> Result<Discretization> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::Config(format!(
            "node count must be even and at least 4, got {n}"
        )));
    }
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    for j in 1..=n {
        let t = 2.0 * PI * j as f64 / n as f64;
        let (f, _) = curve.radial(t);
        if f <= 0.0 {
            return Err(Error::Geometry(format!(
                "radial function non-positive at node {j}"
            )));
        }
        let zp = curve.tangent(t);
        let sp = zp[0].hypot(zp[1]);
        points.push(curve.point(t));
        normals.push([zp[1] / sp, -zp[0] / sp]);
        speeds.push(sp);
    }
    Ok(Discretization {
        points,
        normals,
        speeds,
        center: curve.center,
    })
}

/// Period of the grating along x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub period: f64,
}

impl Lattice {
    pub fn new(period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Config(format!(
                "period must be positive, got {period}"
            )));
        }
        Ok(Lattice { period })
    }

    pub fn vector(&self) -> Point {
        [self.period, 0.0]
    }
}

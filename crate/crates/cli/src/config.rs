//! Run configuration: INI-style `key = value` file merged with command-line
//! overrides, then validated into a [`RunConfig`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use grating::geometry::{random_fourier_curve, BoundaryCurve};
use grating::periodic::WoodMode;
use grating::{Error, Result};
use ini::Ini;

/// Keys accepted in the config file; flags map onto the same names.
pub const KEYS: &[&str] = &[
    "omega",
    "period",
    "geometry",
    "shape",
    "problem",
    "index",
    "nodes",
    "contour_nodes",
    "images",
    "tol",
    "theta",
    "angles_file",
    "cos_series",
    "bragg_y0",
    "bragg_samples",
    "wood",
    "wood_threshold",
    "flux_threshold",
    "out",
    "save_factorization",
    "load_factorization",
    "field_grid",
];

const PATH_KEYS: &[&str] = &["geometry", "angles_file", "out", "save_factorization", "load_factorization"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Dirichlet,
    Transmission,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Dirichlet => "dirichlet",
            Problem::Transmission => "transmission",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub corner: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub omega: f64,
    pub period: f64,
    pub curve: BoundaryCurve,
    pub problem: Problem,
    pub index: Option<f64>,
    pub nodes: usize,
    pub contour_nodes: usize,
    pub images: usize,
    pub tol: f64,
    pub thetas: Vec<f64>,
    pub bragg_y0: Option<f64>,
    pub bragg_samples: usize,
    pub wood: WoodMode,
    pub wood_threshold: Option<f64>,
    pub flux_threshold: f64,
    pub out: PathBuf,
    pub save_factorization: Option<PathBuf>,
    pub load_factorization: Option<PathBuf>,
    pub field_grid: Option<GridSpec>,
}

/// Raw settings: key → value, with paths already resolved.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Read a config file. Section headers are allowed and ignored; relative
    /// paths are taken from the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Parse { line: e.line, msg: e.msg.to_string() })?;
        let mut settings = Settings::default();
        for (_, props) in ini.iter() {
            for (key, value) in props.iter() {
                let key = key.trim().to_ascii_lowercase();
                if settings.values.contains_key(&key) {
                    return Err(Error::Config(format!("key `{key}` set twice")));
                }
                settings.set_from(&key, value.trim(), base)?;
            }
        }
        Ok(settings)
    }

    /// Set or replace one key; relative paths are joined onto `base`.
    pub fn set_from(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let value = if PATH_KEYS.contains(&key) && !value.is_empty() && Path::new(value).is_relative() {
            base.join(value).to_string_lossy().into_owned()
        } else {
            value.to_string()
        };
        // the three angle sources replace one another
        if ["theta", "angles_file", "cos_series"].contains(&key) {
            for k in ["theta", "angles_file", "cos_series"] {
                self.values.remove(k);
            }
        }
        if key == "geometry" {
            self.values.remove("shape");
        } else if key == "shape" {
            self.values.remove("geometry");
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_real(v).map_err(|e| Error::Config(format!("{key}: {e}")))).transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got `{v}`"))))
            .transpose()
    }

    pub fn build(&self) -> Result<RunConfig> {
        let omega = self.number("omega")?.ok_or_else(|| Error::Config("omega is required".into()))?;
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Config(format!("omega must be positive, got {omega}")));
        }
        let period = self.number("period")?.unwrap_or(1.0);
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        let curve = match (self.get("geometry"), self.get("shape")) {
            (Some(path), _) => BoundaryCurve::from_file(Path::new(path))?,
            (None, Some(spec)) => parse_shape(spec)?,
            (None, None) => return Err(Error::Config("either geometry (a file) or shape is required".into())),
        };
        let problem = match self.get("problem").unwrap_or("dirichlet") {
            "dirichlet" => Problem::Dirichlet,
            "transmission" => Problem::Transmission,
            other => return Err(Error::Config(format!("problem must be dirichlet or transmission, got `{other}`"))),
        };
        let index = self.number("index")?;
        if problem == Problem::Transmission && index.is_none() {
            return Err(Error::Config("transmission needs a refractive index".into()));
        }
        let nodes = self.count("nodes")?.unwrap_or(512);
        if nodes < 16 || nodes % 2 != 0 {
            return Err(Error::Config(format!("nodes must be even and at least 16, got {nodes}")));
        }
        let contour_nodes = self.count("contour_nodes")?.unwrap_or(90);
        if contour_nodes < 8 {
            return Err(Error::Config(format!("contour_nodes must be at least 8, got {contour_nodes}")));
        }
        let images = self.count("images")?.unwrap_or(1);
        if images > 2 {
            return Err(Error::Config(format!("images must be 0, 1 or 2, got {images}")));
        }
        let tol = self.number("tol")?.unwrap_or(1e-10);
        if !(1e-13..=1e-4).contains(&tol) {
            return Err(Error::Config(format!("tol must lie in [1e-13, 1e-4], got {tol:e}")));
        }
        let thetas = self.angles()?;
        for &t in &thetas {
            if !(t > -PI && t < 0.0) {
                return Err(Error::Domain(format!("incidence angle must lie in (-π, 0), got {t}")));
            }
        }
        let wood = match self.get("wood").unwrap_or("auto") {
            "auto" => WoodMode::Auto,
            "off" => WoodMode::Off,
            "force" => WoodMode::Force,
            other => return Err(Error::Config(format!("wood must be auto, off or force, got `{other}`"))),
        };
        let flux_threshold = self.number("flux_threshold")?.unwrap_or(1e-8);
        let field_grid = self.get("field_grid").map(parse_grid).transpose()?;
        Ok(RunConfig {
            omega,
            period,
            curve,
            problem,
            index,
            nodes,
            contour_nodes,
            images,
            tol,
            thetas,
            bragg_y0: self.number("bragg_y0")?,
            bragg_samples: self.count("bragg_samples")?.unwrap_or(40),
            wood,
            wood_threshold: self.number("wood_threshold")?,
            flux_threshold,
            out: PathBuf::from(self.get("out").unwrap_or("out")),
            save_factorization: self.get("save_factorization").filter(|s| !s.is_empty()).map(PathBuf::from),
            load_factorization: self.get("load_factorization").filter(|s| !s.is_empty()).map(PathBuf::from),
            field_grid,
        })
    }

    fn angles(&self) -> Result<Vec<f64>> {
        if let Some(list) = self.get("theta") {
            return list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_real(s).map_err(|e| Error::Config(format!("theta: {e}"))))
                .collect();
        }
        if let Some(path) = self.get("angles_file") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read angles file {path}: {e}")))?;
            return text
                .lines()
                .enumerate()
                .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty())
                .map(|(i, l)| parse_real(l).map_err(|msg| Error::Parse { line: i + 1, msg }))
                .collect();
        }
        if let Some(series) = self.get("cos_series") {
            let parts: Vec<&str> = series.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Config("cos_series takes `start, spacing, count`".into()));
            }
            let start = parse_real(parts[0]).map_err(Error::Config)?;
            let step = parse_real(parts[1]).map_err(Error::Config)?;
            let count: usize = parts[2].parse().map_err(|_| Error::Config(format!("bad count `{}`", parts[2])))?;
            return (0..count)
                .map(|k| {
                    let c = start + step * k as f64;
                    if c.abs() >= 1.0 {
                        Err(Error::Domain(format!("cos θ = {c} leaves (-1, 1)")))
                    } else {
                        Ok(-c.acos())
                    }
                })
                .collect();
        }
        Ok(Vec::new())
    }
}

/// A real number, or a multiple of π written `pi`, `-pi/5`, `2*pi/3`.
pub fn parse_real(text: &str) -> std::result::Result<f64, String> {
    let s = text.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let err = || format!("expected a number or a multiple of pi, got `{text}`");
    let lower = s.to_ascii_lowercase();
    let (num, den) = match lower.split_once('/') {
        Some((a, b)) => (a.trim().to_string(), b.trim().parse::<f64>().map_err(|_| err())?),
        None => (lower.clone(), 1.0),
    };
    let coef = match num.strip_suffix("pi").map(str::trim) {
        Some("") | Some("+") => 1.0,
        Some("-") => -1.0,
        Some(c) => c.strip_suffix('*').unwrap_or(c).trim().parse::<f64>().map_err(|_| err())?,
        None => return Err(err()),
    };
    Ok(coef * PI / den)
}

/// `circle R`, `star A0 AM M` or `random SEED TERMS BIAS`.
pub fn parse_shape(spec: &str) -> Result<BoundaryCurve> {
    let words: Vec<&str> = spec.split_whitespace().collect();
    let num = |i: usize| -> Result<f64> {
        words
            .get(i)
            .ok_or_else(|| Error::Config(format!("shape `{spec}` is missing parameters")))
            .and_then(|w| parse_real(w).map_err(Error::Config))
    };
    let int = |i: usize| -> Result<u64> {
        words
            .get(i)
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| Error::Config(format!("shape `{spec}`: parameter {i} must be an integer")))
    };
    let (curve, arity) = match words.first().copied() {
        Some("circle") => (BoundaryCurve::circle(num(1)?), 2),
        Some("star") => (BoundaryCurve::star(num(1)?, num(2)?, int(3)? as usize), 4),
        Some("random") => (random_fourier_curve(int(1)?, int(2)? as usize, num(3)?)?, 4),
        _ => return Err(Error::Config(format!("shape must be circle, star or random, got `{spec}`"))),
    };
    if words.len() != arity {
        return Err(Error::Config(format!("shape `{spec}` has {} parameters, expected {}", words.len() - 1, arity - 1)));
    }
    if curve.min_radius(4096) <= 0.0 {
        return Err(Error::Geometry(format!("shape `{spec}` has a non-positive radius")));
    }
    Ok(curve)
}

/// `x0,y0,x1,y1,nx,ny`
pub fn parse_grid(text: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(Error::Config(format!("field grid takes x0,y0,x1,y1,nx,ny, got `{text}`")));
    }
    let real = |i: usize| parse_real(parts[i]).map_err(Error::Config);
    let int = |i: usize| {
        parts[i].parse::<usize>().map_err(|_| Error::Config(format!("field grid count `{}` is not an integer", parts[i])))
    };
    let grid = GridSpec { origin: [real(0)?, real(1)?], corner: [real(2)?, real(3)?], nx: int(4)?, ny: int(5)? };
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::Config("field grid needs at least one point per axis".into()));
    }
    Ok(grid)
}

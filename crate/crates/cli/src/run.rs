//! One run: precompute, angle sweep, result files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use grating::geometry::{discretize, Lattice};
use grating::hbs::{CompressedInverse, HbsOptions};
use grating::kernels::CombinedFieldOperator;
use grating::periodic::{Formulation, PeriodicSolver, SolverOptions, WoodMode};
use grating::postprocess::{bragg_amplitudes, field_grid, write_atomic, BraggSpectrum};
use grating::transmission::TransmissionOperator;
use grating::{Error, Result};
use serde_json::{json, Value};

use crate::config::{Problem, RunConfig};

const FACTORIZATION_MAGIC: &str = "grating-factorization 1";
pub const BRAGG_HEADER: [&str; 9] = ["theta", "n", "kappa_n", "k_n", "re_c", "im_c", "re_d", "im_d", "flux_fraction"];

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub angles: usize,
    pub max_flux_error: f64,
    pub within_threshold: bool,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out)?;
    let disc = discretize(&cfg.curve, cfg.nodes)?;
    match cfg.problem {
        Problem::Dirichlet => run_with(CombinedFieldOperator::new(disc, cfg.omega)?, cfg),
        Problem::Transmission => {
            let index = cfg.index.ok_or_else(|| Error::Config("transmission needs a refractive index".into()))?;
            run_with(TransmissionOperator::new(disc, cfg.omega, index)?, cfg)
        }
    }
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        contour_nodes: cfg.contour_nodes,
        images: cfg.images,
        hbs: HbsOptions { tol: cfg.tol, ..HbsOptions::default() },
        wood: cfg.wood,
        wood_threshold: cfg.wood_threshold,
        bragg_y0: cfg.bragg_y0,
        bragg_samples: cfg.bragg_samples,
        ..SolverOptions::default()
    }
}

/// Everything the compressed inverse depends on. The period does not enter
/// the self block, so a factorization carries across periods.
fn fingerprint(cfg: &RunConfig, hbs: &HbsOptions) -> Value {
    json!({
        "problem": cfg.problem.name(),
        "omega": cfg.omega,
        "index": cfg.index.filter(|_| cfg.problem == Problem::Transmission),
        "nodes": cfg.nodes,
        "tol": hbs.tol,
        "leaf_size": hbs.leaf_size,
        "proxy_factor": hbs.proxy_factor,
        "proxy_count": hbs.proxy_count,
        "geometry": cfg.curve.to_text(),
    })
}

fn save_factorization(path: &Path, stamp: &Value, inverse: &CompressedInverse) -> Result<()> {
    let mut bytes = format!("{FACTORIZATION_MAGIC}\n{stamp}\n").into_bytes();
    inverse.write_to(&mut bytes)?;
    write_atomic(path, &bytes)
}

fn load_factorization(path: &Path, stamp: &Value) -> Result<CompressedInverse> {
    let bytes = fs::read(path)?;
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let magic = lines.next().unwrap_or_default();
    if magic != FACTORIZATION_MAGIC.as_bytes() {
        return Err(Error::Format(format!("{} is not a factorization file", path.display())));
    }
    let header = lines.next().ok_or_else(|| Error::Format("missing header".into()))?;
    let stored: Value =
        serde_json::from_slice(header).map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
    if &stored != stamp {
        return Err(Error::Config(format!(
            "factorization {} was built for a different setup: {stored}",
            path.display()
        )));
    }
    let mut body = lines.next().ok_or_else(|| Error::Format("missing matrix data".into()))?;
    CompressedInverse::read_from(&mut body)
}

/// k_n as one real column: k_n itself when propagating, −|k_n| when
/// evanescent (k_n = i|k_n|).
fn signed_kz(kz: grating::linalg::C64) -> f64 {
    if kz.im > 0.0 {
        -kz.im
    } else {
        kz.re
    }
}

fn bragg_rows(sp: &BraggSpectrum) -> Vec<[String; 9]> {
    (0..sp.orders.len())
        .map(|i| {
            [
                format!("{:e}", sp.theta),
                sp.orders[i].to_string(),
                format!("{:e}", sp.kappa[i]),
                format!("{:e}", signed_kz(sp.kz[i])),
                format!("{:e}", sp.up[i].re),
                format!("{:e}", sp.up[i].im),
                format!("{:e}", sp.down[i].re),
                format!("{:e}", sp.down[i].im),
                format!("{:e}", sp.flux_fraction[i]),
            ]
        })
        .collect()
}

fn csv_bytes(rows: &[[String; 9]]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(BRAGG_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn wood_name(mode: WoodMode) -> &'static str {
    match mode {
        WoodMode::Auto => "auto",
        WoodMode::Off => "off",
        WoodMode::Force => "force",
    }
}

fn run_with<F: Formulation>(form: F, cfg: &RunConfig) -> Result<Outcome> {
    let options = solver_options(cfg);
    let stamp = fingerprint(cfg, &options.hbs);
    let lattice = Lattice::new(cfg.period)?;
    let start = Instant::now();
    let (solver, source) = match &cfg.load_factorization {
        Some(path) => {
            let inverse = load_factorization(path, &stamp)?;
            (PeriodicSolver::with_inverse(form, lattice, options, inverse)?, "loaded")
        }
        None => (PeriodicSolver::new(form, lattice, options)?, "computed"),
    };
    if let Some(path) = &cfg.save_factorization {
        save_factorization(path, &stamp, &solver.inverse)?;
    }
    let precompute = start.elapsed().as_secs_f64();

    let sweep_start = Instant::now();
    let mut angle_records = Vec::new();
    let mut bucket_records = Vec::new();
    let mut all_rows = Vec::new();
    let mut max_flux = 0.0f64;
    if !cfg.thetas.is_empty() {
        let sweep = solver.solve_angles(&cfg.thetas)?;
        for bucket in &sweep.buckets {
            let m = bucket.system.contour.len();
            let w = bucket.system.wood.as_ref().map_or(0, |w| w.len());
            let q = bucket.members.len();
            bucket_records.push(json!({
                "angles": bucket.members,
                "q": q,
                "contour_nodes": m,
                "contour_shift": bucket.system.contour.shift,
                "wood_modes": w,
                "solve_seconds": bucket.seconds,
                "inverse_calls": bucket.stats.calls,
                "inverse_columns": bucket.stats.columns,
                "expected_columns": 2 * m + q + 2 * solver.options.images * solver.neighbors.rank + w,
            }));
        }
        for (i, &theta) in cfg.thetas.iter().enumerate() {
            let (bucket, col) = sweep.column(i);
            let sp = bragg_amplitudes(&bucket.system, &bucket.solution, col, theta, None, None)?;
            max_flux = max_flux.max(sp.flux_error);
            let rows = bragg_rows(&sp);
            write_atomic(&cfg.out.join(format!("bragg_{i:03}.csv")), &csv_bytes(&rows)?)?;
            all_rows.extend(rows);
            if let Some(g) = cfg.field_grid {
                let grid = field_grid(&bucket.system, &bucket.solution, col, g.origin, g.corner, g.nx, g.ny)?;
                grid.write(&cfg.out.join(format!("field_{i:03}")))?;
            }
            angle_records.push(json!({
                "index": i,
                "theta": theta,
                "bucket": sweep.angles[i].bucket,
                "flux_error": sp.flux_error,
                "bragg_y0": sp.y0,
                "propagating_orders": sp.propagating().map(|k| sp.orders[k]).collect::<Vec<_>>(),
            }));
        }
        write_atomic(&cfg.out.join("bragg.csv"), &csv_bytes(&all_rows)?)?;
    }
    let sweep_seconds = sweep_start.elapsed().as_secs_f64();

    let within = max_flux <= cfg.flux_threshold;
    let summary = json!({
        "status": if within { "ok" } else { "flux_threshold_exceeded" },
        "config": {
            "omega": cfg.omega,
            "period": cfg.period,
            "problem": cfg.problem.name(),
            "index": cfg.index,
            "nodes": cfg.nodes,
            "contour_nodes": cfg.contour_nodes,
            "images": cfg.images,
            "tol": cfg.tol,
            "wood": wood_name(cfg.wood),
            "angles": cfg.thetas.len(),
        },
        "factorization": {
            "source": source,
            "saved_to": cfg.save_factorization.as_ref().map(|p| p.display().to_string()),
        },
        "timings": {
            "compress_seconds": solver.timings.compress,
            "inverse_seconds": solver.timings.inverse,
            "neighbor_seconds": solver.timings.neighbors,
            "precompute_seconds": precompute,
            "sweep_seconds": sweep_seconds,
        },
        "tree": solver.tree.map(|t| json!({
            "depth": t.depth,
            "max_rank": t.max_rank,
            "stored_entries": t.stored_entries,
            "dense_fallbacks": t.dense_fallbacks,
        })),
        "neighbor_rank": solver.neighbors.rank,
        "bucket_count": bucket_records.len(),
        "buckets": bucket_records,
        "angles": angle_records,
        "max_flux_error": max_flux,
        "flux_threshold": cfg.flux_threshold,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(&cfg.out.join("summary.json"), text.as_bytes())?;
    Ok(Outcome { angles: cfg.thetas.len(), max_flux_error: max_flux, within_threshold: within })
}

/// Stable machine-readable name of an error's kind.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Geometry(_) => "geometry",
        Error::Config(_) => "config",
        Error::Contour(_) => "contour",
        Error::Dimension(_) => "dimension",
        Error::Singular { .. } => "singular",
        Error::Unsupported(_) => "unsupported",
        Error::Parse { .. } => "parse",
        Error::Io(_) => "io",
        Error::Format(_) => "format",
    }
}

pub fn error_record(e: &Error) -> Value {
    json!({ "status": "error", "error": { "kind": error_kind(e), "message": e.to_string() } })
}

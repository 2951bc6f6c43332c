use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use grating::Result;

mod config;
mod run;

use config::{RunConfig, Settings};

/// Exit status when every flux error is within the threshold.
const EXIT_OK: u8 = 0;
/// A module error; a JSON error record goes to stderr and `error.json`.
const EXIT_ERROR: u8 = 1;
/// Results were written but some flux error exceeds the threshold.
const EXIT_FLUX: u8 = 3;

/// Fast direct solver for plane-wave scattering from a periodic row of
/// obstacles. Settings come from the config file; flags override them.
#[derive(Debug, Parser)]
#[command(name = "grating", version)]
struct Args {
    /// INI-style config file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    period: Option<String>,
    /// Comma-separated incidence angles in (-π, 0); `pi` is understood.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// One angle per line.
    #[arg(long = "angles-file")]
    angles_file: Option<PathBuf>,
    /// Arithmetic series in cos θ: start,spacing,count.
    #[arg(long = "cos-series", allow_hyphen_values = true)]
    cos_series: Option<String>,
    /// Refractive index of the obstacle (transmission problem).
    #[arg(long, allow_hyphen_values = true)]
    nn: Option<String>,
    /// Boundary nodes.
    #[arg(long = "N")]
    nodes: Option<String>,
    /// Sommerfeld contour nodes.
    #[arg(long = "M")]
    contour_nodes: Option<String>,
    /// Neighbor images on each side (0, 1 or 2).
    #[arg(long = "P")]
    images: Option<String>,
    /// Compression tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// dirichlet or transmission.
    #[arg(long)]
    problem: Option<String>,
    /// Geometry file.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Built-in shape: `circle R`, `star A0 AM M`, `random SEED TERMS BIAS`.
    #[arg(long)]
    shape: Option<String>,
    /// auto, off or force.
    #[arg(long)]
    wood: Option<String>,
    #[arg(long = "flux-threshold")]
    flux_threshold: Option<String>,
    #[arg(long = "save-factorization")]
    save_factorization: Option<PathBuf>,
    #[arg(long = "load-factorization")]
    load_factorization: Option<PathBuf>,
    /// Scattered-field grid x0,y0,x1,y1,nx,ny written for every angle.
    #[arg(long = "field-grid", allow_hyphen_values = true)]
    field_grid: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        [
            ("omega", self.omega.clone()),
            ("period", self.period.clone()),
            ("theta", self.theta.clone()),
            ("angles_file", path(&self.angles_file)),
            ("cos_series", self.cos_series.clone()),
            ("index", self.nn.clone()),
            ("nodes", self.nodes.clone()),
            ("contour_nodes", self.contour_nodes.clone()),
            ("images", self.images.clone()),
            ("tol", self.tol.clone()),
            ("problem", self.problem.clone()),
            ("geometry", path(&self.geometry)),
            ("shape", self.shape.clone()),
            ("wood", self.wood.clone()),
            ("flux_threshold", self.flux_threshold.clone()),
            ("save_factorization", path(&self.save_factorization)),
            ("load_factorization", path(&self.load_factorization)),
            ("field_grid", self.field_grid.clone()),
            ("out", path(&self.out)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    fn settings(&self) -> Result<RunConfig> {
        let mut settings = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        for (key, value) in self.overrides() {
            settings.set_from(key, &value, Path::new("."))?;
        }
        settings.build()
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match args.settings() {
        Ok(cfg) => cfg,
        Err(e) => {
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            return report_error(&e, &out);
        }
    };
    match run::execute(&cfg) {
        Ok(outcome) => {
            println!(
                "{} angle(s), max flux error {:.3e} (threshold {:.1e}); results in {}",
                outcome.angles,
                outcome.max_flux_error,
                cfg.flux_threshold,
                cfg.out.display()
            );
            ExitCode::from(if outcome.within_threshold { EXIT_OK } else { EXIT_FLUX })
        }
        Err(e) => report_error(&e, &cfg.out),
    }
}

fn report_error(e: &grating::Error, out: &Path) -> ExitCode {
    let record = run::error_record(e);
    eprintln!("{record}");
    if std::fs::create_dir_all(out).is_ok() {
        let _ = grating::postprocess::write_atomic(&out.join("error.json"), record.to_string().as_bytes());
    }
    ExitCode::from(EXIT_ERROR)
}

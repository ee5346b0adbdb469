//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser};

use crate::config::DeviceSpec;
use crate::coupler::{bias_sweep, postprocess, thermal_equilibrium, Device};
use crate::error::Error;
use crate::output::{write_equilibrium, write_mesh, write_outputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "dgmos", version, about = "Subband energy-transport simulation of a double-gate MOSFET")]
pub struct Cli {
    /// Device configuration file (flat `section.key = value` lines).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    /// Directory for CSV files and the run manifest.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out_dir: PathBuf,

    #[command(flatten)]
    pub mode: Mode,

    /// Also write the mesh nodes and boundary tags to `mesh.csv`.
    #[arg(long)]
    pub dump_mesh: bool,

    /// Drift-diffusion regime: sets `phi_ph = 1e5 / phi0`.
    #[arg(long)]
    pub dd_limit: bool,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct Mode {
    /// Drain-bias sweep from 0 to `bias.vds_max` (the default).
    #[arg(long)]
    pub sweep: bool,

    /// Only the zero-bias equilibrium.
    #[arg(long)]
    pub equilibrium_only: bool,
}

fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Parse(_) | Error::Validation { .. } => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut spec = match DeviceSpec::from_file(&cli.config) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return match e.root() {
                Error::Io { .. } => EXIT_CONFIG,
                _ => exit_code(&e),
            };
        }
    };
    if cli.dd_limit {
        spec.phi_ph = 1e5 / spec.phi0;
    }
    match run(&cli, spec) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: &Cli, spec: DeviceSpec) -> crate::Result<i32> {
    let device = Device::new(spec)?;
    if cli.dump_mesh {
        let path = write_mesh(&device, &cli.out_dir)?;
        log::info!("mesh written to {}", path.display());
    }
    if cli.mode.equilibrium_only {
        let (state, trace) = thermal_equilibrium(&device)?;
        let solution = postprocess(&device, &state)?;
        let manifest = write_equilibrium(&device, &state, &trace, &solution, &cli.out_dir)?;
        log::info!("equilibrium after {} iterations; {} files", trace.iterations.len(), manifest.files.len());
        return Ok(EXIT_OK);
    }
    let sweep = bias_sweep(&device)?;
    let manifest = write_outputs(&device, &sweep, &cli.out_dir)?;
    log::info!("{} bias points; {} files in {}", sweep.points.len(), manifest.files.len(), cli.out_dir.display());
    match sweep.failure {
        None => Ok(EXIT_OK),
        Some(e) => {
            eprintln!("error: {e}");
            Ok(exit_code(&e))
        }
    }
}

//! Argument parsing and dispatch.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{parse_params, parse_point, parse_region, Overrides, RunConfig, Settings};
use crate::error::{LabError, Result};
use crate::output::Sink;
use crate::verify;

#[derive(Debug, Parser)]
#[command(name = "chaplygin-lab", version, about = "Analyze, simulate and verify generalized Chaplygin systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduced geometry, classification and invariant-measure verdict as JSON.
    Analyze(Common),
    /// Integrate the reduced equations and write a trajectory CSV with a JSON sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Propagate the variational equation and add `logdetJ` and `transport` columns.
        #[arg(long)]
        jacobian: bool,
    },
    /// Run the property suite and print a pass/fail table; exit 1 on any failure.
    Verify(Common),
    /// Lift reduced trajectories to the full configuration space.
    Reconstruct(Common),
    /// Fiber displacement of the horizontal lift around a closed base loop.
    Holonomy {
        #[command(flatten)]
        common: Common,
        /// `square:S`, `rect:A,B` or `circle:R`.
        #[arg(long = "loop", value_name = "SHAPE")]
        shape: Option<String>,
        /// Square or rectangle corner, circle center, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
    },
    /// Print the builtin systems with their parameter schemas.
    ListSystems {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Builtin system name.
    #[arg(long)]
    pub system: Option<String>,
    /// Parameter overrides `name=value`, comma separated or repeated.
    #[arg(long, num_args = 1.., value_name = "K=V")]
    pub params: Vec<String>,
    /// TOML or JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Box `lo:hi` per axis, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub region: Option<String>,
    /// Integration horizon.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Fixed RK4 step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Adaptive RK45 relative tolerance.
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Adaptive RK45 absolute tolerance.
    #[arg(long)]
    pub atol: Option<f64>,
    /// Seed of the sampled verification states and points.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; without it reports go to standard output.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Closedness threshold of the measure analysis.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl Common {
    pub fn settings(&self, shape: Option<String>, at: Option<&str>) -> Result<Settings> {
        let cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let ov = Overrides {
            system: self.system.clone(),
            params: parse_params(&self.params)?,
            region: self.region.as_deref().map(parse_region).transpose()?,
            t_final: self.t_final,
            step: self.step,
            rtol: self.rtol,
            atol: self.atol,
            seed: self.seed,
            out: self.out.clone(),
            threshold: self.threshold,
            shape,
            at: at.map(parse_point).transpose()?,
        };
        Settings::resolve(&cfg, &ov)
    }
}

/// Cap the global pool from `CHAPLYGIN_LAB_THREADS`; later calls are no-ops.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CHAPLYGIN_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| LabError::Config(format!("CHAPLYGIN_LAB_THREADS must be a positive integer, got `{v}`")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Execute one command, writing reports to `stdout` or the output directory.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Analyze(c) => {
            let s = c.settings(None, None)?;
            commands::analyze(&s, &mut Sink::new(s.out.clone(), stdout))
        }
        Command::Simulate { common, jacobian } => {
            let s = common.settings(None, None)?;
            commands::simulate(&s, *jacobian, &mut Sink::new(s.out.clone(), stdout))
        }
        Command::Verify(c) => {
            let s = c.settings(None, None)?;
            let rep = verify::verify(&s, &mut Sink::new(s.out.clone(), stdout))?;
            match rep.failed() {
                0 => Ok(()),
                failed => Err(LabError::VerifyFailed { failed, total: rep.checks.len() }),
            }
        }
        Command::Reconstruct(c) => {
            let s = c.settings(None, None)?;
            commands::reconstruct(&s, &mut Sink::new(s.out.clone(), stdout))
        }
        Command::Holonomy { common, shape, at } => {
            let s = common.settings(shape.clone(), at.as_deref())?;
            commands::holonomy_cmd(&s, &mut Sink::new(s.out.clone(), stdout))
        }
        Command::ListSystems { json } => commands::list_systems(*json, &mut Sink::new(None, stdout)),
    }
}

/// Parse `args` (program name first) and run, returning the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 2;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

//! Command-line driver for the boundary feedback synthesis toolkit.
//!
//! Subcommands cover the full pipeline: `spectrum` (modal scan table),
//! `critical-lengths` (the degenerate length set), `synthesize` (Gramian
//! feedback law as JSON), `simulate` (open/closed loop trajectories), and
//! `verify` (consolidated cross-check report). All artifacts are written
//! atomically, every run also records a `run_manifest.json`, and identical
//! configs (including the seed) reproduce identical artifact bytes — the
//! manifest alone carries wall time and is exempt.

mod commands;
mod config;
mod output;

use clap::Parser;

use config::{CommonArgs, IntegratorArg, RunConfig};

/// Driver-level error, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file, or input path. Exit code 1.
    Usage(String),
    /// Filesystem failure while writing artifacts. Exit code 1.
    Io(String),
    /// Numerical failure, including the critical-length refusal. Exit code 2.
    Numerical(String),
    /// A verification check failed unexpectedly. Exit code 3.
    VerificationFailed(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::VerificationFailed(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Io(m)
            | CliError::Numerical(m)
            | CliError::VerificationFailed(m) => m,
        }
    }
}

impl From<kdvstab::Error> for CliError {
    fn from(e: kdvstab::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kdvstab",
    version,
    about = "Boundary feedback synthesis for the linearized coupled KdV-KdV system",
    after_help = "Exit codes: 0 success, 1 usage error, 2 numerical failure, \
                  3 unexpected verification failure."
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Scan the scalar spectrum and write the mode table.
    Spectrum,
    /// List every critical length up to a bound, with generating pairs.
    CriticalLengths {
        /// Upper bound of the enumeration.
        #[arg(long, default_value_t = 30.0)]
        bound: f64,
    },
    /// Synthesize the stabilizing feedback law and write it as JSON.
    Synthesize,
    /// Simulate the open or closed loop and write the trajectory.
    Simulate {
        /// Feedback document produced by `synthesize`; when absent the law
        /// is synthesized in-process from the run config.
        #[arg(long)]
        feedback: Option<std::path::PathBuf>,
        /// Run the uncontrolled system instead (conserves the H1 norm).
        #[arg(long, default_value_t = false)]
        open_loop: bool,
        /// Also write an SVG line plot of log10 H1 norm and control.
        #[arg(long, default_value_t = false)]
        svg: bool,
        /// Time-stepping scheme.
        #[arg(long, value_enum, default_value_t = IntegratorArg::ExactExpm)]
        integrator: IntegratorArg,
        /// Record every STRIDE-th step.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Run the consolidated verification suite and write a report.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::CriticalLengths { .. } => "critical-lengths",
            Command::Synthesize => "synthesize",
            Command::Simulate { .. } => "simulate",
            Command::Verify => "verify",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = std::time::Instant::now();
    let config = RunConfig::resolve(&cli.common)?;
    let outcome = match &cli.command {
        Command::Spectrum => commands::spectrum::run(&config),
        Command::CriticalLengths { bound } => commands::critical::run(&config, *bound),
        Command::Synthesize => commands::synthesize::run(&config),
        Command::Simulate {
            feedback,
            open_loop,
            svg,
            integrator,
            stride,
        } => commands::simulate::run(
            &config,
            feedback.as_deref(),
            *open_loop,
            *svg,
            *integrator,
            *stride,
        ),
        Command::Verify => commands::verify::run(&config),
    };
    // The manifest is written even when the command fails (a failed verify
    // still documents its run); the command's error takes precedence.
    let manifest = output::write_manifest(&config, cli.command.name(), started);
    outcome.and(manifest)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // `--help`/`--version` land here too; those print to stdout and
            // exit 0, genuine parse errors print to stderr and exit 1.
            let is_usage_error = e.use_stderr();
            let _ = e.print();
            std::process::exit(if is_usage_error { 1 } else { 0 });
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("error: {}", err.message());
        std::process::exit(err.exit_code());
    }
}

//! Run configuration: defaults, flat key=value config files, and flag
//! overrides, merged with the precedence defaults < file < flags.

use std::path::{Path, PathBuf};

use serde::Serialize;

use kdvstab::gramian_feedback::ControlSide;

use crate::CliError;

/// Output format for tabular artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Control placement as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SideArg {
    /// Control through the first component's slope at `x = 0`.
    LeftEta,
    /// Control through the second component's slope at `x = L`.
    RightW,
}

impl From<SideArg> for ControlSide {
    fn from(s: SideArg) -> ControlSide {
        match s {
            SideArg::LeftEta => ControlSide::LeftEta,
            SideArg::RightW => ControlSide::RightW,
        }
    }
}

/// Time integrator as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorArg {
    ExactExpm,
    Trapezoidal,
}

impl From<IntegratorArg> for kdvstab::closed_loop::Integrator {
    fn from(i: IntegratorArg) -> Self {
        match i {
            IntegratorArg::ExactExpm => kdvstab::closed_loop::Integrator::ExactExpm,
            IntegratorArg::Trapezoidal => kdvstab::closed_loop::Integrator::Trapezoidal,
        }
    }
}

/// Common flags shared by every subcommand; `None` means "not given on the
/// command line", letting config-file values and defaults apply.
#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Flat key=value config file (keys match the long flag names).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Domain length L (must not be a critical length for synthesis).
    #[arg(long, global = true)]
    pub length: Option<f64>,
    /// Prescribed half decay rate; the closed loop decays like exp(-2*omega*t).
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Mode count: scalar eigenvalue rows for `spectrum`; the (even) system
    /// dimension (= 2x conjugate pairs) for synthesis and simulation.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    /// Simulation horizon.
    #[arg(long, global = true)]
    pub tmax: Option<f64>,
    /// Simulation time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// RNG seed for sampled states and trials.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Boundary condition carrying the control.
    #[arg(long, value_enum, global = true)]
    pub control_side: Option<SideArg>,
    /// Output format for tabular artifacts.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// Output directory (created if missing).
    #[arg(long = "out", global = true)]
    pub out: Option<PathBuf>,
    /// Proceed at critical lengths instead of refusing.
    #[arg(long, global = true, default_value_t = false)]
    pub allow_critical: bool,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub length: f64,
    pub omega: f64,
    pub n_modes: usize,
    pub t_max: f64,
    pub dt: f64,
    pub seed: u64,
    #[serde(serialize_with = "serialize_side")]
    pub control_side: ControlSide,
    pub format: Format,
    #[serde(serialize_with = "serialize_dir")]
    pub output_dir: PathBuf,
    pub allow_critical: bool,
}

fn serialize_side<S: serde::Serializer>(s: &ControlSide, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&s.to_string())
}

fn serialize_dir<S: serde::Serializer>(p: &Path, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&p.display().to_string())
}

/// Values parsed from a key=value config file.
#[derive(Debug, Default)]
struct FileConfig {
    length: Option<f64>,
    omega: Option<f64>,
    modes: Option<usize>,
    tmax: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
    control_side: Option<ControlSide>,
    format: Option<Format>,
    out: Option<PathBuf>,
    allow_critical: Option<bool>,
}

fn parse_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = FileConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                idx + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            CliError::Usage(format!(
                "{}:{}: invalid {what} value {value:?}",
                path.display(),
                idx + 1
            ))
        };
        match key {
            "length" => out.length = Some(value.parse().map_err(|_| bad("length"))?),
            "omega" => out.omega = Some(value.parse().map_err(|_| bad("omega"))?),
            "modes" => out.modes = Some(value.parse().map_err(|_| bad("modes"))?),
            "tmax" => out.tmax = Some(value.parse().map_err(|_| bad("tmax"))?),
            "dt" => out.dt = Some(value.parse().map_err(|_| bad("dt"))?),
            "seed" => out.seed = Some(value.parse().map_err(|_| bad("seed"))?),
            "control_side" => {
                out.control_side = Some(match value {
                    "left-eta" | "left_eta" => ControlSide::LeftEta,
                    "right-w" | "right_w" => ControlSide::RightW,
                    _ => return Err(bad("control_side")),
                })
            }
            "format" => {
                out.format = Some(match value {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(bad("format")),
                })
            }
            "out" => out.out = Some(PathBuf::from(value)),
            "allow_critical" => {
                out.allow_critical = Some(value.parse().map_err(|_| bad("allow_critical"))?)
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "{}:{}: unknown config key {key:?}",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Merge defaults, optional config file, and explicit flags.
    pub fn resolve(args: &CommonArgs) -> Result<RunConfig, CliError> {
        let file = match &args.config {
            Some(path) => parse_file(path)?,
            None => FileConfig::default(),
        };
        let config = RunConfig {
            length: args.length.or(file.length).unwrap_or(1.0),
            omega: args.omega.or(file.omega).unwrap_or(0.5),
            n_modes: args.modes.or(file.modes).unwrap_or(16),
            t_max: args.tmax.or(file.tmax).unwrap_or(10.0),
            dt: args.dt.or(file.dt).unwrap_or(0.01),
            seed: args.seed.or(file.seed).unwrap_or(42),
            control_side: args
                .control_side
                .map(ControlSide::from)
                .or(file.control_side)
                .unwrap_or(ControlSide::LeftEta),
            format: args.format.or(file.format).unwrap_or(Format::Csv),
            output_dir: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from(".")),
            allow_critical: args.allow_critical || file.allow_critical.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !self.length.is_finite() || self.length <= 0.0 {
            return Err(CliError::Usage(format!(
                "length must be positive, got {}",
                self.length
            )));
        }
        if !self.omega.is_finite() || self.omega <= 0.0 {
            return Err(CliError::Usage(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if self.n_modes == 0 || !self.n_modes.is_multiple_of(2) {
            return Err(CliError::Usage(format!(
                "modes must be a positive even integer (conjugate pairs), got {}",
                self.n_modes
            )));
        }
        if !self.t_max.is_finite() || self.t_max <= 0.0 {
            return Err(CliError::Usage(format!(
                "tmax must be positive, got {}",
                self.t_max
            )));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 || self.dt > self.t_max {
            return Err(CliError::Usage(format!(
                "dt must be positive and at most tmax, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

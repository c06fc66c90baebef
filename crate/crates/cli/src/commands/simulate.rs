//! `simulate`: integrate the open or closed loop and write the trajectory.

use std::path::Path;

use serde::Serialize;

use kdvstab::closed_loop::{
    simulate_closed_loop, simulate_open_loop, sim_result_to_csv, SimConfig, SimResult,
};
use kdvstab::gramian_feedback::{
    assemble_gramian, control_traces, feedback_gain, FeedbackDocument, FeedbackLaw,
};
use kdvstab::modal_spectrum::scan_eigenvalues;
use kdvstab::system_basis::lift_modes;
use kdvstab::C64;

use crate::commands::{guard_critical, lifted_family, seeded_reality_state};
use crate::config::{Format, IntegratorArg, RunConfig};
use crate::output::{svg_line_plot, to_json_bytes, write_atomic, Curve};
use crate::CliError;

/// Relative tolerance when matching a feedback document against a fresh
/// spectral scan of the same length.
const DOCUMENT_MATCH_TOL: f64 = 1e-9;

/// Rebuild a [`FeedbackLaw`] from a serialized document: rescan the
/// spectrum at the documented length and verify that every mode entry
/// (branch index, sign, eigenvalue, control trace) matches the scan.
fn load_law(path: &Path) -> Result<FeedbackLaw, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read feedback file {}: {e}", path.display()))
    })?;
    let doc = FeedbackDocument::from_json(&text)?;
    if doc.modes.len() % 2 != 0 {
        return Err(CliError::Numerical(format!(
            "feedback document has an odd mode count {}",
            doc.modes.len()
        )));
    }
    let scalars = scan_eigenvalues(doc.length, doc.modes.len() / 2)?;
    let modes = lift_modes(&scalars);
    let traces = control_traces(&modes, doc.control_side);
    for (j, (entry, mode)) in doc.modes.iter().zip(modes.iter()).enumerate() {
        let lambda_tol = DOCUMENT_MATCH_TOL * f64::max(1.0, entry.lambda.abs());
        let beta = C64::new(entry.beta.0, entry.beta.1);
        let beta_tol = DOCUMENT_MATCH_TOL * f64::max(1.0, beta.norm());
        if entry.n != mode.base.n
            || entry.sigma != mode.sign
            || (entry.lambda - mode.base.lambda).abs() > lambda_tol
            || (entry.mu - mode.mu).abs() > lambda_tol
            || (beta - traces[j]).norm() > beta_tol
        {
            return Err(CliError::Numerical(format!(
                "feedback document entry {j} (n={}, sigma={}) does not match \
                 a fresh spectral scan at L={}; the document was likely \
                 produced by a different tool version or corrupted",
                entry.n, entry.sigma, doc.length
            )));
        }
    }
    Ok(FeedbackLaw {
        omega: doc.omega,
        control_side: doc.control_side,
        modes,
        gain: doc.gain_vector(),
    })
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    times: &'a [f64],
    h1_norms: &'a [f64],
    control: &'a [f64],
}

#[derive(Serialize)]
struct Summary<'a> {
    open_loop: bool,
    length: f64,
    integrator: &'a str,
    t_max: f64,
    dt: f64,
    stride: usize,
    seed: u64,
    /// Present for closed-loop runs only.
    omega: Option<f64>,
    control_side: Option<String>,
    target_rate: Option<f64>,
    samples: usize,
    initial_h1: f64,
    final_h1: f64,
    fitted_rate: f64,
    fit_residual: f64,
    warnings: &'a [String],
}

pub fn run(
    config: &RunConfig,
    feedback: Option<&Path>,
    open_loop: bool,
    svg: bool,
    integrator: IntegratorArg,
    stride: usize,
) -> Result<(), CliError> {
    if open_loop && feedback.is_some() {
        return Err(CliError::Usage(
            "--open-loop and --feedback are mutually exclusive".into(),
        ));
    }
    if stride == 0 {
        return Err(CliError::Usage("stride must be at least 1".into()));
    }
    let sim_cfg = SimConfig {
        t_max: config.t_max,
        dt: config.dt,
        record_stride: stride,
        integrator: integrator.into(),
    };
    let integrator_name = match integrator {
        IntegratorArg::ExactExpm => "exact_expm",
        IntegratorArg::Trapezoidal => "trapezoidal",
    };

    let (result, length, law): (SimResult, f64, Option<FeedbackLaw>) = if open_loop {
        let modes = lifted_family(config)?;
        let state0 = seeded_reality_state(&modes, config.seed)?;
        (simulate_open_loop(&state0, &sim_cfg)?, config.length, None)
    } else {
        let law = match feedback {
            Some(path) => {
                let law = load_law(path)?;
                if (law.modes[0].base.length - config.length).abs() > 1e-12 {
                    println!(
                        "note: feedback document was synthesized at L={}, \
                         overriding the configured length {}",
                        law.modes[0].base.length, config.length
                    );
                }
                law
            }
            None => {
                guard_critical(config)?;
                let modes = lifted_family(config)?;
                let gram = assemble_gramian(&modes, config.omega, config.control_side)?;
                feedback_gain(&gram)?
            }
        };
        let state0 = seeded_reality_state(&law.modes, config.seed)?;
        let result = simulate_closed_loop(&state0, &law, &sim_cfg)?;
        let length = law.modes[0].base.length;
        (result, length, Some(law))
    };

    let trajectory_path = match config.format {
        Format::Csv => {
            let path = config.output_dir.join("trajectory.csv");
            write_atomic(&path, sim_result_to_csv(&result).as_bytes())?;
            path
        }
        Format::Json => {
            let path = config.output_dir.join("trajectory.json");
            write_atomic(
                &path,
                &to_json_bytes(&TrajectoryJson {
                    times: &result.times,
                    h1_norms: &result.h1_norms,
                    control: &result.control,
                }),
            )?;
            path
        }
    };

    let summary = Summary {
        open_loop,
        length,
        integrator: integrator_name,
        t_max: config.t_max,
        dt: config.dt,
        stride,
        seed: config.seed,
        omega: law.as_ref().map(|l| l.omega),
        control_side: law.as_ref().map(|l| l.control_side.to_string()),
        target_rate: law.as_ref().map(|l| -2.0 * l.omega),
        samples: result.times.len(),
        initial_h1: result.h1_norms.first().copied().unwrap_or(f64::NAN),
        final_h1: result.h1_norms.last().copied().unwrap_or(f64::NAN),
        fitted_rate: result.fitted_rate,
        fit_residual: result.residual,
        warnings: &result.warnings,
    };
    write_atomic(
        &config.output_dir.join("summary.json"),
        &to_json_bytes(&summary),
    )?;

    if svg {
        let log_norm: Vec<(f64, f64)> = result
            .times
            .iter()
            .zip(&result.h1_norms)
            .filter(|&(_, &n)| n > 0.0)
            .map(|(&t, &n)| (t, n.log10()))
            .collect();
        let control: Vec<(f64, f64)> = result
            .times
            .iter()
            .zip(&result.control)
            .map(|(&t, &u)| (t, u))
            .collect();
        let title = if open_loop {
            format!("open loop, L={length}")
        } else {
            format!(
                "closed loop, L={length}, omega={}",
                law.as_ref().map(|l| l.omega).unwrap_or(f64::NAN)
            )
        };
        let plot = svg_line_plot(
            &title,
            "t",
            &[
                Curve {
                    label: "log10 H1 norm",
                    color: "#1f6fb2",
                    points: log_norm,
                },
                Curve {
                    label: "control",
                    color: "#c03a2b",
                    points: control,
                },
            ],
        );
        write_atomic(&config.output_dir.join("trajectory.svg"), plot.as_bytes())?;
    }

    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "simulate: {} over [0, {}], {} samples, H1 {:.6e} -> {:.6e}, \
         fitted rate {:.6} -> {}",
        if open_loop { "open loop" } else { "closed loop" },
        config.t_max,
        result.times.len(),
        summary.initial_h1,
        summary.final_h1,
        result.fitted_rate,
        trajectory_path.display()
    );
    Ok(())
}

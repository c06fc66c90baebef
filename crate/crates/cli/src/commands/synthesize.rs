//! `synthesize`: assemble the Gramian and write the feedback law document.

use kdvstab::gramian_feedback::{assemble_gramian, feedback_gain};
use kdvstab::linalg::spectral_abscissa;

use crate::commands::{guard_critical, lifted_family};
use crate::config::RunConfig;
use crate::output::write_atomic;
use crate::CliError;

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    guard_critical(config)?;
    let modes = lifted_family(config)?;
    let gram = assemble_gramian(&modes, config.omega, config.control_side)?;
    let law = feedback_gain(&gram)?;

    let mut json = law.to_json();
    json.push('\n');
    let path = config.output_dir.join("feedback.json");
    write_atomic(&path, json.as_bytes())?;

    let abscissa = spectral_abscissa(&law.closed_loop_matrix());
    println!(
        "synthesize: {} modes, omega={}, side={}, Gramian eigs [{:.3e}, {:.3e}], \
         closed-loop abscissa {abscissa:.6} (target {:.6}) -> {}",
        law.modes.len(),
        config.omega,
        config.control_side,
        gram.min_eigenvalue(),
        gram.max_eigenvalue(),
        -2.0 * config.omega,
        path.display()
    );
    Ok(())
}

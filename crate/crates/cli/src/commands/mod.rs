//! Subcommand implementations and the helpers they share.

pub mod critical;
pub mod simulate;
pub mod spectrum;
pub mod synthesize;
pub mod verify;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use kdvstab::modal_spectrum::scan_eigenvalues;
use kdvstab::observability::{is_critical, CriticalityVerdict};
use kdvstab::system_basis::{hs_norm, lift_modes, ModalState, SystemMode};
use kdvstab::{tol, C64};

use crate::config::RunConfig;
use crate::CliError;

/// Scan and lift the mode family for synthesis-side commands, where
/// `n_modes` is the system dimension (two lifted modes per scalar mode).
pub fn lifted_family(config: &RunConfig) -> Result<Vec<SystemMode>, CliError> {
    let scalars = scan_eigenvalues(config.length, config.n_modes / 2)?;
    Ok(lift_modes(&scalars))
}

/// Refuse critical lengths unless the override flag is set.
///
/// At a critical length some eigenfunction has vanishing boundary slope, so
/// the mode is invisible at the boundary and the Gramian is singular; the
/// refusal names the offending critical-set entry.
pub fn guard_critical(config: &RunConfig) -> Result<CriticalityVerdict, CliError> {
    let verdict = is_critical(config.length, tol::CRITICALITY_TOL)?;
    if verdict.critical && !config.allow_critical {
        let (k, l) = verdict.nearest.pairs.first().copied().unwrap_or((0, 0));
        return Err(CliError::Numerical(format!(
            "length {} is critical: within {:.3e} of the critical length {} \
             (k={k}, l={l}), where a mode's boundary slope vanishes and the \
             Gramian is singular; pass --allow-critical to proceed anyway",
            config.length, verdict.distance, verdict.nearest.value,
        )));
    }
    Ok(verdict)
}

/// Seeded random real-valued initial state with unit `H^1` norm:
/// independent standard complex Gaussian coefficients on the `sigma = +`
/// modes, conjugated onto their `sigma = -` partners.
pub fn seeded_reality_state(modes: &[SystemMode], seed: u64) -> Result<ModalState, CliError> {
    if modes.is_empty() {
        return Err(CliError::Numerical(
            "cannot sample an initial state over an empty mode family".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = DVector::<C64>::zeros(modes.len());
    let mut k = 0;
    while k < modes.len() {
        let g = C64::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ) / std::f64::consts::SQRT_2;
        coeffs[k] = g;
        if k + 1 < modes.len() && modes[k].sign == 1 && modes[k + 1].sign == -1 {
            coeffs[k + 1] = g.conj();
            k += 2;
        } else {
            k += 1;
        }
    }
    let length = modes[0].base.length;
    let state = ModalState::new(length, modes.to_vec(), coeffs, true)?;
    let norm = hs_norm(&state, 1.0);
    if norm <= 0.0 {
        return Err(CliError::Numerical(
            "sampled initial state has zero norm".into(),
        ));
    }
    let coeffs = state.coeffs / C64::new(norm, 0.0);
    Ok(ModalState::new(length, state.modes, coeffs, true)?)
}

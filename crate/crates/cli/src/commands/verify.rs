//! `verify`: run the consolidated cross-check suite and write a
//! deterministic JSON report.
//!
//! Every check lands in one of three statuses: `pass`, `fail`, or
//! `expected-fail`. The last marks degeneracy findings at a critical length
//! run under `--allow-critical` — there the theory predicts a silent mode
//! and a singular Gramian, so observing them is correct behavior. The
//! command exits 3 exactly when some check fails unexpectedly.
//!
//! The report (`verify_report.json`) intentionally omits wall time so that
//! two runs with identical configuration produce identical bytes.

use nalgebra::DMatrix;
use serde::Serialize;

use kdvstab::closed_loop::{simulate_closed_loop, simulate_open_loop, Integrator, SimConfig};
use kdvstab::fd_oracle::{
    build_discrete_a, build_discrete_b_op, discrete_eigs, skew_defect, symmetry_defect, Grid,
};
use kdvstab::gramian_feedback::{assemble_gramian, feedback_gain, gramian_quadrature_oracle};
use kdvstab::linalg::{op_norm_est, spectral_abscissa};
use kdvstab::modal_spectrum::{closed_form_sq_integral, scan_eigenvalues};
use kdvstab::observability::{ingham_constants_for_side, trace_nonvanishing, CriticalityVerdict};
use kdvstab::system_basis::{lift_modes, required_points, system_gram};
use kdvstab::{tol, C64};

use crate::commands::{guard_critical, seeded_reality_state};
use crate::config::RunConfig;
use crate::output::{to_json_bytes, write_atomic};
use crate::CliError;

// Check tolerances, pinned here so the report is self-describing.
const FD_EIG_COUNT: usize = 4;
const FD_POINTS: usize = 512;
const FD_EIG_REL_TOL: f64 = 5e-3;
const STRUCTURE_DEFECT_TOL: f64 = 1e-6;
const NORMALIZATION_TOL: f64 = 1e-8;
const GRAM_IDENTITY_TOL: f64 = 1e-6;
const GRAMIAN_QUAD_TOL: f64 = 1e-6;
const COERCIVITY_RATIO: f64 = 1e-8;
const INGHAM_RATIO: f64 = 1e-6;
const INGHAM_TRIALS: usize = 64;
const INGHAM_HORIZON: f64 = 1.0;
const DECAY_MARGIN: f64 = 0.9; // fitted rate must reach -2*omega*0.9 = -1.8*omega
const OPEN_LOOP_DRIFT_TOL: f64 = 1e-12;
const SIM_T_MAX: f64 = 10.0;
const SIM_DT: f64 = 0.01;

#[derive(Serialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Status {
    Pass,
    Fail,
    ExpectedFail,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    status: Status,
    detail: String,
}

#[derive(Serialize)]
struct Summary {
    pass: usize,
    fail: usize,
    expected_fail: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    tool_version: &'a str,
    config: &'a RunConfig,
    criticality: &'a CriticalityVerdict,
    checks: Vec<Check>,
    summary: Summary,
}

/// Records one check, downgrading a failure to `expected-fail` when the run
/// is at a critical length (degeneracy is the predicted outcome there).
struct Recorder {
    checks: Vec<Check>,
    at_critical: bool,
}

impl Recorder {
    fn record(&mut self, name: &'static str, ok: bool, detail: String) {
        let status = if ok {
            Status::Pass
        } else if self.at_critical {
            Status::ExpectedFail
        } else {
            Status::Fail
        };
        self.checks.push(Check {
            name,
            status,
            detail,
        });
    }

    /// Records a degeneracy-sensitive check that could not run because an
    /// upstream degeneracy already surfaced (e.g. no Gramian factorization
    /// at a critical length).
    fn record_blocked(&mut self, name: &'static str, reason: &str) {
        let status = if self.at_critical {
            Status::ExpectedFail
        } else {
            Status::Fail
        };
        self.checks.push(Check {
            name,
            status,
            detail: format!("not run: {reason}"),
        });
    }
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let verdict = guard_critical(config)?;
    let mut rec = Recorder {
        checks: Vec::new(),
        at_critical: verdict.critical,
    };

    let scalars = scan_eigenvalues(config.length, config.n_modes / 2)?;
    let modes = lift_modes(&scalars);

    // --- 1. Scalar spectrum against the finite difference oracle. ---------
    {
        let grid = Grid::new(config.length, FD_POINTS)?;
        let op = build_discrete_b_op(&grid);
        let pairs = discrete_eigs(&op, FD_EIG_COUNT)?;
        let mut worst: f64 = 0.0;
        for (value, _) in &pairs {
            let lam = value.re;
            let nearest = scalars
                .iter()
                .map(|m| (m.lambda - lam).abs() / lam.abs().max(1.0))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
        rec.record(
            "spectrum_fd_oracle",
            worst < FD_EIG_REL_TOL,
            format!(
                "lowest {FD_EIG_COUNT} eigenvalues at n_points={FD_POINTS}: \
                 worst relative deviation {worst:.3e} (tol {FD_EIG_REL_TOL:.1e})"
            ),
        );
    }

    // --- 2. Discrete structure: A skew-symmetry, B symmetry. --------------
    // The weak-form defects on unit-norm smooth states are pure boundary
    // truncation error; the tolerance is relative to the operator norm,
    // which is the scale the defect would have if the structure were wrong.
    {
        let grid = Grid::new(config.length, FD_POINTS)?;
        let a = build_discrete_a(&grid);
        let b = build_discrete_b_op(&grid);
        let skew = skew_defect(&a, 8) / op_norm_est(&a.matrix, 30);
        let sym = symmetry_defect(&b, 8) / op_norm_est(&b.matrix, 30);
        let worst = skew.max(sym);
        rec.record(
            "discrete_structure",
            worst < STRUCTURE_DEFECT_TOL,
            format!(
                "skew defect {skew:.3e}, symmetry defect {sym:.3e} \
                 relative to the operator norm (tol {STRUCTURE_DEFECT_TOL:.1e})"
            ),
        );
    }

    // --- 3. Mode normalization: closed form vs quadrature. ---------------
    {
        let mut worst_closed: f64 = 0.0;
        for m in &scalars {
            let closed = closed_form_sq_integral(&m.roots, &m.coeffs, m.length);
            worst_closed = worst_closed.max((closed - C64::new(1.0, 0.0)).norm());
        }
        // Floor the quadrature resolution: `required_points` scales with the
        // family's top frequency, which under-resolves small families
        // relative to the 1e-6 identity tolerance.
        let n_quad = usize::max(required_points(&modes, config.length), 2001) | 1;
        let grid = Grid::new(config.length, n_quad)?;
        let gram = system_gram(&modes, &grid);
        let identity = DMatrix::<C64>::identity(modes.len(), modes.len());
        let gram_dev = (gram - identity)
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        rec.record(
            "mode_normalization",
            worst_closed < NORMALIZATION_TOL && gram_dev < GRAM_IDENTITY_TOL,
            format!(
                "closed-form norm defect {worst_closed:.3e} (tol {NORMALIZATION_TOL:.1e}), \
                 system Gram deviation from identity {gram_dev:.3e} (tol {GRAM_IDENTITY_TOL:.1e})"
            ),
        );
    }

    // --- 4. Boundary trace non-vanishing. ---------------------------------
    {
        let report = trace_nonvanishing(&scalars)?;
        rec.record(
            "trace_nonvanishing",
            report.flagged.is_empty(),
            format!(
                "smallest margin {:.3e}, flagged branches {:?}",
                report.min_ratio, report.flagged
            ),
        );
    }

    // --- 5. Observability sandwich constants. -----------------------------
    {
        match ingham_constants_for_side(
            &modes,
            INGHAM_HORIZON,
            INGHAM_TRIALS,
            config.seed,
            config.control_side,
        ) {
            Ok(report) => {
                let ok = report.c_lower >= INGHAM_RATIO * report.c_upper && report.c_lower > 0.0;
                rec.record(
                    "observability_sandwich",
                    ok,
                    format!(
                        "c_lower {:.6e}, C_upper {:.6e} over {INGHAM_TRIALS} trials \
                         at T={INGHAM_HORIZON} (require c_lower >= {INGHAM_RATIO:.1e} C_upper)",
                        report.c_lower, report.c_upper
                    ),
                );
            }
            Err(e) => rec.record("observability_sandwich", false, format!("collapsed: {e}")),
        }
    }

    // --- 6..9. Gramian and closed loop. ------------------------------------
    match assemble_gramian(&modes, config.omega, config.control_side) {
        Ok(gram) => {
            let defect = gram.hermitian_defect();
            rec.record(
                "gramian_hermitian",
                defect < tol::GRAMIAN_HERMITIAN_TOL,
                format!(
                    "relative Hermitian defect {defect:.3e} \
                     (tol {:.1e})",
                    tol::GRAMIAN_HERMITIAN_TOL
                ),
            );

            let (min_eig, max_eig) = (gram.min_eigenvalue(), gram.max_eigenvalue());
            rec.record(
                "gramian_coercive",
                min_eig >= COERCIVITY_RATIO * max_eig,
                format!(
                    "eigenvalue range [{min_eig:.6e}, {max_eig:.6e}] \
                     (require min >= {COERCIVITY_RATIO:.1e} max)"
                ),
            );

            let oracle = gramian_quadrature_oracle(
                &modes,
                config.omega,
                config.control_side,
                40.0 / (2.0 * config.omega),
            );
            let scale = gram
                .matrix
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max)
                .max(1e-300);
            let quad_dev = (&gram.matrix - &oracle)
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max)
                / scale;
            rec.record(
                "gramian_quadrature",
                quad_dev < GRAMIAN_QUAD_TOL,
                format!(
                    "worst entry deviation from time quadrature {quad_dev:.3e} \
                     (relative, tol {GRAMIAN_QUAD_TOL:.1e})"
                ),
            );

            match feedback_gain(&gram) {
                Ok(law) => {
                    let abscissa = spectral_abscissa(&law.closed_loop_matrix());
                    let target = -2.0 * config.omega * (1.0 - tol::ABSCISSA_SLACK);
                    rec.record(
                        "closed_loop_abscissa",
                        abscissa <= target,
                        format!(
                            "spectral abscissa {abscissa:.9} (require <= {target:.9})"
                        ),
                    );

                    let sim_cfg = SimConfig {
                        t_max: SIM_T_MAX,
                        dt: SIM_DT,
                        record_stride: 1,
                        integrator: Integrator::ExactExpm,
                    };
                    let state0 = seeded_reality_state(&law.modes, config.seed)?;
                    match simulate_closed_loop(&state0, &law, &sim_cfg) {
                        Ok(result) => {
                            let required = -2.0 * config.omega * DECAY_MARGIN;
                            let ok = result.fitted_rate <= required
                                && result.warnings.is_empty();
                            rec.record(
                                "closed_loop_decay",
                                ok,
                                format!(
                                    "fitted rate {:.6} over [0, {SIM_T_MAX}] \
                                     (require <= {required:.6}), {} warnings",
                                    result.fitted_rate,
                                    result.warnings.len()
                                ),
                            );
                        }
                        Err(e) => {
                            rec.record("closed_loop_decay", false, format!("simulation failed: {e}"))
                        }
                    }
                }
                Err(e) => {
                    rec.record_blocked("closed_loop_abscissa", &format!("no feedback gain: {e}"));
                    rec.record_blocked("closed_loop_decay", &format!("no feedback gain: {e}"));
                }
            }
        }
        Err(e) => {
            let reason = format!("no Gramian factorization: {e}");
            rec.record(
                "gramian_coercive",
                false,
                format!("factorization refused: {e}"),
            );
            rec.record_blocked("gramian_hermitian", &reason);
            rec.record_blocked("gramian_quadrature", &reason);
            rec.record_blocked("closed_loop_abscissa", &reason);
            rec.record_blocked("closed_loop_decay", &reason);
        }
    }

    // --- 10. Open-loop isometry. -------------------------------------------
    {
        let sim_cfg = SimConfig {
            t_max: SIM_T_MAX,
            dt: SIM_DT,
            record_stride: 1,
            integrator: Integrator::ExactExpm,
        };
        let state0 = seeded_reality_state(&modes, config.seed)?;
        let result = simulate_open_loop(&state0, &sim_cfg)?;
        let first = result.h1_norms.first().copied().unwrap_or(f64::NAN);
        let drift = result
            .h1_norms
            .iter()
            .map(|n| (n - first).abs())
            .fold(0.0f64, f64::max)
            / first.max(1e-300);
        rec.record(
            "open_loop_isometry",
            drift < OPEN_LOOP_DRIFT_TOL,
            format!(
                "relative H1 drift {drift:.3e} over [0, {SIM_T_MAX}] \
                 (tol {OPEN_LOOP_DRIFT_TOL:.1e})"
            ),
        );
    }

    let summary = Summary {
        pass: rec
            .checks
            .iter()
            .filter(|c| c.status == Status::Pass)
            .count(),
        fail: rec
            .checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .count(),
        expected_fail: rec
            .checks
            .iter()
            .filter(|c| c.status == Status::ExpectedFail)
            .count(),
    };
    let report = Report {
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        criticality: &verdict,
        checks: rec.checks,
        summary,
    };
    let path = config.output_dir.join("verify_report.json");
    write_atomic(&path, &to_json_bytes(&report))?;

    for check in &report.checks {
        let tag = match check.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::ExpectedFail => "expected-fail",
        };
        println!("{tag:13} {} — {}", check.name, check.detail);
    }
    println!(
        "verify: {} pass, {} fail, {} expected-fail -> {}",
        report.summary.pass,
        report.summary.fail,
        report.summary.expected_fail,
        path.display()
    );

    if report.summary.fail > 0 {
        return Err(CliError::VerificationFailed(format!(
            "{} unexpected check failure(s); see {}",
            report.summary.fail,
            path.display()
        )));
    }
    Ok(())
}

//! Observability diagnostics: critical lengths, boundary trace series, and
//! Ingham-type constants.
//!
//! The synthesis rests on the boundary observation being able to see every
//! mode. Quantitatively, over a horizon `T` the time-integrated trace
//! energy must sandwich the state norm,
//!
//! ```text
//!     c_lower ||y0||_1^2  <=  Int_0^T |w_x(0, t)|^2 dt  <=  C_upper ||y0||_1^2,
//! ```
//!
//! which holds with `c_lower > 0` exactly when no mode's boundary slope
//! vanishes. The slopes vanish only at the critical domain lengths
//!
//! ```text
//!     N = { 2 pi / sqrt(3) * sqrt(k^2 + k l + l^2) : k, l >= 1 },
//! ```
//!
//! the smallest being `2 pi` (`k = l = 1`), at which a stationary
//! eigenfunction with silent boundary trace appears and both
//! controllability and observability collapse.
//!
//! This module enumerates the critical set, evaluates boundary trace series
//! from modal data, estimates the sandwich constants by seeded random
//! sampling plus per-basis-mode evaluation, and reports the mode-wise
//! non-vanishing margin `|v_n'(0)|^2 / (1 + |lambda_n|)^{2/3}` whose
//! positivity is the checkable form of the observability hypothesis.
//!
//! The mirrored observation for right-side control reads the slope of the
//! first component at `x = L` instead; mode for mode it has the same
//! magnitude as the left trace, which is why one non-vanishing report
//! serves both control placements.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gramian_feedback::ControlSide;
use crate::linalg::simpson;
use crate::modal_spectrum::EigenMode;
use crate::system_basis::{ModalState, SystemMode};
use crate::tol;
use crate::{Error, Result, C64};

const TWO_PI: f64 = std::f64::consts::TAU;

/// One critical length together with every generating exponent pair
/// (canonicalized to `k <= l`; swapped pairs give the same value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLength {
    /// The length `2 pi / sqrt(3) * sqrt(k^2 + k l + l^2)`.
    pub value: f64,
    /// All `(k, l)` with `k <= l` generating this value.
    pub pairs: Vec<(u32, u32)>,
}

/// The critical set `N` truncated at `bound`, sorted ascending with
/// duplicate values collapsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLengthSet {
    /// Upper bound of the enumeration.
    pub bound: f64,
    /// Entries sorted by ascending value.
    pub entries: Vec<CriticalLength>,
}

/// Enumerate every critical length up to `bound`.
///
/// `2 pi / sqrt(3) * sqrt(m) <= bound` is equivalent to
/// `m = k^2 + k l + l^2 <= 3 bound^2 / (4 pi^2)`, so the search over
/// exponent pairs is finite and exhaustive.
pub fn enumerate_critical(bound: f64) -> Result<CriticalLengthSet> {
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "critical-set bound must be positive and finite, got {bound}"
        )));
    }
    let m_max = (3.0 * bound * bound / (4.0 * std::f64::consts::PI * std::f64::consts::PI)
        * (1.0 + 1e-12)) as u64;
    let mut by_m: std::collections::BTreeMap<u64, Vec<(u32, u32)>> =
        std::collections::BTreeMap::new();
    let mut k = 1u64;
    while k * k + k * k + k * k <= m_max {
        let mut l = k;
        loop {
            let m = k * k + k * l + l * l;
            if m > m_max {
                break;
            }
            by_m.entry(m).or_default().push((k as u32, l as u32));
            l += 1;
        }
        k += 1;
    }
    let entries = by_m
        .into_iter()
        .map(|(m, pairs)| CriticalLength {
            value: TWO_PI / 3f64.sqrt() * (m as f64).sqrt(),
            pairs,
        })
        .filter(|e| e.value <= bound * (1.0 + 1e-12))
        .collect();
    Ok(CriticalLengthSet { bound, entries })
}

/// Verdict of a criticality query: whether `length` is within `tol` of the
/// critical set, plus the nearest entry for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityVerdict {
    /// Queried length.
    pub length: f64,
    /// True when the distance to the nearest entry is below the tolerance.
    pub critical: bool,
    /// Nearest critical length (always populated; the set is unbounded
    /// above, so a nearest element exists for every positive length).
    pub nearest: CriticalLength,
    /// Distance to the nearest entry.
    pub distance: f64,
}

/// Decide whether `length` lies within `tol` of the critical set.
///
/// Tolerances are expected to be far below 1 (the default used elsewhere is
/// `1e-9`); the enumeration window extends at least one unit past `length`,
/// which then covers every entry that could possibly be within `tol`.
pub fn is_critical(length: f64, tolerance: f64) -> Result<CriticalityVerdict> {
    if !length.is_finite() || length <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "length must be positive and finite, got {length}"
        )));
    }
    if !tolerance.is_finite() || tolerance <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "criticality tolerance must be positive, got {tolerance}"
        )));
    }
    let set = enumerate_critical(f64::max(length + 1.0, 7.0))?;
    let nearest = set
        .entries
        .iter()
        .min_by(|a, b| {
            (a.value - length)
                .abs()
                .partial_cmp(&(b.value - length).abs())
                .unwrap()
        })
        .expect("enumeration window always contains 2 pi")
        .clone();
    let distance = (nearest.value - length).abs();
    Ok(CriticalityVerdict {
        length,
        critical: distance < tolerance,
        nearest,
        distance,
    })
}

/// Observation coefficient of one mode for the given control placement:
/// the boundary slope the dual observation reads. Left control observes
/// `w_x(0)`; right control observes the first component's slope at `x = L`.
fn observation_coeff(mode: &SystemMode, side: ControlSide) -> C64 {
    match side {
        ControlSide::LeftEta => C64::new(
            mode.base.trace_vp0.re / std::f64::consts::SQRT_2,
            0.0,
        ),
        ControlSide::RightW => mode.output_trace_l,
    }
}

/// Complex observation series `t_j -> sum_k c_k exp(i mu_k t_j) obs_k` on a
/// uniform grid of `samples` points spanning `[0, t_horizon]`.
pub fn observation_series(
    state: &ModalState,
    t_horizon: f64,
    samples: usize,
    side: ControlSide,
) -> Result<Vec<C64>> {
    if !t_horizon.is_finite() || t_horizon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "trace horizon must be positive, got {t_horizon}"
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidInput(format!(
            "trace series needs at least 2 samples, got {samples}"
        )));
    }
    let amps: Vec<C64> = state
        .modes
        .iter()
        .zip(state.coeffs.iter())
        .map(|(m, c)| c * observation_coeff(m, side))
        .collect();
    let dt = t_horizon / (samples - 1) as f64;
    let mut out = Vec::with_capacity(samples);
    for j in 0..samples {
        let t = j as f64 * dt;
        let mut v = C64::new(0.0, 0.0);
        for (amp, mode) in amps.iter().zip(state.modes.iter()) {
            if amp.norm_sqr() > 0.0 {
                v += amp * C64::from_polar(1.0, mode.mu * t);
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Real boundary trace series `w_x(0, t)` for a modal state (left
/// observation). For reality states the imaginary part is a rounding
/// residue; the real part is returned.
pub fn boundary_trace_series(
    state: &ModalState,
    t_horizon: f64,
    samples: usize,
) -> Result<Vec<f64>> {
    Ok(observation_series(state, t_horizon, samples, ControlSide::LeftEta)?
        .into_iter()
        .map(|z| z.re)
        .collect())
}

/// Number of Simpson points resolving the fastest oscillation over `[0, T]`
/// with at least [`tol::TIME_POINTS_PER_PERIOD`] points per period.
fn quadrature_points(mu_max: f64, t_horizon: f64) -> usize {
    let per_period = tol::TIME_POINTS_PER_PERIOD as f64;
    let needed = (per_period * t_horizon * mu_max.max(1.0) / TWO_PI).ceil() as usize;
    let n = needed.max(41);
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Time-integrated observation energy `Int_0^T |trace(t)|^2 dt` by Simpson
/// quadrature resolving the fastest mode.
fn trace_energy(
    modes: &[SystemMode],
    coeffs: &DVector<C64>,
    side: ControlSide,
    t_horizon: f64,
) -> f64 {
    let amps: Vec<C64> = modes
        .iter()
        .zip(coeffs.iter())
        .map(|(m, c)| c * observation_coeff(m, side))
        .collect();
    let mu_max = modes.iter().map(|m| m.mu.abs()).fold(0.0, f64::max);
    let n_points = quadrature_points(mu_max, t_horizon);
    let h = t_horizon / (n_points - 1) as f64;

    // Phase stepping with periodic exact refresh: one complex multiply per
    // mode and time step instead of a trig call.
    let steps: Vec<C64> = modes
        .iter()
        .map(|m| C64::from_polar(1.0, m.mu * h))
        .collect();
    let mut rot: Vec<C64> = vec![C64::new(1.0, 0.0); modes.len()];
    let mut values = Vec::with_capacity(n_points);
    for j in 0..n_points {
        if j > 0 {
            if j % 4096 == 0 {
                let t = j as f64 * h;
                for (r, m) in rot.iter_mut().zip(modes.iter()) {
                    *r = C64::from_polar(1.0, m.mu * t);
                }
            } else {
                for (r, s) in rot.iter_mut().zip(steps.iter()) {
                    *r *= s;
                }
            }
        }
        let v: C64 = amps
            .iter()
            .zip(rot.iter())
            .map(|(a, r)| a * r)
            .sum();
        values.push(v.norm_sqr());
    }
    simpson(&values, h)
}

/// `H^1`-equivalent modal norm of raw coefficients.
fn h1_norm(modes: &[SystemMode], coeffs: &DVector<C64>) -> f64 {
    modes
        .iter()
        .zip(coeffs.iter())
        .map(|(m, c)| (1.0 + m.base.lambda.abs()).powf(2.0 / 3.0) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Empirical sandwich constants for the observation inequality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InghamReport {
    /// Observation horizon `T`.
    pub t_horizon: f64,
    /// Number of random trial states.
    pub sample_count: usize,
    /// Smallest ratio `Int_0^T |trace|^2 dt / ||state||_1^2` over trials and
    /// basis modes.
    pub c_lower: f64,
    /// Largest such ratio.
    pub c_upper: f64,
    /// Per-trial ratios in trial order.
    pub ratios: Vec<f64>,
    /// Per-basis-mode ratios in mode order (coefficient 1 on a single mode).
    pub mode_ratios: Vec<f64>,
}

/// Estimate the observability sandwich constants by seeded random sampling
/// (left observation `w_x(0, t)`); see [`ingham_constants_for_side`].
pub fn ingham_constants(
    modes: &[SystemMode],
    t_horizon: f64,
    trials: usize,
    seed: u64,
) -> Result<InghamReport> {
    ingham_constants_for_side(modes, t_horizon, trials, seed, ControlSide::LeftEta)
}

/// Estimate the observability sandwich constants for either observation
/// placement.
///
/// Over `trials` random unit-`H^1` reality states (independent standard
/// complex Gaussian coefficients on the `sigma = +` half, conjugated onto
/// the partner), computes the ratio of time-integrated trace energy to the
/// squared `H^1` norm. The extremes are taken over the trials *and* over
/// every basis mode individually: a silent basis mode (critical length)
/// collapses `c_lower` even though generic random states would miss it.
///
/// Trials use independent, deterministically derived RNG streams (one
/// ChaCha stream per trial), so the report is reproducible and the trial
/// loop is embarrassingly parallel.
pub fn ingham_constants_for_side(
    modes: &[SystemMode],
    t_horizon: f64,
    trials: usize,
    seed: u64,
    side: ControlSide,
) -> Result<InghamReport> {
    if modes.is_empty() {
        return Err(Error::EmptyInput {
            context: "ingham_constants needs at least one mode",
        });
    }
    if !t_horizon.is_finite() || t_horizon <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "observation horizon must be positive, got {t_horizon}"
        )));
    }
    if trials < 32 {
        return Err(Error::InvalidInput(format!(
            "ingham_constants needs >= 32 trials for a meaningful extreme, got {trials}"
        )));
    }

    let n = modes.len();
    let mut ratios = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let mut coeffs = DVector::from_element(n, C64::new(0.0, 0.0));
        let mut k = 0;
        while k < n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let c = C64::new(re, im) / 2f64.sqrt();
            coeffs[k] = c;
            if k + 1 < n
                && modes[k + 1].base.n == modes[k].base.n
                && modes[k].sign == 1
                && modes[k + 1].sign == -1
            {
                coeffs[k + 1] = c.conj();
                k += 2;
            } else {
                k += 1;
            }
        }
        let norm = h1_norm(modes, &coeffs);
        if norm == 0.0 {
            continue;
        }
        coeffs /= C64::new(norm, 0.0);
        ratios.push(trace_energy(modes, &coeffs, side, t_horizon));
    }

    let mode_ratios: Vec<f64> = (0..n)
        .map(|k| {
            let mut coeffs = DVector::from_element(n, C64::new(0.0, 0.0));
            coeffs[k] = C64::new(1.0, 0.0);
            let norm = h1_norm(modes, &coeffs);
            trace_energy(modes, &coeffs, side, t_horizon) / (norm * norm)
        })
        .collect();

    let all = ratios.iter().chain(mode_ratios.iter());
    let c_lower = all.clone().cloned().fold(f64::INFINITY, f64::min);
    let c_upper = all.cloned().fold(0.0, f64::max);

    if c_lower < tol::OBSERVABILITY_COLLAPSE_TOL {
        let length = modes[0].base.length;
        let verdict = is_critical(length, tol::CRITICALITY_TOL)?;
        if !verdict.critical {
            return Err(Error::DegenerateObservability { length, c_lower });
        }
    }

    Ok(InghamReport {
        t_horizon,
        sample_count: trials,
        c_lower,
        c_upper,
        ratios,
        mode_ratios,
    })
}

/// Per-trial ratios as CSV (columns `trial,ratio`).
pub fn ingham_ratios_csv(report: &InghamReport) -> String {
    let mut out = String::from("trial,ratio\n");
    for (i, r) in report.ratios.iter().enumerate() {
        out.push_str(&format!("{i},{r}\n"));
    }
    out
}

/// Mode-wise non-vanishing margins of the boundary slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceReport {
    /// Smallest margin over the modes.
    pub min_ratio: f64,
    /// `(branch index, |v'(0)|^2 / (1 + |Lambda|)^{2/3})` per mode, in the
    /// input order.
    pub ratios: Vec<(i32, f64)>,
    /// Branch indices whose margin falls below the flag threshold.
    pub flagged: Vec<i32>,
}

/// Evaluate the non-vanishing margin `|v_n'(0)|^2 / (1 + |lambda_n|)^{2/3}`
/// for every scalar mode and flag any that collapse (margin below
/// [`tol::TRACE_FLAG_TOL`]). A flagged mode signals a critical length: that
/// mode is invisible at the boundary, and the Gramian over any family
/// containing it is singular.
pub fn trace_nonvanishing(modes: &[EigenMode]) -> Result<TraceReport> {
    if modes.is_empty() {
        return Err(Error::EmptyInput {
            context: "trace_nonvanishing needs at least one mode",
        });
    }
    let ratios: Vec<(i32, f64)> = modes
        .iter()
        .map(|m| {
            let margin = m.trace_vp0.norm_sqr() / (1.0 + m.lambda.abs()).powf(2.0 / 3.0);
            (m.n, margin)
        })
        .collect();
    let min_ratio = ratios
        .iter()
        .map(|&(_, r)| r)
        .fold(f64::INFINITY, f64::min);
    let flagged = ratios
        .iter()
        .filter(|&&(_, r)| r < tol::TRACE_FLAG_TOL)
        .map(|&(n, _)| n)
        .collect();
    Ok(TraceReport {
        min_ratio,
        ratios,
        flagged,
    })
}

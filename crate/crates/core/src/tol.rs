//! Centralized numerical tolerances.
//!
//! Every contract-level threshold used by the crate lives here as a named
//! constant so that production code and tests agree on the exact numbers.
//! The values balance double-precision headroom against the ill-conditioned
//! exponentials of the modal ansatz; none of them are tuned per test.

/// Relative residual allowed for roots of the characteristic cubic:
/// `|r^3 + r - i lambda| < CUBIC_RESIDUAL_REL * max(1, |lambda|)`.
pub const CUBIC_RESIDUAL_REL: f64 = 1e-10;

/// Proximity of `27 lambda^2 - 4` to zero below which the cubic is treated
/// as degenerate (repeated roots, ansatz invalid).
pub const DISCRIMINANT_TOL: f64 = 1e-9;

/// Defect allowed in the closed-form normalization identity (the master
/// identity summing the per-pair exponential integrals to one).
pub const NORMALIZATION_IDENTITY_TOL: f64 = 1e-8;

/// Agreement required between closed-form mode norms and composite Simpson
/// quadrature of `|v|^2`.
pub const QUADRATURE_CROSS_CHECK_TOL: f64 = 1e-6;

/// A boundary matrix at a certified dispersion zero must be rank two:
/// smallest singular value below this multiple of the largest.
pub const RANK_DEFICIENCY_REL: f64 = 1e-8;

/// Closed-form mode norms below this value signal a spurious root.
pub const ZERO_NORM_TOL: f64 = 1e-12;

/// Hermitian defect allowed in the assembled Gramian, relative to its
/// largest entry magnitude.
pub const GRAMIAN_HERMITIAN_TOL: f64 = 1e-12;

/// Relative residual required of Lax-Milgram solves: `||G p - c|| <
/// LAX_MILGRAM_RESIDUAL_REL * ||c||`.
pub const LAX_MILGRAM_RESIDUAL_REL: f64 = 1e-10;

/// Slack factor on the certified closed-loop spectral abscissa: all
/// eigenvalues must satisfy `Re <= -2 omega (1 - ABSCISSA_SLACK)`.
pub const ABSCISSA_SLACK: f64 = 1e-3;

/// Conjugate-pair reality defect allowed in modal states, feedback outputs,
/// and synthesized functions.
pub const REALITY_TOL: f64 = 1e-10;

/// Conjugacy defect allowed for a coefficient vector carrying the reality
/// flag: `|c_{n,-} - conj(c_{n,+})|` relative to the coefficient scale.
pub const REALITY_PAIR_TOL: f64 = 1e-12;

/// Minimum spatial-quadrature resolution: sample points per shortest modal
/// oscillation period `2 pi / max |root|`; keeps the composite Simpson
/// error per mode product below 1e-6 with two orders of margin.
pub const QUAD_POINTS_PER_PERIOD: usize = 64;

/// Open-loop evolution must preserve the `H^1` norm to this relative drift.
pub const ISOMETRY_DRIFT_TOL: f64 = 1e-12;

/// Norm floor applied before taking logarithms in decay fits.
pub const NORM_FLOOR: f64 = 1e-30;

/// Closed-loop integration aborts when the norm exceeds this multiple of
/// its initial value.
pub const DIVERGENCE_GUARD: f64 = 1e3;

/// Default tolerance for floating-point membership in the critical length
/// set; the set has measure zero, so membership needs an explicit band.
pub const CRITICALITY_TOL: f64 = 1e-9;

/// Observability lower constant below this multiple of machine scale at a
/// non-critical length signals a solver bug.
pub const OBSERVABILITY_COLLAPSE_TOL: f64 = 1e-10;

/// Modes whose scaled trace ratio `|v'(0)|^2 / (1 + |lambda|)^{2/3}` falls
/// below this threshold are flagged as observability-degenerate.
pub const TRACE_FLAG_TOL: f64 = 1e-8;

/// Minimum time-quadrature resolution: sample points per shortest modal
/// oscillation period `2 pi / max |lambda|`.
pub const TIME_POINTS_PER_PERIOD: usize = 20;

/// Grid points per asymptotic eigenvalue spacing used by the dispersion
/// scan in `s = cbrt(lambda)` coordinates.
pub const SCAN_POINTS_PER_GAP: usize = 24;

/// Relative width at which golden-section refinement of a dispersion zero
/// stops.
pub const SCAN_REFINE_REL: f64 = 1e-13;

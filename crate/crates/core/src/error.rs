use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure modes of
/// the numerical pipeline; none of them are recoverable by retrying with the
/// same inputs.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The characteristic cubic has (nearly) repeated roots, which happens
    /// exactly at `lambda = +-2/(3 sqrt 3)`. The exponential ansatz basis is
    /// invalid there, so the caller must route around these two points.
    #[error("characteristic cubic nearly degenerate at lambda = {lambda}: |27 lambda^2 - 4| = {discriminant_gap:.3e} below tol")]
    DegenerateRoots { lambda: f64, discriminant_gap: f64 },

    /// An eigenvalue bracket predicted by the asymptotic spacing contained no
    /// certified zero of the dispersion determinant.
    #[error("no dispersion zero certified in bracket around lambda = {lambda_center}")]
    BracketFailure { lambda_center: f64 },

    /// The closed-form `L^2` norm of a candidate mode is numerically zero,
    /// which signals a spurious determinant zero rather than an eigenvalue.
    #[error("closed-form mode norm {norm:.3e} below tolerance; spurious root at lambda = {lambda}")]
    ZeroNorm { lambda: f64, norm: f64 },

    /// Grid too coarse for the requested operation.
    #[error("grid with {n_points} interior points is too coarse (need >= {required})")]
    GridTooCoarse { n_points: usize, required: usize },

    /// The iterative eigensolver did not certify the requested eigenpairs.
    #[error("eigensolver failed to converge: {detail}")]
    ConvergenceFailure { detail: String },

    /// Hermitian factorization of the Gramian failed; either a mode trace
    /// vanishes (critical length) or the truncation is pathological.
    #[error("Gramian is not positive definite (min eigenvalue estimate {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    /// Linear solve against the Gramian failed.
    #[error("Gramian solve failed: matrix numerically singular")]
    SingularGramian,

    /// Closed-loop norms grew past the divergence guard, which indicates a
    /// sign or convention error upstream.
    #[error("integration diverged: norm grew to {growth:.3e} times its initial value")]
    UnstableIntegration { growth: f64 },

    /// Too few usable samples for a least-squares decay fit.
    #[error("decay fit needs >= {required} usable samples, got {usable}")]
    DegenerateFit { usable: usize, required: usize },

    /// Observability constant collapsed at a non-critical length, which
    /// indicates a solver bug rather than genuine degeneracy.
    #[error("observability lower constant {c_lower:.3e} collapsed at non-critical length L = {length}")]
    DegenerateObservability { length: f64, c_lower: f64 },

    /// An operation received an empty input where at least one element is
    /// required.
    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },

    /// Invalid parameter outside the numerical failure taxonomy above.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Gramian synthesis of the stabilizing boundary feedback gain.
//!
//! In the orthonormal modal basis produced by [`crate::system_basis`], the
//! controlled system reduces to decoupled scalar equations
//!
//! ```text
//!     c_m'(t) = i mu_m c_m(t) + f(t) conj(b_m),
//! ```
//!
//! where `b_m` is the control trace of mode `m`: the real input slope
//! `beta_m = -v_m'(0)/sqrt(2)` when the control enters through the left
//! `eta` boundary condition, or the (purely imaginary) slope of the first
//! component at `x = L` when it enters through the right `w` condition. The
//! conjugate on the input column is the Riesz representation of the control
//! functional in an orthonormal basis.
//!
//! # The weighted Gramian
//!
//! With `y_m(tau) = b_m exp(i mu_m tau)` the row vector of mode responses,
//! the rate-weighted observability Gramian over the horizon `[0, inf)` is
//!
//! ```text
//!     G = Int_0^inf exp(-2 omega tau) conj(y(tau)) y(tau)^T dtau,
//!     G[m, k] = conj(b_m) b_k / (2 omega - i (mu_k - mu_m)).
//! ```
//!
//! `G` is Hermitian with diagonal `|b_m|^2 / (2 omega)`, and positive
//! semi-definite because `c^H G c = Int exp(-2 omega tau) |y(tau) c|^2 dtau`.
//! It is definite exactly when no finite linear combination of the mode
//! responses is silent at the control trace; a vanishing trace (which occurs
//! at critical domain lengths) or a repeated `mu` makes it singular. The
//! Cholesky factorization is therefore used as the coercivity certificate:
//! if it fails, assembly reports [`Error::NotPositiveDefinite`] instead of
//! returning an unusable operator.
//!
//! # Gain, exact pole placement, and the sign convention
//!
//! Substituting the entries of `G` into the commutator with `D = diag(mu)`
//! gives the exact Lyapunov identity
//!
//! ```text
//!     i D G - i G D + 2 omega G = conj(b) b^T.
//! ```
//!
//! The feedback gain row is `g = -b^T G^{-1}` (plain transpose, no
//! conjugation), so the closed-loop matrix collapses through the identity:
//!
//! ```text
//!     A_cl = i D + conj(b) g = i D - conj(b) b^T G^{-1}
//!          = i D - (i D G - i G D + 2 omega G) G^{-1}
//!          = G (i D) G^{-1} - 2 omega I.
//! ```
//!
//! This is an exact similarity, so the closed-loop spectrum is exactly
//! `{ i mu_m - 2 omega }`: every mode is shifted left by the prescribed
//! rate and nothing else moves. The one-dimensional case pins the sign:
//! `G = |b|^2 / (2 omega)`, `g = -2 omega b / |b|^2`, and the single pole is
//! `i mu + conj(b) g = i mu - 2 omega`.
//!
//! # Plain coefficient pairing
//!
//! The variational step ([`solve_lax_milgram`]) solves `G p = c` with the
//! raw coefficient vector `c` on the right-hand side, not its conjugate.
//! The conjugations that a sesquilinear formulation would introduce are
//! already absorbed: one copy sits in the input column `conj(b)`, the other
//! in the `conj(y)` factor of the Gramian integrand, and the feedback acts
//! through the transpose pairing `f = g c = -b^T p`. Consistency of this
//! convention is what makes the Lyapunov identity above close exactly.
//!
//! # Reality
//!
//! Lifted modes come in `sigma = +/-` partners with `mu_{n,-} = -mu_{n,+}`
//! and `b_{n,-} = conj(b_{n,+})`. Let `J` be the antilinear involution that
//! swaps partners and conjugates coefficients; physically real states are
//! its fixed points. The entries satisfy `J G = G J` and `J b = b`, hence
//! `f(J c) = conj(f(c))`: the feedback value is a real number on every
//! reality state, which is what makes the synthesized boundary control
//! physically implementable.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::linalg::hermitian_eigenvalues;
use crate::system_basis::{ModalState, SystemMode};
use crate::tol;
use crate::{Error, Result, C64};

/// Which boundary condition carries the scalar control input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSide {
    /// Control enters as the slope of the first component at `x = 0`.
    LeftEta,
    /// Control enters as the slope of the second component at `x = L`.
    RightW,
}

impl ControlSide {
    /// Control trace of one mode: the coefficient `b_m` in the modal input
    /// equation `c_m' = i mu_m c_m + f conj(b_m)`.
    pub fn trace(self, mode: &SystemMode) -> C64 {
        match self {
            ControlSide::LeftEta => C64::new(mode.input_trace, 0.0),
            ControlSide::RightW => mode.output_trace_l,
        }
    }
}

impl std::fmt::Display for ControlSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControlSide::LeftEta => write!(f, "left_eta"),
            ControlSide::RightW => write!(f, "right_w"),
        }
    }
}

/// Trace vector `b` of a mode family for one control side.
pub fn control_traces(modes: &[SystemMode], side: ControlSide) -> DVector<C64> {
    DVector::from_iterator(modes.len(), modes.iter().map(|m| side.trace(m)))
}

/// Input column `conj(b)`: the Riesz representative of the control
/// functional in the orthonormal modal basis.
pub fn input_column(modes: &[SystemMode], side: ControlSide) -> DVector<C64> {
    control_traces(modes, side).map(|z| z.conj())
}

/// Assembled rate-weighted Gramian together with its positive-definite
/// factorization. Holding the factorization inside the struct guarantees
/// that every operator handed out has already passed the coercivity
/// certificate.
#[derive(Debug, Clone)]
pub struct GramianOperator {
    /// Prescribed half decay rate; the closed loop decays like
    /// `exp(-2 omega t)`.
    pub omega: f64,
    /// Boundary condition through which the control acts.
    pub control_side: ControlSide,
    /// Mode family the matrix is indexed by, in lifting order.
    pub modes: Vec<SystemMode>,
    /// The Hermitian Gramian matrix itself.
    pub matrix: DMatrix<C64>,
    chol: Cholesky<C64, Dyn>,
}

impl GramianOperator {
    /// Dimension of the truncated system.
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    /// Smallest eigenvalue of the (Hermitian) matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)
            .first()
            .copied()
            .unwrap_or(f64::NAN)
    }

    /// Largest eigenvalue of the (Hermitian) matrix.
    pub fn max_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)
            .last()
            .copied()
            .unwrap_or(f64::NAN)
    }

    /// Largest entrywise deviation `|G - G^H|`.
    pub fn hermitian_defect(&self) -> f64 {
        let diff = &self.matrix - self.matrix.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Solve `G x = rhs` through the cached factorization.
    pub fn solve(&self, rhs: &DVector<C64>) -> DVector<C64> {
        self.chol.solve(rhs)
    }
}

/// Assemble the rate-weighted Gramian for a lifted mode family and certify
/// it positive definite.
///
/// Entries are built in closed form,
/// `G[m, k] = conj(b_m) b_k / (2 omega - i (mu_k - mu_m))`, mirroring the
/// lower triangle so the stored matrix is Hermitian to the last bit. The
/// Cholesky factorization doubles as the coercivity certificate; on failure
/// the smallest Hermitian eigenvalue is reported in the error.
pub fn assemble_gramian(
    modes: &[SystemMode],
    omega: f64,
    side: ControlSide,
) -> Result<GramianOperator> {
    if modes.is_empty() {
        return Err(Error::EmptyInput {
            context: "assemble_gramian needs at least one mode",
        });
    }
    if !omega.is_finite() || omega <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "decay rate omega must be positive and finite, got {omega}"
        )));
    }
    let b = control_traces(modes, side);
    let n = modes.len();
    let mut matrix = DMatrix::<C64>::zeros(n, n);
    for m in 0..n {
        for k in m..n {
            let denom = C64::new(2.0 * omega, -(modes[k].mu - modes[m].mu));
            let entry = b[m].conj() * b[k] / denom;
            matrix[(m, k)] = entry;
            matrix[(k, m)] = entry.conj();
        }
    }
    let chol = match matrix.clone().cholesky() {
        Some(c) => c,
        None => {
            let min_eig = hermitian_eigenvalues(&matrix)
                .first()
                .copied()
                .unwrap_or(f64::NAN);
            return Err(Error::NotPositiveDefinite { min_eig });
        }
    };
    Ok(GramianOperator {
        omega,
        control_side: side,
        modes: modes.to_vec(),
        matrix,
        chol,
    })
}

/// Independent cross-check of the Gramian entries by numerical quadrature
/// of the defining integral truncated at `t_max`:
///
/// ```text
///     G[m, k] ~ Int_0^{t_max} exp(-2 omega tau)
///                conj(b_m) b_k exp(i (mu_k - mu_m) tau) dtau.
/// ```
///
/// The integrand oscillates at up to `2 max |mu|`, which for the fast modes
/// is thousands of radians per unit time; composite Newton-Cotes rules would
/// need astronomically many points for absolute accuracy. Instead this uses
/// composite 10-point Gauss-Legendre panels no wider than half the shortest
/// oscillation period, which resolves each panel to machine precision, and
/// accumulates the whole matrix as one outer product per node. Truncation at
/// `t_max = 40 / (2 omega)` contributes only about `exp(-40)`.
pub fn gramian_quadrature_oracle(
    modes: &[SystemMode],
    omega: f64,
    side: ControlSide,
    t_max: f64,
) -> DMatrix<C64> {
    // Standard 10-point Gauss-Legendre nodes and weights on [-1, 1].
    const GL_X: [f64; 10] = [
        -0.9739065285171717,
        -0.8650633666889845,
        -0.6794095682990244,
        -0.4333953941292472,
        -0.1488743389816312,
        0.1488743389816312,
        0.4333953941292472,
        0.6794095682990244,
        0.8650633666889845,
        0.9739065285171717,
    ];
    const GL_W: [f64; 10] = [
        0.0666713443086881,
        0.1494513491505806,
        0.219086362515982,
        0.2692667193099963,
        0.2955242247147529,
        0.2955242247147529,
        0.2692667193099963,
        0.219086362515982,
        0.1494513491505806,
        0.0666713443086881,
    ];

    let n = modes.len();
    let b = control_traces(modes, side);
    let mu_max = modes.iter().map(|m| m.mu.abs()).fold(0.0, f64::max);
    // Fastest phase in the integrand: mu spread plus the decay envelope.
    let rate = (2.0 * mu_max).max(2.0 * omega).max(1.0);
    let panel_target = std::f64::consts::PI / rate;
    let n_panels = (t_max / panel_target).ceil().max(1.0) as usize;
    let h = t_max / n_panels as f64;

    // Per-node offsets within a panel, precomputed per mode.
    let mut node_phase = vec![C64::new(0.0, 0.0); 10 * n];
    let mut node_env = [0.0f64; 10];
    for (q, &x) in GL_X.iter().enumerate() {
        let xi = 0.5 * h * (x + 1.0);
        node_env[q] = (-2.0 * omega * xi).exp();
        for (k, mode) in modes.iter().enumerate() {
            node_phase[10 * k + q] = C64::from_polar(1.0, mode.mu * xi);
        }
    }

    let mut g = DMatrix::<C64>::zeros(n, n);
    let mut y = vec![C64::new(0.0, 0.0); n];
    for p in 0..n_panels {
        let t0 = p as f64 * h;
        let env0 = (-2.0 * omega * t0).exp();
        if env0 < 1e-22 {
            break; // the remaining tail is far below the oracle tolerance
        }
        let rot: Vec<C64> = modes
            .iter()
            .map(|m| C64::from_polar(1.0, m.mu * t0))
            .collect();
        for q in 0..10 {
            let w = 0.5 * h * GL_W[q] * env0 * node_env[q];
            for k in 0..n {
                y[k] = b[k] * rot[k] * node_phase[10 * k + q];
            }
            for m in 0..n {
                let ym = y[m].conj() * w;
                for k in m..n {
                    g[(m, k)] += ym * y[k];
                }
            }
        }
    }
    for m in 0..n {
        for k in 0..m {
            g[(m, k)] = g[(k, m)].conj();
        }
    }
    g
}

/// Solve the coercive variational problem `G p = c` for a modal state.
///
/// The right-hand side is the plain coefficient vector of `state` (see the
/// module notes on the pairing convention). The solution inherits the mode
/// family of the Gramian; its reality flag is re-measured rather than
/// assumed, since `G` commutes with the reality involution only when the
/// family is a complete set of `sigma` partners.
pub fn solve_lax_milgram(gram: &GramianOperator, state: &ModalState) -> Result<ModalState> {
    if state.coeffs.len() != gram.dim() {
        return Err(Error::InvalidInput(format!(
            "state has {} coefficients but the Gramian is {}-dimensional",
            state.coeffs.len(),
            gram.dim()
        )));
    }
    for (sm, gm) in state.modes.iter().zip(gram.modes.iter()) {
        if sm.mu != gm.mu || sm.sign != gm.sign {
            return Err(Error::InvalidInput(
                "state and Gramian are indexed by different mode families".into(),
            ));
        }
    }
    let c = &state.coeffs;
    let c_norm = c.norm();
    if c_norm == 0.0 {
        return ModalState::new(state.length, gram.modes.clone(), c.clone(), state.reality);
    }
    let p = gram.solve(c);
    let residual = (&gram.matrix * &p - c).norm();
    if !residual.is_finite() || residual > tol::LAX_MILGRAM_RESIDUAL_REL * c_norm {
        return Err(Error::SingularGramian);
    }
    let mut out = ModalState::new(state.length, gram.modes.clone(), p, false)?;
    if state.reality {
        let scale = f64::max(
            1.0,
            out.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max),
        );
        if out.reality_defect() <= tol::REALITY_PAIR_TOL * scale {
            out.reality = true;
        }
    }
    Ok(out)
}

/// The synthesized feedback law `f = g c` with gain row `g = -b^T G^{-1}`.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    /// Prescribed half decay rate inherited from the Gramian.
    pub omega: f64,
    /// Boundary condition through which the control acts.
    pub control_side: ControlSide,
    /// Mode family the gain is indexed by, in lifting order.
    pub modes: Vec<SystemMode>,
    /// Gain row vector; the feedback value is the plain (unconjugated) dot
    /// product with the modal coefficients.
    pub gain: DVector<C64>,
}

impl FeedbackLaw {
    /// Feedback value on raw coefficients: `f = sum_k gain_k c_k`.
    pub fn apply_coeffs(&self, coeffs: &DVector<C64>) -> C64 {
        self.gain
            .iter()
            .zip(coeffs.iter())
            .map(|(g, c)| g * c)
            .sum()
    }

    /// Feedback value on a modal state, after checking index alignment.
    pub fn apply(&self, state: &ModalState) -> Result<C64> {
        if state.coeffs.len() != self.gain.len() {
            return Err(Error::InvalidInput(format!(
                "state has {} coefficients but the gain row has {}",
                state.coeffs.len(),
                self.gain.len()
            )));
        }
        for (sm, lm) in state.modes.iter().zip(self.modes.iter()) {
            if sm.mu != lm.mu || sm.sign != lm.sign {
                return Err(Error::InvalidInput(
                    "state and feedback law are indexed by different mode families".into(),
                ));
            }
        }
        Ok(self.apply_coeffs(&state.coeffs))
    }

    /// Closed-loop system matrix `A_cl = i diag(mu) + conj(b) g`.
    pub fn closed_loop_matrix(&self) -> DMatrix<C64> {
        let input = input_column(&self.modes, self.control_side);
        closed_loop_matrix_from(
            &self.modes.iter().map(|m| m.mu).collect::<Vec<_>>(),
            &input,
            &self.gain,
        )
    }

    /// Portable serialization of the law (see [`FeedbackDocument`]).
    pub fn to_document(&self) -> FeedbackDocument {
        let b = control_traces(&self.modes, self.control_side);
        FeedbackDocument {
            omega: self.omega,
            control_side: self.control_side,
            length: self.modes.first().map(|m| m.base.length).unwrap_or(0.0),
            modes: self
                .modes
                .iter()
                .zip(b.iter())
                .map(|(m, bk)| FeedbackModeEntry {
                    n: m.base.n,
                    sigma: m.sign,
                    lambda: m.base.lambda,
                    mu: m.mu,
                    beta: (bk.re, bk.im),
                })
                .collect(),
            gain: self.gain.iter().map(|g| (g.re, g.im)).collect(),
        }
    }

    /// Pretty-printed JSON form of [`Self::to_document`].
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document())
            .expect("feedback document serialization cannot fail")
    }
}

/// Synthesize the feedback gain row `g = -b^T G^{-1}` from a certified
/// Gramian.
///
/// The row is computed by one Hermitian solve: `g^T = -(G^T)^{-1} b` and
/// `G^T = conj(G)`, so `g = conj(G^{-1} (-conj(b)))`.
pub fn feedback_gain(gram: &GramianOperator) -> Result<FeedbackLaw> {
    let b = control_traces(&gram.modes, gram.control_side);
    let rhs = b.map(|z| -z.conj());
    let y = gram.solve(&rhs);
    let residual = (&gram.matrix * &y - &rhs).norm();
    let scale = rhs.norm().max(tol::NORM_FLOOR);
    if !residual.is_finite() || residual > tol::LAX_MILGRAM_RESIDUAL_REL * scale {
        return Err(Error::SingularGramian);
    }
    Ok(FeedbackLaw {
        omega: gram.omega,
        control_side: gram.control_side,
        modes: gram.modes.clone(),
        gain: y.map(|z| z.conj()),
    })
}

/// Closed-loop matrix from raw parts: `A_cl = i diag(mu) + input * gain^T`.
/// Shared by [`FeedbackLaw::closed_loop_matrix`] and the document path used
/// by the command-line simulator.
pub fn closed_loop_matrix_from(
    mu: &[f64],
    input: &DVector<C64>,
    gain: &DVector<C64>,
) -> DMatrix<C64> {
    let n = mu.len();
    let mut a = DMatrix::<C64>::zeros(n, n);
    for m in 0..n {
        a[(m, m)] = C64::new(0.0, mu[m]);
        for k in 0..n {
            a[(m, k)] += input[m] * gain[k];
        }
    }
    a
}

/// One mode's entry in the serialized feedback document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeedbackModeEntry {
    /// Signed branch index of the underlying scalar mode.
    pub n: i32,
    /// Lifting sign `sigma`.
    pub sigma: i32,
    /// Scalar eigenvalue `lambda`.
    pub lambda: f64,
    /// System eigenvalue `mu = sigma lambda`.
    pub mu: f64,
    /// Control trace `b` as a `(re, im)` pair.
    pub beta: (f64, f64),
}

/// JSON-portable form of a [`FeedbackLaw`]: everything the simulator needs
/// to rebuild the closed-loop matrix without redoing the spectral scan.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeedbackDocument {
    /// Prescribed half decay rate.
    pub omega: f64,
    /// Boundary condition through which the control acts.
    pub control_side: ControlSide,
    /// Domain length the modes were computed on.
    pub length: f64,
    /// Mode family, aligned with `gain`.
    pub modes: Vec<FeedbackModeEntry>,
    /// Gain row as `(re, im)` pairs.
    pub gain: Vec<(f64, f64)>,
}

impl FeedbackDocument {
    /// Parse a document from JSON, validating internal consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FeedbackDocument = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("malformed feedback document: {e}")))?;
        if doc.modes.len() != doc.gain.len() {
            return Err(Error::InvalidInput(format!(
                "feedback document has {} modes but {} gain entries",
                doc.modes.len(),
                doc.gain.len()
            )));
        }
        if doc.modes.is_empty() {
            return Err(Error::EmptyInput {
                context: "feedback document has no modes",
            });
        }
        Ok(doc)
    }

    /// System eigenvalue sequence `mu`.
    pub fn mu(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.mu).collect()
    }

    /// Control trace vector `b`.
    pub fn trace_vector(&self) -> DVector<C64> {
        DVector::from_iterator(
            self.modes.len(),
            self.modes.iter().map(|m| C64::new(m.beta.0, m.beta.1)),
        )
    }

    /// Input column `conj(b)`.
    pub fn input_vector(&self) -> DVector<C64> {
        self.trace_vector().map(|z| z.conj())
    }

    /// Gain row vector.
    pub fn gain_vector(&self) -> DVector<C64> {
        DVector::from_iterator(
            self.gain.len(),
            self.gain.iter().map(|&(re, im)| C64::new(re, im)),
        )
    }

    /// Closed-loop matrix `A_cl = i diag(mu) + conj(b) g` rebuilt from the
    /// serialized data alone.
    pub fn closed_loop_matrix(&self) -> DMatrix<C64> {
        closed_loop_matrix_from(&self.mu(), &self.input_vector(), &self.gain_vector())
    }
}

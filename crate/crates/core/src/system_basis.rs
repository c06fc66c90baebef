//! Lifting of scalar eigenfunctions to the coupled system, the `H_s` scale
//! of norms, and conversion between function samples and modal coefficients.
//!
//! Each scalar eigenpair `(lambda_n, v_n)` of `B` lifts to two eigenfunctions
//! of the coupled generator `A`:
//!
//! ```text
//!     theta_n^{+-}(x) = -+ (i / sqrt 2) v_n(L - x),
//!     u_n^{+-}(x)     = v_n(x) / sqrt 2,
//!     A (theta^{+-}, u^{+-}) = +- i lambda_n (theta^{+-}, u^{+-}),
//! ```
//!
//! and the family over both signs is orthonormal in `L^2 x L^2`. States are
//! carried as coefficient vectors over the lifted basis in the fixed
//! interleaved order `(n_1,+), (n_1,-), (n_2,+), ...` with `n` ascending;
//! real-valued physical states correspond to vectors with
//! `c_{n,-} = conj(c_{n,+})`, tracked by an explicit reality flag.

use nalgebra::{DMatrix, DVector};

use crate::fd_oracle::Grid;
use crate::linalg::simpson;
use crate::modal_spectrum::EigenMode;
use crate::tol;
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

/// One eigenfunction of the coupled generator, lifted from a scalar mode.
#[derive(Debug, Clone)]
pub struct SystemMode {
    /// Scalar eigenpair this mode is lifted from.
    pub base: EigenMode,
    /// Branch sign `sigma`, `+1` or `-1`.
    pub sign: i32,
    /// Eigenfrequency: `A Phi = i mu Phi` with `mu = sigma * lambda`.
    pub mu: f64,
    /// Value of the control functional `B*` on this mode,
    /// `-u_x(0) = -v'(0)/sqrt 2`; real and independent of the sign.
    pub input_trace: f64,
    /// Slope of the `theta` component at `x = L`,
    /// `sigma * (i/sqrt 2) v'(0)`; purely imaginary.
    pub output_trace_l: C64,
}

impl SystemMode {
    /// First (wave-height) component `theta^sigma(x)`.
    pub fn eval_theta(&self, x: f64) -> C64 {
        -I * (self.sign as f64 / std::f64::consts::SQRT_2) * self.base.eval(self.base.length - x)
    }

    /// Second (velocity) component `u^sigma(x)`.
    pub fn eval_u(&self, x: f64) -> C64 {
        self.base.eval(x) / std::f64::consts::SQRT_2
    }
}

/// A truncated state of the coupled system in modal coordinates.
#[derive(Debug, Clone)]
pub struct ModalState {
    /// Domain length shared by all modes.
    pub length: f64,
    /// Basis, in the fixed interleaved order.
    pub modes: Vec<SystemMode>,
    /// Coefficients `c_{n,sigma}`, aligned with `modes`.
    pub coeffs: DVector<C64>,
    /// Whether this vector represents a real-valued physical state,
    /// i.e. `c_{n,-} = conj(c_{n,+})` for every `n`.
    pub reality: bool,
}

impl ModalState {
    pub fn new(
        length: f64,
        modes: Vec<SystemMode>,
        coeffs: DVector<C64>,
        reality: bool,
    ) -> Result<Self> {
        if modes.len() != coeffs.len() {
            return Err(Error::InvalidInput(format!(
                "{} modes but {} coefficients",
                modes.len(),
                coeffs.len()
            )));
        }
        let state = ModalState {
            length,
            modes,
            coeffs,
            reality,
        };
        if reality {
            let defect = state.reality_defect();
            let scale = f64::max(1.0, state.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max));
            if defect > tol::REALITY_PAIR_TOL * scale {
                return Err(Error::InvalidInput(format!(
                    "reality flag set but conjugacy defect is {defect:.3e}"
                )));
            }
        }
        Ok(state)
    }

    /// Largest conjugacy defect `|c_{n,-} - conj(c_{n,+})|` over all pairs.
    /// Modes are interleaved, so pairs sit at positions `(2k, 2k+1)`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut k = 0;
        while k + 1 < self.coeffs.len() {
            if self.modes[k].sign == 1 && self.modes[k + 1].sign == -1 {
                worst = worst.max((self.coeffs[k + 1] - self.coeffs[k].conj()).norm());
            }
            k += 2;
        }
        worst
    }
}

/// Lifts scalar modes to the coupled system: two [`SystemMode`]s per scalar
/// mode, `sigma = +1` first, preserving the scalar ordering.
pub fn lift_modes(scalar_modes: &[EigenMode]) -> Vec<SystemMode> {
    let mut out = Vec::with_capacity(2 * scalar_modes.len());
    for mode in scalar_modes {
        let vp0 = mode.trace_vp0;
        for sign in [1i32, -1] {
            out.push(SystemMode {
                base: mode.clone(),
                sign,
                mu: sign as f64 * mode.lambda,
                // v'(0) is real (phase convention); keep only its real part
                // so the trace is exactly sign-independent.
                input_trace: -vp0.re / std::f64::consts::SQRT_2,
                output_trace_l: I * (sign as f64 / std::f64::consts::SQRT_2) * vp0.re,
            });
        }
    }
    out
}

/// Sampled `(eta, w)` pair on the interior nodes of a uniform grid, the
/// same layout the finite difference oracle uses.
#[derive(Debug, Clone)]
pub struct GriddedPair {
    pub grid: Grid,
    pub eta: DVector<C64>,
    pub w: DVector<C64>,
}

/// Interior point count needed for trustworthy Simpson quadrature against
/// the given modes: [`tol::QUAD_POINTS_PER_PERIOD`] points per shortest
/// oscillation period, and odd so the composite rule applies.
pub fn required_points(modes: &[SystemMode], length: f64) -> usize {
    let s_max = modes
        .iter()
        .flat_map(|m| m.base.roots.iter())
        .map(|r| r.norm())
        .fold(1.0f64, f64::max);
    let needed =
        (tol::QUAD_POINTS_PER_PERIOD as f64 * s_max * length / (2.0 * std::f64::consts::PI)).ceil()
            as usize;
    let needed = usize::max(needed, 31);
    if needed.is_multiple_of(2) {
        needed + 1
    } else {
        needed
    }
}

/// Simpson quadrature of `sum_x f(x) conj(g(x))` over `[0, L]` for functions
/// vanishing at both endpoints, given interior samples.
fn quad_conj_product(grid: &Grid, f: &DVector<C64>, g: &DVector<C64>) -> C64 {
    let n = grid.n_points;
    let mut vals = Vec::with_capacity(n + 2);
    vals.push(C64::new(0.0, 0.0));
    for i in 0..n {
        vals.push(f[i] * g[i].conj());
    }
    vals.push(C64::new(0.0, 0.0));
    simpson(&vals, grid.h)
}

/// `L^2 x L^2` inner product of two gridded pairs by Simpson quadrature.
pub fn pair_inner(a: &GriddedPair, b: &GriddedPair) -> C64 {
    quad_conj_product(&a.grid, &a.eta, &b.eta) + quad_conj_product(&a.grid, &a.w, &b.w)
}

/// Samples one system mode on a grid.
pub fn sample_mode(mode: &SystemMode, grid: &Grid) -> GriddedPair {
    GriddedPair {
        grid: grid.clone(),
        eta: DVector::from_fn(grid.n_points, |i, _| mode.eval_theta(grid.node(i))),
        w: DVector::from_fn(grid.n_points, |i, _| mode.eval_u(grid.node(i))),
    }
}

/// Quadrature Gram matrix of a mode family; orthonormality diagnostics.
pub fn system_gram(modes: &[SystemMode], grid: &Grid) -> DMatrix<C64> {
    let samples: Vec<GriddedPair> = modes.iter().map(|m| sample_mode(m, grid)).collect();
    DMatrix::from_fn(modes.len(), modes.len(), |i, j| {
        pair_inner(&samples[i], &samples[j])
    })
}

/// Projects a sampled `(eta, w)` pair onto the modal basis: coefficients are
/// Simpson inner products against the (conjugated) modes.
pub fn project(samples: &GriddedPair, modes: &[SystemMode]) -> Result<ModalState> {
    let length = samples.grid.length;
    let required = required_points(modes, length);
    if samples.grid.n_points < required || samples.grid.n_points.is_multiple_of(2) {
        return Err(Error::GridTooCoarse {
            n_points: samples.grid.n_points,
            required: if samples.grid.n_points < required {
                required
            } else {
                samples.grid.n_points + 1
            },
        });
    }
    let coeffs = DVector::from_fn(modes.len(), |k, _| {
        let phi = sample_mode(&modes[k], &samples.grid);
        pair_inner(samples, &phi)
    });
    // Declare reality when the recovered coefficients satisfy the conjugate
    // pairing; projection of a genuinely real sample always does.
    let mut state = ModalState::new(length, modes.to_vec(), coeffs, false)?;
    if state.reality_defect()
        <= tol::REALITY_PAIR_TOL
            * f64::max(1.0, state.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max))
    {
        state.reality = true;
    }
    Ok(state)
}

/// Evaluates the modal sum pointwise on a grid.
pub fn synthesize(state: &ModalState, grid: &Grid) -> GriddedPair {
    let n = grid.n_points;
    let mut eta = DVector::<C64>::zeros(n);
    let mut w = DVector::<C64>::zeros(n);
    for (k, mode) in state.modes.iter().enumerate() {
        let c = state.coeffs[k];
        if c.norm() == 0.0 {
            continue;
        }
        for i in 0..n {
            let x = grid.node(i);
            eta[i] += c * mode.eval_theta(x);
            w[i] += c * mode.eval_u(x);
        }
    }
    GriddedPair {
        grid: grid.clone(),
        eta,
        w,
    }
}

/// The `H_s` norm of a modal state:
/// `( sum_n (1 + |lambda_n|)^{2s/3} (|c_{n,+}|^2 + |c_{n,-}|^2) )^{1/2}`.
///
/// Summing the squared moduli per sign keeps the norm coercive on the whole
/// span (any norm of the form `|c_+ + c_-|^2` would vanish on
/// `c_+ = -c_-`), and reduces to the plain `L^2` Parseval sum at `s = 0`.
pub fn hs_norm(state: &ModalState, s: f64) -> f64 {
    state
        .modes
        .iter()
        .zip(state.coeffs.iter())
        .map(|(mode, c)| (1.0 + mode.base.lambda.abs()).powf(2.0 * s / 3.0) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Boundary trace coefficients `delta_n = (c_{n,+} + c_{n,-}) v_n'(0)/sqrt 2`
/// per scalar mode, in scalar-mode order: these weight `e^{i lambda_n t}` in
/// the series for the observation `w_x(0, t)`.
pub fn trace_deltas(state: &ModalState) -> Vec<(i32, C64)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < state.modes.len() {
        let mode = &state.modes[k];
        if k + 1 < state.modes.len()
            && state.modes[k + 1].base.n == mode.base.n
            && mode.sign == 1
            && state.modes[k + 1].sign == -1
        {
            let c_sum = state.coeffs[k] + state.coeffs[k + 1];
            out.push((
                mode.base.n,
                c_sum * mode.base.trace_vp0.re / std::f64::consts::SQRT_2,
            ));
            k += 2;
        } else {
            out.push((
                mode.base.n,
                state.coeffs[k] * mode.base.trace_vp0.re / std::f64::consts::SQRT_2,
            ));
            k += 1;
        }
    }
    out
}

//! Shared dense linear algebra and quadrature helpers.
//!
//! Everything here is deterministic: iterative routines start from vectors
//! generated by a fixed xorshift stream, never from entropy, so repeated
//! runs produce bit-identical results.

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;
use std::ops::{Add, Mul};

use crate::{Error, Result, C64};

/// Composite Simpson integration of uniformly sampled values with spacing
/// `h`. The sample count must be odd (an even number of intervals).
pub fn simpson<T>(values: &[T], h: f64) -> T
where
    T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
{
    assert!(
        values.len() >= 3 && values.len() % 2 == 1,
        "Simpson rule needs an odd sample count >= 3, got {}",
        values.len()
    );
    let mut acc = values[0] + values[values.len() - 1];
    for (i, &v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        acc = acc + v * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}

/// Ordinary least squares line fit `y ~ intercept + slope * x`.
/// Returns `(slope, intercept, rms residual)`.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "line fit needs at least two samples");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    (slope, intercept, (ss / n).sqrt())
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized
/// explicitly so that tiny assembly asymmetries cannot poison the solver.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

/// Real 2n x 2n embedding `[[Re, -Im], [Im, Re]]` of a complex matrix. Its
/// spectrum is the union of the spectrum of `m` and its conjugate.
fn real_embedding(m: &DMatrix<C64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut e = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            e[(i, j)] = z.re;
            e[(i, j + n)] = -z.im;
            e[(i + n, j)] = z.im;
            e[(i + n, j + n)] = z.re;
        }
    }
    e
}

/// Largest real part over the spectrum of a complex square matrix.
///
/// Computed from the real embedding, whose spectrum is `S ∪ conj(S)`; the
/// maximum real part is unaffected by the conjugate copies.
pub fn spectral_abscissa(m: &DMatrix<C64>) -> f64 {
    real_embedding(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Full spectrum of a complex square matrix whose spectrum is closed under
/// conjugation (true for all closed-loop matrices in this crate, which
/// commute with a conjugation involution). Computed from the real embedding
/// by discarding the duplicated conjugate copy of each eigenvalue.
pub fn conj_closed_spectrum(m: &DMatrix<C64>) -> Vec<C64> {
    let mut all: Vec<C64> = real_embedding(m).complex_eigenvalues().iter().cloned().collect();
    all.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    // Each eigenvalue appears twice (once from the matrix, once from its
    // conjugate copy), but rounding fuzz can interleave the duplicates in
    // the sorted order. Pair each remaining value with its nearest
    // neighbour and emit the pair average.
    let mut out = Vec::with_capacity(all.len() / 2);
    let mut used = vec![false; all.len()];
    for i in 0..all.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (j, flag) in used.iter().enumerate().skip(i + 1) {
            if !flag {
                let d = (all[i] - all[j]).norm();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            out.push((all[i] + all[j]) * C64::new(0.5, 0.0));
        } else {
            out.push(all[i]);
        }
    }
    out
}

/// Deterministic unit vector from a fixed xorshift64* stream.
fn seeded_unit_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let mut v = DVector::<f64>::zeros(n);
    for x in v.iter_mut() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        *x = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    }
    let norm = v.norm();
    v / norm
}

/// Eigenpair of a real matrix as returned by [`eigs_nearest_zero`].
#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: C64,
    pub vector: DVector<C64>,
    /// 2-norm of `A x - lambda x` for the unit eigenvector `x`.
    pub residual: f64,
}

/// Eigenpairs of a real square matrix nearest zero, sorted by `|lambda|`
/// ascending, eigenvectors normalized to unit Euclidean norm.
///
/// Small problems are solved densely (Schur for values, shifted inverse
/// iteration for vectors). Large problems use shift-invert Arnoldi around
/// zero backed by a dense LU factorization; the Krylov dimension grows until
/// every requested pair is residual-certified.
pub fn eigs_nearest_zero(a: &DMatrix<f64>, count: usize) -> Result<Vec<EigPair>> {
    let n = a.nrows();
    if n > 192 && count * 3 < n {
        let lu = a.clone().lu();
        eigs_nearest_zero_with_solver(a, count, &|v| lu.solve(v))
    } else {
        eigs_nearest_zero_with_solver(a, count, &|_| None)
    }
}

/// [`eigs_nearest_zero`] with a caller-supplied solver for `A x = b`,
/// letting structured matrices (banded under a permutation, say) avoid the
/// dense factorization. The solver is only consulted on the Arnoldi path;
/// small problems and the last-resort fallback stay dense.
pub fn eigs_nearest_zero_with_solver(
    a: &DMatrix<f64>,
    count: usize,
    solve: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>,
) -> Result<Vec<EigPair>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    if count == 0 {
        return Ok(Vec::new());
    }
    if count > n {
        return Err(Error::InvalidInput(format!(
            "requested {count} eigenpairs from a {n} x {n} matrix"
        )));
    }
    if n <= 192 || count * 3 >= n {
        return dense_eigs_nearest_zero(a, count);
    }

    // Residual certificates cannot beat the rounding floor of the explicit
    // matvec, which scales with the matrix norm.
    let norm_inf = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let floor = 64.0 * f64::EPSILON * norm_inf;

    let mut m = usize::min(n, usize::max(3 * count + 24, 64));
    loop {
        match arnoldi_shift_invert(a, solve, m, count, floor)? {
            Some(pairs) => return Ok(pairs),
            None => {
                if m >= usize::min(n, 512) {
                    // Pathologically clustered spectra defeat Krylov
                    // certification; fall back to the dense path, which is
                    // slow but unconditional.
                    return dense_eigs_nearest_zero(a, count);
                }
                m = usize::min(n, m * 2);
            }
        }
    }
}

/// One Arnoldi pass at fixed Krylov dimension. Returns `None` when the
/// requested pairs are not yet residual-certified at this dimension.
fn arnoldi_shift_invert(
    a: &DMatrix<f64>,
    solve: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>,
    m: usize,
    count: usize,
    residual_floor: f64,
) -> Result<Option<Vec<EigPair>>> {
    let n = a.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
    basis.push(seeded_unit_vector(n, 0x5eed));
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut steps = m;
    for k in 0..m {
        let mut w = solve(&basis[k]).ok_or_else(|| Error::ConvergenceFailure {
            detail: "solve failed inside Arnoldi (exactly singular operator)".into(),
        })?;
        if !w.iter().all(|x| x.is_finite()) {
            return Err(Error::ConvergenceFailure {
                detail: "non-finite Arnoldi iterate (operator numerically singular)".into(),
            });
        }
        // Modified Gram-Schmidt, twice for robustness.
        for _ in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let proj = q.dot(&w);
                h[(j, k)] += proj;
                w -= q * proj;
            }
        }
        let beta = w.norm();
        h[(k + 1, k)] = beta;
        if beta < 1e-12 * h.norm() {
            steps = k + 1;
            break;
        }
        basis.push(w / beta);
    }

    let hm = h.view((0, 0), (steps, steps)).into_owned();
    let ritz = hm.complex_eigenvalues();
    // Largest |theta| in the inverted problem = nearest zero in the original.
    let mut order: Vec<usize> = (0..steps).collect();
    order.sort_by(|&i, &j| ritz[j].norm().partial_cmp(&ritz[i].norm()).unwrap());

    let take = usize::min(count, steps);
    let ac = a.map(|v| C64::new(v, 0.0));
    let mut pairs = Vec::with_capacity(take);
    for &idx in order.iter().take(take) {
        let theta = ritz[idx];
        if theta.norm() == 0.0 {
            return Ok(None);
        }
        let y = small_eigenvector(&hm, theta);
        let mut x = DVector::<C64>::zeros(n);
        for (j, q) in basis.iter().take(steps).enumerate() {
            for i in 0..n {
                x[i] += C64::new(q[i], 0.0) * y[j];
            }
        }
        let xn = x.norm();
        if xn == 0.0 || !xn.is_finite() {
            return Ok(None);
        }
        x /= C64::new(xn, 0.0);
        let lambda = theta.inv();
        let ax = &ac * &x;
        let residual = (&ax - &x * lambda).norm();
        if residual > f64::max(1e-8 * f64::max(1.0, lambda.norm()), residual_floor) {
            return Ok(None);
        }
        pairs.push(EigPair {
            value: lambda,
            vector: x,
            residual,
        });
    }
    if pairs.len() < count {
        return Ok(None);
    }
    pairs.sort_by(|p, q| p.value.norm().partial_cmp(&q.value.norm()).unwrap());
    Ok(Some(pairs))
}

/// Dense path: all eigenvalues via Schur, then shifted inverse iteration in
/// complex arithmetic for the requested eigenvectors.
fn dense_eigs_nearest_zero(a: &DMatrix<f64>, count: usize) -> Result<Vec<EigPair>> {
    let n = a.nrows();
    let eigs = a.complex_eigenvalues();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigs[i].norm().partial_cmp(&eigs[j].norm()).unwrap());

    let ac = a.map(|v| C64::new(v, 0.0));
    let scale = a.norm() / (n as f64).sqrt();
    let mut pairs = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let lambda = eigs[idx];
        let (x, residual) = inverse_iterate(&ac, lambda, scale)?;
        pairs.push(EigPair {
            value: lambda,
            vector: x,
            residual,
        });
    }
    Ok(pairs)
}

/// Shifted inverse iteration for one eigenvector of a complex matrix given
/// an accurate eigenvalue.
fn inverse_iterate(ac: &DMatrix<C64>, lambda: C64, scale: f64) -> Result<(DVector<C64>, f64)> {
    let n = ac.nrows();
    // Offset the shift slightly off the exact eigenvalue so the LU stays
    // solvable; the eigenvector direction still dominates the solves.
    let shift = lambda + C64::new(1e-12 * f64::max(scale, lambda.norm()), 0.0);
    let shifted = ac - DMatrix::<C64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut x: DVector<C64> = seeded_unit_vector(n, 0xf00d).map(|v| C64::new(v, 0.0));
    let mut residual = f64::INFINITY;
    for _ in 0..5 {
        let y = lu.solve(&x).ok_or(Error::ConvergenceFailure {
            detail: "inverse iteration solve failed".into(),
        })?;
        let ynorm = y.norm();
        if !ynorm.is_finite() || ynorm == 0.0 {
            return Err(Error::ConvergenceFailure {
                detail: "inverse iteration produced a non-finite iterate".into(),
            });
        }
        x = y / C64::new(ynorm, 0.0);
        residual = (ac * &x - &x * lambda).norm();
        if residual <= 1e-10 * f64::max(1.0, lambda.norm()) {
            break;
        }
    }
    Ok((x, residual))
}

/// Eigenvector of a small dense matrix for a known eigenvalue, via shifted
/// inverse iteration in complex arithmetic.
fn small_eigenvector(m: &DMatrix<f64>, theta: C64) -> DVector<C64> {
    let k = m.nrows();
    let mc = m.map(|v| C64::new(v, 0.0));
    let shift = theta * C64::new(1.0 + 1e-12, 0.0) + C64::new(1e-300, 0.0);
    let lu = (&mc - DMatrix::<C64>::identity(k, k) * shift).lu();
    let mut y: DVector<C64> = seeded_unit_vector(k, 0xbead).map(|v| C64::new(v, 0.0));
    for _ in 0..4 {
        if let Some(z) = lu.solve(&y) {
            let zn = z.norm();
            if zn.is_finite() && zn > 0.0 {
                y = z / C64::new(zn, 0.0);
                continue;
            }
        }
        break;
    }
    y
}

/// LU factorization with partial pivoting of a real banded matrix, in the
/// classic band storage layout: entry `(i, j)` of the matrix lives at
/// `ab[(kl + ku + i - j, j)]`. Pivoting fills in up to `kl` extra
/// superdiagonals, hence the `2 kl + ku + 1` storage rows.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: DMatrix<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Factor the `n x n` matrix whose entry `(i, j)` is `get(i, j)`,
    /// assumed zero outside the band `-kl <= j - i <= ku`.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        get: &dyn Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let rows = 2 * kl + ku + 1;
        let mut ab = DMatrix::<f64>::zeros(rows, n);
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = usize::min(n - 1, j + kl);
            for i in lo..=hi {
                ab[(kl + ku + i - j, j)] = get(i, j);
            }
        }
        let mut piv = vec![0usize; n];
        let band = |i: usize, j: usize| kl + ku + i - j; // valid while i >= j - (ku + kl)
        for j in 0..n {
            // Partial pivot among rows j ..= j + kl.
            let hi = usize::min(n - 1, j + kl);
            let mut p = j;
            let mut best = ab[(band(j, j), j)].abs();
            for i in (j + 1)..=hi {
                let v = ab[(band(i, j), j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::ConvergenceFailure {
                    detail: format!("banded LU breakdown at column {j}"),
                });
            }
            piv[j] = p;
            let cmax = usize::min(n - 1, j + ku + kl);
            if p != j {
                for c in j..=cmax {
                    ab.swap((band(j, c), c), (band(p, c), c));
                }
            }
            let pivot = ab[(band(j, j), j)];
            for i in (j + 1)..=hi {
                let l = ab[(band(i, j), j)] / pivot;
                ab[(band(i, j), j)] = l;
                for c in (j + 1)..=cmax {
                    let u = ab[(band(j, c), c)];
                    if u != 0.0 {
                        ab[(band(i, c), c)] -= l * u;
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ab, piv })
    }

    /// Solve `A x = b` from the factorization.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let band = |i: usize, j: usize| kl + ku + i - j;
        let mut x = b.clone();
        // Forward: apply pivots and L.
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap_rows(j, p);
            }
            let hi = usize::min(n - 1, j + kl);
            let xj = x[j];
            for i in (j + 1)..=hi {
                x[i] -= self.ab[(band(i, j), j)] * xj;
            }
        }
        // Backward: solve U x = y.
        for j in (0..n).rev() {
            let cmax = usize::min(n - 1, j + ku + kl);
            let mut acc = x[j];
            for c in (j + 1)..=cmax {
                acc -= self.ab[(band(j, c), c)] * x[c];
            }
            x[j] = acc / self.ab[(band(j, j), j)];
        }
        x
    }
}

/// Power-iteration estimate of the matrix 2-norm (deterministic start).
pub fn op_norm_est(a: &DMatrix<f64>, iters: usize) -> f64 {
    let n = a.ncols();
    let mut v = seeded_unit_vector(n, 0xcafe);
    let mut norm = 0.0;
    for _ in 0..iters {
        let w = a * &v;
        let u = a.transpose() * &w;
        let un = u.norm();
        if un == 0.0 {
            return 0.0;
        }
        norm = w.norm();
        v = u / un;
    }
    norm
}

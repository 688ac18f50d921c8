//! Dense complex convex subproblem solvers.
//!
//! Three shapes cover every subproblem the algorithms produce:
//!
//! * [`solve_lin_ellipsoid`]: maximize `Re{k^H x}` over `x^H H x <= P`
//!   (closed form through one Cholesky solve).
//! * [`solve_trust_region`]: maximize `2 Re{q^H x} - x^H A x` over
//!   `x^H B x <= P` with `A >= 0`, `B > 0`, by bisecting the constraint's
//!   Lagrange multiplier. Diagonal and diagonal-plus-rank-one operands get
//!   an O(N)-per-step fast path.
//! * [`solve_two_constraint`]: maximize `Re{b^H v}` over the unit ball and a
//!   linearized power constraint, by bisecting the outer multiplier with the
//!   trust-region solver as the exact inner solve.
//!
//! Every solve returns a [`KktReport`] with stationarity, feasibility, and
//! complementarity residuals so callers can assert solution quality.

use nalgebra::ComplexField;
use thiserror::Error;

use crate::{C64, CMatrix, CVector, RVector};

/// Shared solver tolerances; a single source of truth for the test suites.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Relative primal feasibility.
    pub feasibility: f64,
    /// KKT stationarity/complementarity scale factor.
    pub kkt: f64,
    /// Relative bisection target on the constraint value.
    pub bisection: f64,
}

/// Defaults used by every algorithm in this crate.
pub const TOLERANCES: Tolerances = Tolerances {
    feasibility: 1e-9,
    kkt: 1e-8,
    bisection: 1e-10,
};

const LAMBDA_CEILING: f64 = 1e18;
const MAX_BISECT: usize = 500;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("matrix is singular (Cholesky failed even after jitter)")]
    SingularMatrix,
    #[error("quadratic form is not positive semidefinite (Rayleigh quotient {0})")]
    NotPsd(f64),
    #[error("multiplier search exceeded ceiling {ceiling:.1e} (residual {residual:.3e})")]
    BisectionCeiling { ceiling: f64, residual: f64 },
    #[error("linearized constraint set is empty (minimum violation {0:.3e})")]
    Infeasible(f64),
    #[error("power bound must be positive, got {0}")]
    NonPositiveBound(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Certificate accompanying every subproblem solution.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Lagrange multipliers, one per constraint, nonnegative.
    pub lambdas: Vec<f64>,
    /// Norm of the stationarity residual.
    pub stationarity_residual: f64,
    /// Largest constraint violation (0 when feasible).
    pub constraint_violation: f64,
    /// Largest `lambda * |constraint slack|`.
    pub complementarity_residual: f64,
    /// Iterations spent in the multiplier search.
    pub iterations: usize,
    /// Set when the objective data vanished and a trivial point was returned.
    pub degenerate: bool,
}

impl KktReport {
    fn trivial() -> Self {
        KktReport {
            lambdas: Vec::new(),
            stationarity_residual: 0.0,
            constraint_violation: 0.0,
            complementarity_residual: 0.0,
            iterations: 0,
            degenerate: true,
        }
    }
}

/// Hermitian operand of a quadratic form, kept in structured form so the
/// algorithms never materialize N x N matrices for diagonal data.
#[derive(Debug, Clone)]
pub enum HermitianForm {
    /// Full Hermitian matrix.
    Dense(CMatrix),
    /// Real nonnegative diagonal.
    Diagonal(RVector),
    /// `diag + weight * factor factor^H` with `weight >= 0`.
    DiagonalPlusRankOne {
        diag: RVector,
        factor: CVector,
        weight: f64,
    },
}

impl HermitianForm {
    pub fn dim(&self) -> usize {
        match self {
            HermitianForm::Dense(m) => m.nrows(),
            HermitianForm::Diagonal(d) => d.len(),
            HermitianForm::DiagonalPlusRankOne { diag, .. } => diag.len(),
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &CVector) -> CVector {
        match self {
            HermitianForm::Dense(m) => m * x,
            HermitianForm::Diagonal(d) => {
                CVector::from_fn(d.len(), |i, _| x[i] * C64::from(d[i]))
            }
            HermitianForm::DiagonalPlusRankOne {
                diag,
                factor,
                weight,
            } => {
                let inner = factor.dotc(x) * C64::from(*weight);
                CVector::from_fn(diag.len(), |i, _| x[i] * C64::from(diag[i]) + factor[i] * inner)
            }
        }
    }

    /// Real quadratic form `x^H M x`.
    pub fn quad(&self, x: &CVector) -> f64 {
        match self {
            HermitianForm::Dense(m) => x.dotc(&(m * x)).re,
            HermitianForm::Diagonal(d) => x
                .iter()
                .zip(d.iter())
                .map(|(xi, di)| di * xi.norm_sqr())
                .sum(),
            HermitianForm::DiagonalPlusRankOne {
                diag,
                factor,
                weight,
            } => {
                let base: f64 = x
                    .iter()
                    .zip(diag.iter())
                    .map(|(xi, di)| di * xi.norm_sqr())
                    .sum();
                base + weight * factor.dotc(x).norm_sqr()
            }
        }
    }

    fn to_dense(&self) -> CMatrix {
        match self {
            HermitianForm::Dense(m) => m.clone(),
            HermitianForm::Diagonal(d) => {
                CMatrix::from_fn(d.len(), d.len(), |r, c| {
                    if r == c {
                        C64::from(d[r])
                    } else {
                        C64::from(0.0)
                    }
                })
            }
            HermitianForm::DiagonalPlusRankOne {
                diag,
                factor,
                weight,
            } => {
                let n = diag.len();
                CMatrix::from_fn(n, n, |r, c| {
                    let rank1 = factor[r] * factor[c].conjugate() * C64::from(*weight);
                    if r == c {
                        C64::from(diag[r]) + rank1
                    } else {
                        rank1
                    }
                })
            }
        }
    }
}

/// Cholesky with one diagonal-jitter retry before giving up.
fn cholesky_with_jitter(m: &CMatrix) -> Option<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    nalgebra::Cholesky::new(m.clone()).or_else(|| {
        let n = m.nrows();
        if n == 0 {
            return None;
        }
        let jitter = 1e-12 * m.trace().re / n as f64;
        let mut bumped = m.clone();
        for i in 0..n {
            bumped[(i, i)] += C64::from(jitter);
        }
        nalgebra::Cholesky::new(bumped)
    })
}

/// Maximizes `Re{k^H x}` subject to `x^H H x <= p` for Hermitian positive
/// definite `H`. Closed form: `x = sqrt(p / (k^H H^-1 k)) H^-1 k`.
pub fn solve_lin_ellipsoid(
    k: &CVector,
    h: &CMatrix,
    p: f64,
) -> Result<(CVector, KktReport), SolverError> {
    if !(p > 0.0) {
        return Err(SolverError::NonPositiveBound(p));
    }
    if h.nrows() != k.len() || h.ncols() != k.len() {
        return Err(SolverError::Dimension(format!(
            "H is {}x{} but k has length {}",
            h.nrows(),
            h.ncols(),
            k.len()
        )));
    }
    let k_norm = k.norm();
    if k_norm == 0.0 {
        return Ok((CVector::zeros(k.len()), KktReport::trivial()));
    }
    let chol = cholesky_with_jitter(h).ok_or(SolverError::SingularMatrix)?;
    let hk = chol.solve(k);
    let quad = k.dotc(&hk).re;
    if !(quad > 0.0) {
        return Err(SolverError::NotPsd(quad));
    }
    let scale = (p / quad).sqrt();
    let x = hk.map(|c| c * C64::from(scale));
    let lambda = (quad / p).sqrt() / 2.0;
    let residual = (k.map(|c| c * C64::from(0.5)) - (h * &x).map(|c| c * C64::from(lambda))).norm();
    let attained = x.dotc(&(h * &x)).re;
    Ok((
        x,
        KktReport {
            lambdas: vec![lambda],
            stationarity_residual: residual,
            constraint_violation: (attained - p).max(0.0),
            complementarity_residual: lambda * (attained - p).abs(),
            iterations: 0,
            degenerate: false,
        },
    ))
}

/// Per-lambda linear solver for `(A + lambda B) x = q`, specialized on the
/// operand structure.
enum ShiftedSolver<'a> {
    DiagDiag {
        a: &'a RVector,
        b: &'a RVector,
    },
    DiagR1Diag {
        a_diag: &'a RVector,
        factor: &'a CVector,
        weight: f64,
        b: &'a RVector,
    },
    Dense {
        a: CMatrix,
        b: CMatrix,
    },
}

impl<'a> ShiftedSolver<'a> {
    fn build(a: &'a HermitianForm, b: &'a HermitianForm) -> Result<Self, SolverError> {
        match (a, b) {
            (HermitianForm::Diagonal(da), HermitianForm::Diagonal(db)) => {
                check_psd_diag(da)?;
                check_pd_diag(db)?;
                Ok(ShiftedSolver::DiagDiag { a: da, b: db })
            }
            (
                HermitianForm::DiagonalPlusRankOne {
                    diag,
                    factor,
                    weight,
                },
                HermitianForm::Diagonal(db),
            ) => {
                check_psd_diag(diag)?;
                check_pd_diag(db)?;
                if *weight < 0.0 {
                    return Err(SolverError::NotPsd(*weight));
                }
                Ok(ShiftedSolver::DiagR1Diag {
                    a_diag: diag,
                    factor,
                    weight: *weight,
                    b: db,
                })
            }
            _ => Ok(ShiftedSolver::Dense {
                a: a.to_dense(),
                b: b.to_dense(),
            }),
        }
    }

    fn solve(&self, lambda: f64, q: &CVector) -> Option<CVector> {
        match self {
            ShiftedSolver::DiagDiag { a, b } => {
                let mut x = CVector::zeros(q.len());
                for i in 0..q.len() {
                    let denom = a[i] + lambda * b[i];
                    if denom <= 0.0 {
                        if q[i].norm_sqr() == 0.0 {
                            x[i] = C64::from(0.0);
                            continue;
                        }
                        return None;
                    }
                    x[i] = q[i] / C64::from(denom);
                }
                Some(x)
            }
            ShiftedSolver::DiagR1Diag {
                a_diag,
                factor,
                weight,
                b,
            } => {
                // Sherman-Morrison on D = a_diag + lambda b, rank-one update
                // weight * factor factor^H.
                let n = q.len();
                let mut base_q = CVector::zeros(n);
                let mut base_f = CVector::zeros(n);
                for i in 0..n {
                    let denom = a_diag[i] + lambda * b[i];
                    if denom <= 0.0 {
                        if q[i].norm_sqr() == 0.0 && factor[i].norm_sqr() == 0.0 {
                            continue;
                        }
                        return None;
                    }
                    base_q[i] = q[i] / C64::from(denom);
                    base_f[i] = factor[i] / C64::from(denom);
                }
                let denom = C64::from(1.0) + C64::from(*weight) * factor.dotc(&base_f);
                let coeff = C64::from(*weight) * factor.dotc(&base_q) / denom;
                Some(CVector::from_fn(n, |i, _| base_q[i] - base_f[i] * coeff))
            }
            ShiftedSolver::Dense { a, b } => {
                let shifted = a + b.map(|c| c * C64::from(lambda));
                cholesky_with_jitter(&shifted).map(|chol| chol.solve(q))
            }
        }
    }
}

fn check_psd_diag(d: &RVector) -> Result<(), SolverError> {
    match d.iter().copied().fold(f64::INFINITY, f64::min) {
        min if min < -1e-15 => Err(SolverError::NotPsd(min)),
        _ => Ok(()),
    }
}

fn check_pd_diag(d: &RVector) -> Result<(), SolverError> {
    match d.iter().copied().fold(f64::INFINITY, f64::min) {
        min if !(min > 0.0) => Err(SolverError::NotPsd(min)),
        _ => Ok(()),
    }
}

/// Maximizes `2 Re{q^H x} - x^H A x` subject to `x^H B x <= p`, with `A`
/// Hermitian PSD and `B` Hermitian PD.
///
/// If the unconstrained stationary point exists and is feasible it is
/// returned with a zero multiplier; otherwise the multiplier is bisected on
/// the strictly decreasing constraint value `phi(lambda) = x(lambda)^H B
/// x(lambda) - p` with `x(lambda) = (A + lambda B)^-1 q`.
pub fn solve_trust_region(
    q: &CVector,
    a: &HermitianForm,
    b: &HermitianForm,
    p: f64,
) -> Result<(CVector, KktReport), SolverError> {
    if !(p > 0.0) {
        return Err(SolverError::NonPositiveBound(p));
    }
    let n = q.len();
    if a.dim() != n || b.dim() != n {
        return Err(SolverError::Dimension(format!(
            "operands are {} and {} but q has length {n}",
            a.dim(),
            b.dim()
        )));
    }
    if q.norm() == 0.0 {
        return Ok((CVector::zeros(n), KktReport::trivial()));
    }
    let solver = ShiftedSolver::build(a, b)?;

    let finish = |x: CVector, lambda: f64, iterations: usize| -> Result<(CVector, KktReport), SolverError> {
        let rayleigh = a.quad(&x);
        if rayleigh < -1e-10 * (1.0 + x.norm_squared()) {
            return Err(SolverError::NotPsd(rayleigh));
        }
        let attained = b.quad(&x);
        // nudge onto the constraint if bisection left us a hair outside
        let (x, attained) = if attained > p {
            let shrink = (p / attained).sqrt();
            let x = x.map(|c| c * C64::from(shrink));
            let attained = b.quad(&x);
            (x, attained)
        } else {
            (x, attained)
        };
        let residual = {
            let mut r = q.clone();
            r -= a.apply(&x);
            r -= b.apply(&x).map(|c| c * C64::from(lambda));
            r.norm()
        };
        Ok((
            x,
            KktReport {
                lambdas: vec![lambda],
                stationarity_residual: residual,
                constraint_violation: (attained - p).max(0.0),
                complementarity_residual: lambda * (attained - p).abs(),
                iterations,
                degenerate: false,
            },
        ))
    };

    // interior candidate
    if let Some(x0) = solver.solve(0.0, q) {
        if x0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && b.quad(&x0) <= p * (1.0 + TOLERANCES.feasibility)
        {
            return finish(x0, 0.0, 0);
        }
    }

    // bracket: phi(0+) > 0, double until phi(hi) < 0
    let phi = |lambda: f64| -> Option<f64> {
        solver.solve(lambda, q).map(|x| b.quad(&x) - p)
    };
    let mut hi = 1.0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        match phi(hi) {
            Some(v) if v < 0.0 => break,
            _ => {
                hi *= 2.0;
                if hi > LAMBDA_CEILING {
                    let residual = phi(LAMBDA_CEILING).unwrap_or(f64::INFINITY);
                    return Err(SolverError::BisectionCeiling {
                        ceiling: LAMBDA_CEILING,
                        residual,
                    });
                }
            }
        }
    }
    let mut lo = 0.0;
    let mut lambda = hi;
    while iterations < MAX_BISECT {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval exhausted at f64 resolution
        }
        match phi(mid) {
            None => lo = mid,
            Some(v) if v.abs() <= TOLERANCES.bisection * p => {
                lambda = mid;
                break;
            }
            Some(v) if v > 0.0 => lo = mid,
            Some(_) => hi = mid,
        }
        lambda = hi;
    }
    let x = solver
        .solve(lambda, q)
        .ok_or(SolverError::SingularMatrix)?;
    finish(x, lambda, iterations)
}

/// Maximizes `Re{b^H v}` subject to `v^H v <= 1` and
/// `v^H C v <= p_prime (2 Re{v_ref^H v} - v_ref^H v_ref)`.
///
/// The outer multiplier on the second constraint is bisected; for each value
/// the remaining ball-constrained concave problem is solved exactly by
/// [`solve_trust_region`], so every iterate satisfies the stationarity system
/// `(lambda_1 I + lambda_2 C) v = b/2 + lambda_2 p_prime v_ref`.
pub fn solve_two_constraint(
    b_vec: &CVector,
    c_mat: &CMatrix,
    v_ref: &CVector,
    p_prime: f64,
) -> Result<(CVector, KktReport), SolverError> {
    let m = b_vec.len();
    if c_mat.nrows() != m || c_mat.ncols() != m || v_ref.len() != m {
        return Err(SolverError::Dimension(format!(
            "C is {}x{}, v_ref has length {}, b has length {m}",
            c_mat.nrows(),
            c_mat.ncols(),
            v_ref.len()
        )));
    }
    let slack_scale = 1.0 + p_prime.abs() * (1.0 + v_ref.norm_squared());
    let grad_scale = 1.0 + b_vec.norm();
    // g2(v) = v^H C v - p' (2 Re{v_ref^H v} - ||v_ref||^2)
    let g2 = |v: &CVector| -> f64 {
        v.dotc(&(c_mat * v)).re
            - p_prime * (2.0 * v_ref.dotc(v).re - v_ref.norm_squared())
    };
    let identity = HermitianForm::Diagonal(RVector::from_element(m, 1.0));

    if b_vec.norm() == 0.0 {
        return Ok((v_ref.clone(), KktReport::trivial()));
    }

    // ball-only candidate: lambda_2 = 0
    let ball_v = b_vec.map(|c| c / C64::from(b_vec.norm()));
    if g2(&ball_v) <= TOLERANCES.feasibility * slack_scale {
        let lambda1 = b_vec.norm() / 2.0;
        return Ok((
            ball_v,
            KktReport {
                lambdas: vec![lambda1, 0.0],
                stationarity_residual: 0.0,
                constraint_violation: 0.0,
                complementarity_residual: 0.0,
                iterations: 0,
                degenerate: false,
            },
        ));
    }

    // feasibility: minimize g2 over the ball via the trust-region solver
    let c_form = HermitianForm::Dense(c_mat.clone());
    let feas_q = v_ref.map(|c| c * C64::from(p_prime));
    let (min_arg, _) = solve_trust_region(&feas_q, &c_form, &identity, 1.0)?;
    let min_g2 = g2(&min_arg);
    if min_g2 > TOLERANCES.feasibility * slack_scale {
        return Err(SolverError::Infeasible(min_g2));
    }

    // outer bisection on lambda_2; inner exact ball solve. The inner argmax's
    // g2 value is nonincreasing in lambda_2.
    let inner = |lambda2: f64| -> Result<(CVector, KktReport), SolverError> {
        let q = CVector::from_fn(m, |i, _| {
            b_vec[i] * C64::from(0.5) + v_ref[i] * C64::from(lambda2 * p_prime)
        });
        let a = if lambda2 == 0.0 {
            HermitianForm::Diagonal(RVector::zeros(m))
        } else {
            HermitianForm::Dense(c_mat.map(|c| c * C64::from(lambda2)))
        };
        solve_trust_region(&q, &a, &identity, 1.0)
    };

    let mut hi = 1.0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (v, _) = inner(hi)?;
        if g2(&v) < 0.0 {
            break;
        }
        hi *= 2.0;
        if hi > LAMBDA_CEILING {
            return Err(SolverError::BisectionCeiling {
                ceiling: LAMBDA_CEILING,
                residual: min_g2,
            });
        }
    }
    let mut lo = 0.0;
    let mut best: Option<(CVector, KktReport, f64)> = None;
    while iterations < MAX_BISECT {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 * hi {
            break;
        }
        let (v, inner_report) = inner(mid)?;
        let slack = g2(&v);
        best = Some((v, inner_report, mid));
        if slack.abs() <= TOLERANCES.feasibility * slack_scale {
            break;
        }
        if slack > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (v, inner_report, lambda2) = match best {
        Some(b) => b,
        None => {
            let (v, r) = inner(hi)?;
            (v, r, hi)
        }
    };
    // take the feasible side if the final iterate still violates
    let (v, inner_report, lambda2) = if g2(&v) > TOLERANCES.feasibility * slack_scale {
        let (v, r) = inner(hi)?;
        (v, r, hi)
    } else {
        (v, inner_report, lambda2)
    };

    let lambda1 = inner_report.lambdas.first().copied().unwrap_or(0.0);
    let g1 = v.norm_squared() - 1.0;
    let g2v = g2(&v);
    // stationarity: (lambda1 I + lambda2 C) v = b/2 + lambda2 p' v_ref
    let residual = {
        let mut r = b_vec.map(|c| c * C64::from(0.5));
        r += v_ref.map(|c| c * C64::from(lambda2 * p_prime));
        r -= v.map(|c| c * C64::from(lambda1));
        r -= (c_mat * &v).map(|c| c * C64::from(lambda2));
        r.norm()
    };
    Ok((
        v,
        KktReport {
            lambdas: vec![lambda1, lambda2],
            stationarity_residual: residual,
            constraint_violation: g1.max(g2v).max(0.0),
            complementarity_residual: (lambda1 * g1.abs()).max(lambda2 * g2v.abs()),
            iterations,
            degenerate: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{random_cvector, random_unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let l = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
        });
        let mut m = &l * l.adjoint();
        for i in 0..n {
            m[(i, i)] += C64::from(0.2);
        }
        m
    }

    fn random_hpsd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let l = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
        });
        &l * l.adjoint()
    }

    /// Uniform sample inside the ellipsoid x^H H x <= p.
    fn sample_ellipsoid(rng: &mut ChaCha8Rng, h: &CMatrix, p: f64) -> CVector {
        let n = h.nrows();
        let z = random_cvector(rng, n);
        let radius = rng.gen::<f64>().powf(1.0 / (2 * n) as f64) * p.sqrt();
        let z = z.map(|c| c * C64::from(radius / z.norm()));
        let chol = nalgebra::Cholesky::new(h.clone()).unwrap();
        chol.l()
            .adjoint()
            .solve_upper_triangular(&z)
            .expect("triangular solve")
    }

    #[test]
    fn lin_ellipsoid_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let k = random_cvector(&mut rng, 4);
        let eye = CMatrix::identity(4, 4);
        let (x, report) = solve_lin_ellipsoid(&k, &eye, 1.0).unwrap();
        assert!((x - k.map(|c| c / C64::from(k.norm()))).norm() < 1e-12);
        assert!(report.stationarity_residual <= TOLERANCES.kkt * (1.0 + k.norm()));
        // H = 4I halves the attainable objective
        let four = eye.map(|c| c * C64::from(4.0));
        let (x4, _) = solve_lin_ellipsoid(&k, &four, 1.0).unwrap();
        let objective = k.dotc(&x4).re;
        assert!(rel_err(objective, k.norm() / 2.0) < 1e-12);
    }

    #[test]
    fn lin_ellipsoid_beats_random_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let h = random_hpd(&mut rng, 4);
            let k = random_cvector(&mut rng, 4);
            let p = 0.5 + rng.gen::<f64>();
            let (x, report) = solve_lin_ellipsoid(&k, &h, p).unwrap();
            let objective = k.dotc(&x).re;
            assert!(rel_err(objective, (p * k.dotc(&nalgebra::Cholesky::new(h.clone()).unwrap().solve(&k)).re).sqrt()) < 1e-10);
            // constraint active
            let attained = x.dotc(&(&h * &x)).re;
            assert!(rel_err(attained, p) < 1e-10);
            for _ in 0..100_000 {
                let y = sample_ellipsoid(&mut rng, &h, p);
                assert!(k.dotc(&y).re <= objective * (1.0 + 1e-9) + 1e-12);
            }
            assert!(report.constraint_violation <= TOLERANCES.feasibility * p);
        }
    }

    #[test]
    fn lin_ellipsoid_degenerate_and_errors() {
        let eye = CMatrix::identity(3, 3);
        let zero = CVector::zeros(3);
        let (x, report) = solve_lin_ellipsoid(&zero, &eye, 1.0).unwrap();
        assert!(report.degenerate);
        assert_eq!(x.norm(), 0.0);
        let singular = CMatrix::zeros(3, 3);
        let k = CVector::from_element(3, C64::from(1.0));
        assert!(matches!(
            solve_lin_ellipsoid(&k, &singular, 1.0),
            Err(SolverError::SingularMatrix)
        ));
        assert!(matches!(
            solve_lin_ellipsoid(&k, &eye, 0.0),
            Err(SolverError::NonPositiveBound(_))
        ));
    }

    /// Momentum projected-gradient oracle in whitened coordinates; restarts
    /// guard against a poor first basin.
    fn trust_region_pg_oracle(
        rng: &mut ChaCha8Rng,
        q: &CVector,
        a: &CMatrix,
        b: &CMatrix,
        p: f64,
    ) -> f64 {
        let n = q.len();
        let chol = nalgebra::Cholesky::new(b.clone()).unwrap();
        let l = chol.l();
        let q_t = l.solve_lower_triangular(q).unwrap();
        let y_a = l.solve_lower_triangular(a).unwrap();
        let a_t = l
            .solve_lower_triangular(&y_a.adjoint())
            .unwrap()
            .adjoint()
            .into_owned();
        let lips = a_t.norm() + 1e-9;
        let step = 1.0 / lips;
        let objective = |y: &CVector| 2.0 * q_t.dotc(y).re - y.dotc(&(&a_t * y)).re;
        let mut best = f64::NEG_INFINITY;
        for restart in 0..4 {
            let mut y = if restart == 0 {
                CVector::zeros(n)
            } else {
                let z = random_cvector(rng, n);
                z.map(|c| c * C64::from(p.sqrt() * 0.7 / z.norm()))
            };
            let mut y_prev = y.clone();
            for iter in 0..200_000 {
                let beta = (iter as f64) / (iter as f64 + 3.0);
                let mut z = &y + (&y - &y_prev).map(|c| c * C64::from(beta));
                let zn = z.norm_squared();
                if zn > p {
                    z = z.map(|c| c * C64::from((p / zn).sqrt()));
                }
                let grad = &q_t - (&a_t * &z);
                y_prev = y;
                y = &z + grad.map(|c| c * C64::from(step));
                let yn = y.norm_squared();
                if yn > p {
                    y = y.map(|c| c * C64::from((p / yn).sqrt()));
                }
            }
            best = best.max(objective(&y));
        }
        best
    }

    #[test]
    fn trust_region_reduces_to_lin_ellipsoid_when_a_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let q = random_cvector(&mut rng, 5);
        let a = HermitianForm::Diagonal(RVector::zeros(5));
        let b = HermitianForm::Diagonal(RVector::from_element(5, 1.0));
        let p = 2.0;
        let (x, report) = solve_trust_region(&q, &a, &b, p).unwrap();
        let expect = q.map(|c| c * C64::from(p.sqrt() / q.norm()));
        assert!((x - expect).norm() < 1e-7 * p.sqrt());
        assert!(report.lambdas[0] > 0.0);
    }

    #[test]
    fn trust_region_interior_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = random_unit(&mut rng, 4).map(|c| c * C64::from(0.1));
        let a = HermitianForm::Diagonal(RVector::from_element(4, 1.0));
        let b = HermitianForm::Diagonal(RVector::from_element(4, 1.0));
        let (x, report) = solve_trust_region(&q, &a, &b, 1.0).unwrap();
        assert!((&x - &q).norm() < 1e-12);
        assert_eq!(report.lambdas[0], 0.0);
    }

    #[test]
    fn trust_region_matches_pg_oracle_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..5 {
            let n = 6;
            let q = random_cvector(&mut rng, n);
            let a_diag = RVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0);
            let b_diag = RVector::from_fn(n, |_, _| 0.2 + rng.gen::<f64>());
            let p = 0.5 + rng.gen::<f64>();
            let (x, report) = solve_trust_region(
                &q,
                &HermitianForm::Diagonal(a_diag.clone()),
                &HermitianForm::Diagonal(b_diag.clone()),
                p,
            )
            .unwrap();
            let objective = 2.0 * q.dotc(&x).re
                - HermitianForm::Diagonal(a_diag.clone()).quad(&x);
            let a_dense = HermitianForm::Diagonal(a_diag).to_dense();
            let b_dense = HermitianForm::Diagonal(b_diag).to_dense();
            let oracle = trust_region_pg_oracle(&mut rng, &q, &a_dense, &b_dense, p);
            assert!(
                objective >= oracle - 1e-6 * (1.0 + oracle.abs()),
                "objective {objective} vs oracle {oracle}"
            );
            assert!(report.stationarity_residual <= TOLERANCES.kkt * (1.0 + q.norm()));
            assert!(report.constraint_violation <= TOLERANCES.feasibility * p);
        }
    }

    #[test]
    fn trust_region_matches_pg_oracle_dense_and_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for trial in 0..6 {
            let n = 5;
            let q = random_cvector(&mut rng, n);
            let p = 0.5 + rng.gen::<f64>();
            let (a_form, b_form) = if trial % 2 == 0 {
                (
                    HermitianForm::Dense(random_hpsd(&mut rng, n)),
                    HermitianForm::Dense(random_hpd(&mut rng, n)),
                )
            } else {
                (
                    HermitianForm::DiagonalPlusRankOne {
                        diag: RVector::from_fn(n, |_, _| rng.gen::<f64>()),
                        factor: random_cvector(&mut rng, n),
                        weight: rng.gen::<f64>() * 2.0,
                    },
                    HermitianForm::Diagonal(RVector::from_fn(n, |_, _| 0.3 + rng.gen::<f64>())),
                )
            };
            let (x, report) = solve_trust_region(&q, &a_form, &b_form, p).unwrap();
            let objective = 2.0 * q.dotc(&x).re - a_form.quad(&x);
            let oracle =
                trust_region_pg_oracle(&mut rng, &q, &a_form.to_dense(), &b_form.to_dense(), p);
            assert!(
                objective >= oracle - 1e-6 * (1.0 + oracle.abs()),
                "objective {objective} vs oracle {oracle}"
            );
            assert!(report.constraint_violation <= TOLERANCES.feasibility * p);
        }
    }

    #[test]
    fn trust_region_constraint_value_decreases_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let n = 6;
        let q = random_cvector(&mut rng, n);
        let a = HermitianForm::Diagonal(RVector::from_fn(n, |_, _| rng.gen::<f64>()));
        let b = HermitianForm::Diagonal(RVector::from_fn(n, |_, _| 0.2 + rng.gen::<f64>()));
        let solver = ShiftedSolver::build(&a, &b).unwrap();
        let mut last = f64::INFINITY;
        for i in 1..40 {
            let lambda = 0.05 * i as f64;
            let x = solver.solve(lambda, &q).unwrap();
            let value = b.quad(&x);
            assert!(value < last, "phi not strictly decreasing at lambda {lambda}");
            last = value;
        }
    }

    #[test]
    fn trust_region_rejects_bad_operands() {
        let q = CVector::from_element(3, C64::from(1.0));
        let neg = HermitianForm::Diagonal(RVector::from_element(3, -1.0));
        let b = HermitianForm::Diagonal(RVector::from_element(3, 1.0));
        assert!(matches!(
            solve_trust_region(&q, &neg, &b, 1.0),
            Err(SolverError::NotPsd(_))
        ));
        let a = HermitianForm::Diagonal(RVector::zeros(3));
        let zero_b = HermitianForm::Diagonal(RVector::zeros(3));
        assert!(matches!(
            solve_trust_region(&q, &a, &zero_b, 1.0),
            Err(SolverError::NotPsd(_))
        ));
    }

    /// Brute-force grid over the 4 real dimensions of a length-2 complex
    /// vector, shrunk around the best point each round.
    fn two_constraint_grid_oracle(
        b_vec: &CVector,
        c_mat: &CMatrix,
        v_ref: &CVector,
        p_prime: f64,
    ) -> f64 {
        let objective = |v: &CVector| b_vec.dotc(v).re;
        let feasible = |v: &CVector| {
            v.norm_squared() <= 1.0 + 1e-12
                && v.dotc(&(c_mat * v)).re
                    - p_prime * (2.0 * v_ref.dotc(v).re - v_ref.norm_squared())
                    <= 1e-12
        };
        let mut center = [0.0f64; 4];
        let mut half = 1.0f64;
        let mut best = f64::NEG_INFINITY;
        let mut best_point = center;
        // coarse pass
        let steps = 14i32;
        for i0 in -steps..=steps {
            for i1 in -steps..=steps {
                for i2 in -steps..=steps {
                    for i3 in -steps..=steps {
                        let v = CVector::from_vec(vec![
                            C64::new(i0 as f64 / steps as f64, i1 as f64 / steps as f64),
                            C64::new(i2 as f64 / steps as f64, i3 as f64 / steps as f64),
                        ]);
                        if feasible(&v) {
                            let val = objective(&v);
                            if val > best {
                                best = val;
                                best_point = [v[0].re, v[0].im, v[1].re, v[1].im];
                            }
                        }
                    }
                }
            }
        }
        center = best_point;
        half /= steps as f64;
        half *= 2.0;
        // local refinement
        for _ in 0..45 {
            let fine = 4i32;
            for i0 in -fine..=fine {
                for i1 in -fine..=fine {
                    for i2 in -fine..=fine {
                        for i3 in -fine..=fine {
                            let v = CVector::from_vec(vec![
                                C64::new(
                                    center[0] + half * i0 as f64 / fine as f64,
                                    center[1] + half * i1 as f64 / fine as f64,
                                ),
                                C64::new(
                                    center[2] + half * i2 as f64 / fine as f64,
                                    center[3] + half * i3 as f64 / fine as f64,
                                ),
                            ]);
                            if feasible(&v) {
                                let val = objective(&v);
                                if val > best {
                                    best = val;
                                    best_point = [v[0].re, v[0].im, v[1].re, v[1].im];
                                }
                            }
                        }
                    }
                }
            }
            center = best_point;
            half *= 0.6;
        }
        best
    }

    #[test]
    fn two_constraint_ball_only_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let v_ref = random_unit(&mut rng, 2);
        // b along v_ref so the second (half-space, C = 0) constraint is slack
        let b_vec = v_ref.map(|c| c * C64::from(3.0));
        let c_mat = CMatrix::zeros(2, 2);
        let (v, report) = solve_two_constraint(&b_vec, &c_mat, &v_ref, 0.5).unwrap();
        assert!((&v - &v_ref).norm() < 1e-9);
        assert_eq!(report.lambdas[1], 0.0);
    }

    #[test]
    fn two_constraint_aligned_generous_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let v_ref = random_unit(&mut rng, 2);
        let b_vec = v_ref.map(|c| c * C64::from(2.0));
        let c_mat = CMatrix::identity(2, 2);
        let (v, _) = solve_two_constraint(&b_vec, &c_mat, &v_ref, 50.0).unwrap();
        assert!((&v - &v_ref).norm() < 1e-8);
    }

    #[test]
    fn two_constraint_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..6 {
            let b_vec = random_cvector(&mut rng, 2);
            let c_mat = random_hpsd(&mut rng, 2);
            let v_ref = random_unit(&mut rng, 2).map(|c| c * C64::from(0.9));
            let p_prime = 0.5 + rng.gen::<f64>() * 2.0;
            let solved = solve_two_constraint(&b_vec, &c_mat, &v_ref, p_prime);
            let (v, report) = match solved {
                Ok(pair) => pair,
                Err(SolverError::Infeasible(_)) => continue,
                Err(e) => panic!("unexpected solver error {e}"),
            };
            let objective = b_vec.dotc(&v).re;
            let oracle = two_constraint_grid_oracle(&b_vec, &c_mat, &v_ref, p_prime);
            assert!(
                objective >= oracle - 1e-6 * (1.0 + oracle.abs()),
                "objective {objective} vs oracle {oracle}"
            );
            assert!(report.constraint_violation <= TOLERANCES.feasibility * 10.0);
            assert!(
                report.complementarity_residual <= TOLERANCES.kkt * (1.0 + b_vec.norm()) * 10.0
            );
        }
    }

    #[test]
    fn two_constraint_reports_infeasible() {
        // v_ref = 0 makes the linearized right-hand side nonpositive for
        // every v, while C > 0 forces v^H C v > 0 unless v = 0; with the
        // p_prime term zero the only feasible point would need v = 0, but
        // then b^H v = 0 and g2(0) = 0 <= 0 is feasible. Use a strictly
        // negative rhs instead: v_ref = 0 and p_prime < 0 flips the sign.
        let b_vec = CVector::from_element(2, C64::from(1.0));
        let c_mat = CMatrix::identity(2, 2);
        let v_ref = CVector::from_vec(vec![C64::from(0.8), C64::from(0.0)]);
        // constraint: v^H v <= -5 (2 Re{v_ref^H v} - 0.64), infeasible when
        // the rhs is forced negative for every v near the objective cone
        let result = solve_two_constraint(&b_vec, &c_mat, &v_ref, -5.0);
        match result {
            Err(SolverError::Infeasible(_)) => {}
            Ok((v, _)) => {
                // if a point came back it must genuinely satisfy both sets
                assert!(v.norm_squared() <= 1.0 + 1e-9);
                let g2 = v.dotc(&(&c_mat * &v)).re
                    + 5.0 * (2.0 * v_ref.dotc(&v).re - v_ref.norm_squared());
                assert!(g2 <= 1e-8);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}

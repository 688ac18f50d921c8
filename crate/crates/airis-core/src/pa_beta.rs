//! Power-allocation factor subproblem.
//!
//! With the beam and the IRS direction fixed, forcing the BS + IRS power sum
//! to the budget pins the IRS gain `rho` as a function of `beta`, and the SNR
//! collapses to a scalar rational function
//!
//! ```text
//! f(beta) = (a b^2 + b b + 2 c b sqrt(d b^2 + e b + f)) / (g b + h)
//! ```
//!
//! whose eight coefficients come from four channel couplings. The function is
//! fitted by polynomial least squares on a uniform grid, the fitted
//! polynomial's stationary points give candidate maximizers (closed forms for
//! orders 2 and 3, companion-matrix eigenvalues for 4 and 5), and the best
//! candidate under the *true* `f` wins.

use nalgebra::{ComplexField, DMatrix, DVector};
use thiserror::Error;

use crate::model::{ChannelSet, Scenario};
use crate::{C64, CVector};

#[derive(Debug, Error)]
pub enum BetaError {
    #[error("beta must lie in [0,1], got {0}")]
    BetaOutOfRange(f64),
    #[error("radicand is negative beyond roundoff: {0}")]
    NegativeRadicand(f64),
    #[error("regression order must lie in [2,5], got {0}")]
    OrderOutOfRange(usize),
    #[error("need at least {need} samples for order {order}, got {got}")]
    TooFewSamples { need: usize, order: usize, got: usize },
    #[error("normal equations are rank deficient (duplicate beta samples?)")]
    RankDeficient,
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// The eight scalars of the closed-form rate expression `f(beta)`.
#[derive(Debug, Clone, Copy)]
pub struct PaCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
}

/// Sampling design for the polynomial regression: order `q_order` in [2,5]
/// and at least `5 * (q_order + 1)` samples.
#[derive(Debug, Clone, Copy)]
pub struct RegressionConfig {
    q_order: usize,
    j_samples: usize,
}

impl RegressionConfig {
    pub fn new(q_order: usize, j_samples: usize) -> Result<Self, BetaError> {
        if !(2..=5).contains(&q_order) {
            return Err(BetaError::OrderOutOfRange(q_order));
        }
        let need = 5 * (q_order + 1);
        if j_samples < need {
            return Err(BetaError::TooFewSamples {
                need,
                order: q_order,
                got: j_samples,
            });
        }
        Ok(Self { q_order, j_samples })
    }

    pub fn q_order(&self) -> usize {
        self.q_order
    }

    pub fn j_samples(&self) -> usize {
        self.j_samples
    }
}

/// Outcome of one regression-based beta optimization.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted polynomial coefficients, constant term first.
    pub coeffs: Vec<f64>,
    /// Mean squared fitting error over the samples.
    pub mse: f64,
    /// Stationary-point candidates mapped into [0,1].
    pub candidates: Vec<f64>,
    /// Selected maximizer of the true objective.
    pub beta_opt: f64,
}

/// IRS gain that makes the total BS + IRS consumption hit the budget exactly:
/// `rho = sqrt((1-beta) P / (beta P ||t^H diag(Gv)||^2 + sigma_I^2))`.
pub fn rho_of_beta(
    scn: &Scenario,
    ch: &ChannelSet,
    reflect_dir: &CVector,
    beam: &CVector,
    beta: f64,
) -> Result<f64, BetaError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(BetaError::BetaOutOfRange(beta));
    }
    let coupling = crate::model::irs_signal_power(ch, reflect_dir, beam);
    let denom = beta * scn.p_max * coupling + scn.sigma2_irs;
    Ok(((1.0 - beta) * scn.p_max / denom).sqrt())
}

/// Channel couplings shared by the coefficient block.
struct Couplings {
    /// `||t^H diag(Gv)||^2`
    amp_in: f64,
    /// `||t^H diag(f^H)||^2`
    noise_out: f64,
    /// `t^H diag(f^H) G v` (cascaded complex gain)
    cascade: C64,
    /// `h^H v` (direct complex gain)
    direct: C64,
}

fn couplings(ch: &ChannelSet, reflect_dir: &CVector, beam: &CVector) -> Couplings {
    let amp_in = crate::model::irs_signal_power(ch, reflect_dir, beam);
    let noise_out = crate::model::irs_noise_coupling(ch, reflect_dir);
    let direct = ch.bs_user.dotc(beam);
    let mut cascade = C64::new(0.0, 0.0);
    if ch.bs_irs.nrows() > 0 {
        let gv = &ch.bs_irs * beam;
        for n in 0..gv.len() {
            cascade += (reflect_dir[n] * ch.irs_user[n]).conjugate() * gv[n];
        }
    }
    Couplings {
        amp_in,
        noise_out,
        cascade,
        direct,
    }
}

/// Computes the eight coefficients of `f(beta)` for a unit IRS direction and
/// unit beam.
pub fn pa_coefficients(
    scn: &Scenario,
    ch: &ChannelSet,
    reflect_dir: &CVector,
    beam: &CVector,
) -> Result<PaCoefficients, BetaError> {
    ch.check_dims(scn)?;
    let p = scn.p_max;
    let (s2i, s2n) = (scn.sigma2_irs, scn.sigma2_user);
    let cp = couplings(ch, reflect_dir, beam);
    let direct_pow = cp.direct.norm_sqr();
    let cascade_pow = cp.cascade.norm_sqr();
    let d = -p * p * cp.amp_in;
    let f = p * s2i;
    Ok(PaCoefficients {
        a: p * p * direct_pow * cp.amp_in - p * p * cascade_pow,
        b: p * p * cascade_pow + p * direct_pow * s2i,
        c: p * (cp.cascade * cp.direct.conjugate()).re,
        d,
        // e = P^2 amp_in - sigma_I^2 P, written as -d - f so the radicand's
        // root at beta = 1 is exact in floating point
        e: -d - f,
        f,
        g: s2n * p * cp.amp_in - s2i * p * cp.noise_out,
        h: s2i * p * cp.noise_out + s2n * s2i,
    })
}

/// Evaluates the closed-form rate expression at one `beta`. Radicands in
/// `[-1e-12, 0)` are clamped to zero; more negative values are an error.
pub fn eval_f_beta(coeffs: &PaCoefficients, beta: f64) -> Result<f64, BetaError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(BetaError::BetaOutOfRange(beta));
    }
    // exact rearrangement of d b^2 + e b + f that vanishes cleanly at the
    // budget boundary: (1-b)(f - d b) + b (d + e + f)
    let mut radicand =
        (1.0 - beta) * (coeffs.f - coeffs.d * beta) + beta * (coeffs.d + coeffs.e + coeffs.f);
    if radicand < 0.0 {
        if radicand < -1e-12 {
            return Err(BetaError::NegativeRadicand(radicand));
        }
        radicand = 0.0;
    }
    let numerator = coeffs.a * beta * beta
        + coeffs.b * beta
        + 2.0 * coeffs.c * beta * radicand.sqrt();
    Ok(numerator / (coeffs.g * beta + coeffs.h))
}

/// Least-squares polynomial fit of degree `q_order` through `(beta, value)`
/// samples via the normal equations.
pub fn fit_polynomial(samples: &[(f64, f64)], q_order: usize) -> Result<Vec<f64>, BetaError> {
    if !(2..=5).contains(&q_order) {
        return Err(BetaError::OrderOutOfRange(q_order));
    }
    let need = 5 * (q_order + 1);
    if samples.len() < need {
        return Err(BetaError::TooFewSamples {
            need,
            order: q_order,
            got: samples.len(),
        });
    }
    let cols = q_order + 1;
    let rows = samples.len();
    // a Vandermonde design needs at least Q+1 distinct abscissae
    let mut distinct: Vec<f64> = samples.iter().map(|(b, _)| *b).collect();
    distinct.sort_by(|x, y| x.partial_cmp(y).unwrap());
    distinct.dedup();
    if distinct.len() < cols {
        return Err(BetaError::RankDeficient);
    }
    let design = DMatrix::<f64>::from_fn(rows, cols, |r, c| samples[r].0.powi(c as i32));
    let target = DVector::<f64>::from_fn(rows, |r, _| samples[r].1);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * target;
    let solved = nalgebra::Cholesky::new(gram.clone())
        .map(|chol| chol.solve(&rhs))
        .ok_or(BetaError::RankDeficient)?;
    let residual = (&gram * &solved - &rhs).norm();
    if residual > 1e-8 * rhs.norm().max(f64::MIN_POSITIVE) {
        return Err(BetaError::RankDeficient);
    }
    Ok(solved.iter().copied().collect())
}

/// Real roots of the fitted polynomial's derivative, mapped into [0,1]:
/// out-of-range roots are replaced by 0, complex roots are discarded.
pub fn stationary_candidates(fitted: &[f64], q_order: usize) -> Vec<f64> {
    debug_assert!(fitted.len() >= q_order + 1);
    // derivative coefficients: k * a_k for k = 1..Q, constant term first
    let mut deriv: Vec<f64> = (1..=q_order).map(|k| k as f64 * fitted[k]).collect();
    while deriv.last().is_some_and(|c| *c == 0.0) {
        deriv.pop();
    }
    let roots: Vec<C64> = match deriv.len() {
        0 | 1 => Vec::new(), // constant (possibly zero) derivative: no roots
        2 => vec![C64::new(-deriv[0] / deriv[1], 0.0)],
        3 => {
            // quadratic a2 x^2 + a1 x + a0, printed closed form
            let (a0, a1, a2) = (deriv[0], deriv[1], deriv[2]);
            let disc = a1 * a1 - 4.0 * a2 * a0;
            if disc < 0.0 {
                Vec::new()
            } else {
                let sq = disc.sqrt();
                vec![
                    C64::new((-a1 + sq) / (2.0 * a2), 0.0),
                    C64::new((-a1 - sq) / (2.0 * a2), 0.0),
                ]
            }
        }
        _ => companion_roots(&deriv),
    };
    roots
        .into_iter()
        .filter(|r| r.im.abs() <= 1e-9 * (1.0 + r.re.abs()))
        .map(|r| {
            let x = r.re;
            if (0.0..=1.0).contains(&x) {
                x
            } else {
                0.0
            }
        })
        .collect()
}

/// Eigenvalues of the companion matrix of a real polynomial (constant term
/// first, nonzero leading coefficient).
fn companion_roots(poly: &[f64]) -> Vec<C64> {
    let degree = poly.len() - 1;
    let lead = poly[degree];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for row in 1..degree {
        companion[(row, row - 1)] = 1.0;
    }
    for row in 0..degree {
        companion[(row, degree - 1)] = -poly[row] / lead;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Argmax of the true `f(beta)` over the candidates plus {0, 1, beta_prev};
/// ties break toward the smallest beta.
pub fn select_beta(coeffs: &PaCoefficients, candidates: &[f64], beta_prev: f64) -> f64 {
    let mut pool: Vec<f64> = vec![0.0, 1.0, beta_prev.clamp(0.0, 1.0)];
    pool.extend(candidates.iter().copied().filter(|b| (0.0..=1.0).contains(b)));
    pool.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut best = 0.0;
    let mut best_val = f64::NEG_INFINITY;
    for &beta in &pool {
        let val = eval_f_beta(coeffs, beta).unwrap_or(f64::NEG_INFINITY);
        if val > best_val {
            best_val = val;
            best = beta;
        }
    }
    best
}

/// Full regression pass: sample `f` uniformly on [0,1], fit, extract
/// candidates, and pick the best beta under the true objective.
pub fn optimize_beta(
    scn: &Scenario,
    ch: &ChannelSet,
    reflect_dir: &CVector,
    beam: &CVector,
    reg: &RegressionConfig,
    beta_prev: f64,
) -> Result<FitResult, BetaError> {
    let coeffs = pa_coefficients(scn, ch, reflect_dir, beam)?;
    let j = reg.j_samples;
    let samples: Vec<(f64, f64)> = (0..j)
        .map(|i| {
            let beta = i as f64 / (j - 1) as f64;
            eval_f_beta(&coeffs, beta).map(|v| (beta, v))
        })
        .collect::<Result<_, _>>()?;
    let fitted = fit_polynomial(&samples, reg.q_order)?;
    let mse = samples
        .iter()
        .map(|(beta, value)| {
            let fit: f64 = fitted
                .iter()
                .enumerate()
                .map(|(k, c)| c * beta.powi(k as i32))
                .sum();
            (fit - value) * (fit - value)
        })
        .sum::<f64>()
        / j as f64;
    let candidates = stationary_candidates(&fitted, reg.q_order);
    let beta_opt = select_beta(&coeffs, &candidates, beta_prev);
    Ok(FitResult {
        coeffs: fitted,
        mse,
        candidates,
        beta_opt,
    })
}

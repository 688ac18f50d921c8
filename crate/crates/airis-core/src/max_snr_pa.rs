//! Max-SNR-PA: alternating optimization of the power-allocation factor, the
//! BS beam, and the IRS reflection vector under the shared power budget.
//!
//! Per outer iteration: the beta block maximizes the closed-form rate
//! expression over regression candidates (previous beta included, so the
//! block never regresses), the beam block takes one SCA step on the
//! linearized quadratic program, and the reflection block runs a Dinkelbach
//! loop whose parametric subproblems are diagonal trust-region solves.
//! Iterates are recorded after the reflection block; a candidate that would
//! lower the rate is rejected so the recorded trace is nondecreasing.

use nalgebra::ComplexField;

use crate::model::{self, ChannelSet, PaState, Scenario};
use crate::pa_beta::{self, RegressionConfig};
use crate::qcqp::{self, HermitianForm, KktReport, SolverError};
use crate::{AlgorithmError, C64, CVector, RVector};

/// Quadratic forms of the reflection subproblem. The signal matrix is rank
/// one and kept as its factor; the noise and power matrices are diagonal.
#[derive(Debug, Clone)]
pub struct ThetaForms {
    /// Rank-one factor `m = diag(f^H) G v`; the signal matrix is `m m^H`.
    pub signal_factor: CVector,
    /// Linear term `t = conj(h^H v) m`.
    pub linear: CVector,
    /// Diagonal of the amplified-noise matrix `sigma_I^2 |f_n|^2`.
    pub noise_diag: RVector,
    /// Diagonal of the power matrix `beta P |(Gv)_n|^2 + sigma_I^2`.
    pub power_diag: RVector,
    /// Direct-link gain `h^H v`, the constant the ratio omits.
    pub direct_gain: C64,
}

impl ThetaForms {
    /// Ratio numerator `theta^H D theta + 2 Re{t^H theta}` (no constant).
    pub fn numerator(&self, theta: &CVector) -> f64 {
        self.signal_factor.dotc(theta).norm_sqr() + 2.0 * self.linear.dotc(theta).re
    }

    /// Ratio denominator `theta^H E theta + sigma_n^2`.
    pub fn denominator(&self, theta: &CVector, sigma2_user: f64) -> f64 {
        let quad: f64 = theta
            .iter()
            .zip(self.noise_diag.iter())
            .map(|(t, e)| e * t.norm_sqr())
            .sum();
        quad + sigma2_user
    }

    /// IRS power `theta^H F theta`.
    pub fn irs_power(&self, theta: &CVector) -> f64 {
        theta
            .iter()
            .zip(self.power_diag.iter())
            .map(|(t, f)| f * t.norm_sqr())
            .sum()
    }
}

/// Builds the reflection-subproblem forms for a fixed `(beta, beam)`.
pub fn build_theta_forms(
    scn: &Scenario,
    ch: &ChannelSet,
    beta: f64,
    beam: &CVector,
) -> Result<ThetaForms, AlgorithmError> {
    ch.check_dims(scn)?;
    let n = scn.n_elements;
    let gv = if n > 0 {
        &ch.bs_irs * beam
    } else {
        CVector::zeros(0)
    };
    let signal_factor = CVector::from_fn(n, |i, _| ch.irs_user[i].conjugate() * gv[i]);
    let direct_gain = ch.bs_user.dotc(beam);
    let linear = signal_factor.map(|c| c * direct_gain.conjugate());
    let noise_diag = RVector::from_fn(n, |i, _| scn.sigma2_irs * ch.irs_user[i].norm_sqr());
    let power_diag =
        RVector::from_fn(n, |i, _| beta * scn.p_max * gv[i].norm_sqr() + scn.sigma2_irs);
    Ok(ThetaForms {
        signal_factor,
        linear,
        noise_diag,
        power_diag,
        direct_gain,
    })
}

/// One Dinkelbach iterate: the ratio value and the solution that produced it.
#[derive(Debug, Clone)]
pub struct DinkelbachStep {
    pub eta: f64,
    /// Parametric objective value at the new point (nonnegative, shrinking).
    pub parametric_value: f64,
    pub iteration: usize,
}

/// Result of the reflection block.
#[derive(Debug, Clone)]
pub struct DinkelbachOutcome {
    pub theta: CVector,
    pub history: Vec<DinkelbachStep>,
    pub last_report: Option<KktReport>,
}

/// Maximizes the reflection ratio over the IRS power ball by Dinkelbach's
/// transform with an SCA-linearized numerator; each parametric subproblem is
/// a diagonal trust-region solve.
pub fn dinkelbach_theta(
    scn: &Scenario,
    ch: &ChannelSet,
    beta: f64,
    beam: &CVector,
    theta_init: &CVector,
    xi: f64,
    max_iters: usize,
) -> Result<DinkelbachOutcome, AlgorithmError> {
    let forms = build_theta_forms(scn, ch, beta, beam)?;
    let budget = (1.0 - beta) * scn.p_max;
    dinkelbach_theta_forms(&forms, scn.sigma2_user, budget, theta_init, xi, max_iters)
}

/// Core Dinkelbach loop on prebuilt forms (exposed for synthetic-forms tests).
pub fn dinkelbach_theta_forms(
    forms: &ThetaForms,
    sigma2_user: f64,
    budget: f64,
    theta_init: &CVector,
    xi: f64,
    max_iters: usize,
) -> Result<DinkelbachOutcome, AlgorithmError> {
    let n = theta_init.len();
    if n == 0 {
        return Ok(DinkelbachOutcome {
            theta: CVector::zeros(0),
            history: Vec::new(),
            last_report: None,
        });
    }
    let used = forms.irs_power(theta_init);
    if used > budget * (1.0 + qcqp::TOLERANCES.feasibility) {
        return Err(AlgorithmError::InfeasibleInit(format!(
            "reflection start uses {used} W of a {budget} W budget"
        )));
    }
    let a_base = HermitianForm::Diagonal(forms.noise_diag.clone());
    let b_form = HermitianForm::Diagonal(forms.power_diag.clone());

    let mut theta = theta_init.clone();
    let mut history = Vec::new();
    let mut last_report = None;
    for iteration in 1..=max_iters {
        let eta = forms.numerator(&theta) / forms.denominator(&theta, sigma2_user);
        // linearized subproblem: q = D theta0 + t, A = eta E, B = F
        let rank1 = forms.signal_factor.dotc(&theta);
        let q = CVector::from_fn(n, |i, _| {
            forms.signal_factor[i] * rank1 + forms.linear[i]
        });
        let a_form = match &a_base {
            HermitianForm::Diagonal(d) => HermitianForm::Diagonal(d.map(|e| eta * e)),
            _ => unreachable!(),
        };
        let (next, report) = if q.norm() == 0.0 {
            (CVector::zeros(n), None)
        } else {
            let (x, r) = qcqp::solve_trust_region(&q, &a_form, &b_form, budget)?;
            (x, Some(r))
        };
        theta = next;
        last_report = report;
        let parametric_value =
            forms.numerator(&theta) - eta * forms.denominator(&theta, sigma2_user);
        if !parametric_value.is_finite() {
            return Err(AlgorithmError::NonFinite(iteration));
        }
        history.push(DinkelbachStep {
            eta,
            parametric_value,
            iteration,
        });
        if parametric_value <= xi {
            break;
        }
    }
    Ok(DinkelbachOutcome {
        theta,
        history,
        last_report,
    })
}

/// Outcome of one SCA beam step.
#[derive(Debug, Clone)]
pub struct BeamUpdate {
    pub beam: CVector,
    /// True when the step was skipped (exhausted budget or infeasible
    /// linearization) and the previous beam returned unchanged.
    pub skipped: bool,
    pub report: Option<KktReport>,
}

/// One SCA step of the beam subproblem at the current reflection vector;
/// the solution is normalized back to the unit sphere.
pub fn update_beam(
    scn: &Scenario,
    ch: &ChannelSet,
    beta: f64,
    theta: &CVector,
    beam_prev: &CVector,
) -> Result<BeamUpdate, AlgorithmError> {
    ch.check_dims(scn)?;
    let m = scn.m_antennas;
    let keep = |report: Option<KktReport>| BeamUpdate {
        beam: beam_prev.clone(),
        skipped: true,
        report,
    };
    if beta <= 0.0 {
        return Ok(keep(None));
    }
    let p_prime =
        ((1.0 - beta) * scn.p_max - scn.sigma2_irs * theta.norm_squared()) / (beta * scn.p_max);
    if p_prime <= 0.0 {
        return Ok(keep(None));
    }
    // r = G^H Theta^H f + h, the combined channel seen by the beam
    let combined = combined_channel(ch, theta);
    let b_vec = combined.map(|c| c * combined.dotc(beam_prev));
    // C = G^H diag(|theta|^2) G
    let mut c_mat = crate::CMatrix::zeros(m, m);
    for i in 0..scn.n_elements {
        let w = theta[i].norm_sqr();
        if w == 0.0 {
            continue;
        }
        let row = ch.bs_irs.row(i);
        for a in 0..m {
            for b in 0..m {
                c_mat[(a, b)] += row[a].conjugate() * row[b] * C64::from(w);
            }
        }
    }
    match qcqp::solve_two_constraint(&b_vec, &c_mat, beam_prev, p_prime) {
        Ok((solution, report)) => {
            let norm = solution.norm();
            if norm == 0.0 || report.degenerate {
                return Ok(keep(Some(report)));
            }
            Ok(BeamUpdate {
                beam: solution.map(|c| c / C64::from(norm)),
                skipped: false,
                report: Some(report),
            })
        }
        Err(SolverError::Infeasible(_)) | Err(SolverError::BisectionCeiling { .. }) => {
            Ok(keep(None))
        }
        Err(e) => Err(e.into()),
    }
}

pub use crate::model::combined_channel;

/// Per-iteration record of the Max-SNR-PA run.
#[derive(Debug, Clone)]
pub struct SnrPaIterate {
    pub iteration: usize,
    pub beta: f64,
    pub snr: f64,
    pub ar_bits: f64,
    pub bs_power: f64,
    pub irs_power: f64,
    pub dinkelbach_iters: usize,
    pub beam_report: Option<KktReport>,
    pub theta_report: Option<KktReport>,
}

/// Trace of one run.
#[derive(Debug, Clone)]
pub struct SnrPaTrace {
    pub iterates: Vec<SnrPaIterate>,
    pub converged: bool,
}

/// Options of the Max-SNR-PA run.
#[derive(Debug, Clone)]
pub struct SnrPaOptions {
    /// Outer stopping threshold on |delta AR| in bits.
    pub eps_bits: f64,
    /// Dinkelbach parametric-objective tolerance.
    pub xi: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Regression design for the beta block.
    pub regression: RegressionConfig,
    /// Pin beta at this value and skip the beta block (fixed-split runs).
    pub fixed_beta: Option<f64>,
}

impl Default for SnrPaOptions {
    fn default() -> Self {
        SnrPaOptions {
            eps_bits: 1e-3,
            xi: 1e-6,
            max_outer: 100,
            max_inner: 50,
            regression: RegressionConfig::new(3, 201).expect("valid default regression"),
            fixed_beta: None,
        }
    }
}

/// Standard feasible start: MRT beam toward the direct link, reflections
/// phase-aligned so each cascaded term adds coherently with the direct path,
/// beta = 1/2, and the IRS gain set from the budget equality.
pub fn initial_state(scn: &Scenario, ch: &ChannelSet) -> Result<PaState, AlgorithmError> {
    let beam = mrt_direct(ch, scn.m_antennas);
    let dir = aligned_direction(ch, &beam);
    let beta = match scn.n_elements {
        0 => 1.0,
        _ => 0.5,
    };
    let rho = pa_beta::rho_of_beta(scn, ch, &dir, &beam, beta)?;
    let reflect = dir.map(|c| c * C64::from(rho));
    Ok(PaState::new(beta, beam, reflect)?)
}

fn mrt_direct(ch: &ChannelSet, m: usize) -> CVector {
    let norm = ch.bs_user.norm();
    if norm == 0.0 {
        let mut e = CVector::zeros(m);
        if m > 0 {
            e[0] = C64::from(1.0);
        }
        e
    } else {
        ch.bs_user.map(|c| c / C64::from(norm))
    }
}

/// Unit direction whose reflected terms `conj(theta_n f_n) (Gv)_n` all share
/// the direct path's phase.
pub fn aligned_direction(ch: &ChannelSet, beam: &CVector) -> CVector {
    let n = ch.bs_irs.nrows();
    if n == 0 {
        return CVector::zeros(0);
    }
    let gv = &ch.bs_irs * beam;
    let direct = ch.bs_user.dotc(beam);
    let direct_phase = if direct.norm_sqr() > 0.0 { direct.arg() } else { 0.0 };
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |i, _| {
        let cascade = ch.irs_user[i].conjugate() * gv[i];
        let phase = if cascade.norm_sqr() > 0.0 { cascade.arg() } else { 0.0 };
        C64::from_polar(scale, phase - direct_phase)
    })
}

fn state_rate(scn: &Scenario, ch: &ChannelSet, st: &PaState) -> Result<(f64, f64), AlgorithmError> {
    let snr = model::snr_pa(scn, ch, st)?;
    Ok((snr, model::achievable_rate(snr)?))
}

/// Runs Algorithm 2: alternating beta, beam, and reflection blocks until the
/// rate stalls. Every recorded iterate is feasible and the recorded rate is
/// nondecreasing; block candidates that would regress are rejected.
pub fn run_max_snr_pa(
    scn: &Scenario,
    ch: &ChannelSet,
    init: PaState,
    opts: &SnrPaOptions,
) -> Result<(PaState, SnrPaTrace), AlgorithmError> {
    scn.validate()
        .map_err(|e| AlgorithmError::InfeasibleInit(e.to_string()))?;
    let residual = model::budget_residual_pa(scn, ch, &init)?;
    if residual < -qcqp::TOLERANCES.feasibility * scn.p_max {
        return Err(AlgorithmError::InfeasibleInit(format!(
            "budget residual {residual} W"
        )));
    }
    let mut state = init;
    let (snr0, mut ar) = state_rate(scn, ch, &state)?;
    if !ar.is_finite() {
        return Err(AlgorithmError::NonFinite(0));
    }
    let mut trace = SnrPaTrace {
        iterates: vec![SnrPaIterate {
            iteration: 0,
            beta: state.beta,
            snr: snr0,
            ar_bits: ar,
            bs_power: state.beta * scn.p_max,
            irs_power: model::irs_power_pa(scn, ch, &state)?,
            dinkelbach_iters: 0,
            beam_report: None,
            theta_report: None,
        }],
        converged: false,
    };

    for iteration in 1..=opts.max_outer {
        let prev_state = state.clone();

        // beta block: regression argmax over the budget-tight family; reject
        // a candidate that scores below the current (possibly interior) rate.
        if opts.fixed_beta.is_none() && scn.n_elements > 0 {
            let fit = pa_beta::optimize_beta(
                scn,
                ch,
                &state.reflect_dir,
                &state.beam,
                &opts.regression,
                state.beta,
            )?;
            let coeffs = pa_beta::pa_coefficients(scn, ch, &state.reflect_dir, &state.beam)?;
            let candidate_snr = pa_beta::eval_f_beta(&coeffs, fit.beta_opt)?;
            let (current_snr, _) = state_rate(scn, ch, &state)?;
            if candidate_snr >= current_snr {
                let rho =
                    pa_beta::rho_of_beta(scn, ch, &state.reflect_dir, &state.beam, fit.beta_opt)?;
                let reflect = state.reflect_dir.map(|c| c * C64::from(rho));
                state = PaState::new(fit.beta_opt, state.beam.clone(), reflect)?;
            }
        }

        // beam block (one SCA step), then reflection block with the budget
        // re-tightened for the new beam; reject the pair if the rate drops.
        let (base_snr, base_ar) = state_rate(scn, ch, &state)?;
        let beam_step = update_beam(scn, ch, state.beta, &state.reflect, &state.beam)?;
        let candidate_beam = beam_step.beam.clone();
        let theta_start = if scn.n_elements > 0 {
            let rho = pa_beta::rho_of_beta(
                scn,
                ch,
                &state.reflect_dir,
                &candidate_beam,
                state.beta,
            )?;
            state.reflect_dir.map(|c| c * C64::from(rho))
        } else {
            CVector::zeros(0)
        };
        let dink = dinkelbach_theta(
            scn,
            ch,
            state.beta,
            &candidate_beam,
            &theta_start,
            opts.xi,
            opts.max_inner,
        )?;
        let candidate =
            PaState::new(state.beta, candidate_beam.clone(), dink.theta.clone())?;
        let (cand_snr, cand_ar) = state_rate(scn, ch, &candidate)?;
        // post-beam, pre-reflection state: new beam with the budget re-tightened
        let start_state = PaState::new(state.beta, candidate_beam, theta_start)?;
        let (start_snr, start_ar) = state_rate(scn, ch, &start_state)?;
        let (next_state, next_snr, next_ar) = if cand_snr >= base_snr.max(start_snr) {
            (candidate, cand_snr, cand_ar)
        } else if start_snr >= base_snr {
            (start_state, start_snr, start_ar)
        } else {
            (state.clone(), base_snr, base_ar)
        };
        state = next_state;
        if !next_ar.is_finite() {
            return Err(AlgorithmError::NonFinite(iteration));
        }

        trace.iterates.push(SnrPaIterate {
            iteration,
            beta: state.beta,
            snr: next_snr,
            ar_bits: next_ar,
            bs_power: state.beta * scn.p_max,
            irs_power: model::irs_power_pa(scn, ch, &state)?,
            dinkelbach_iters: dink.history.len(),
            beam_report: beam_step.report.clone(),
            theta_report: dink.last_report.clone(),
        });

        let delta = (next_ar - ar).abs();
        ar = next_ar;
        if delta <= opts.eps_bits {
            trace.converged = true;
            break;
        }
        let _ = prev_state;
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel;
    use crate::model::test_support::{paper_scenario, random_channel, random_unit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn theta_forms_reproduce_model_snr() {
        let scn = paper_scenario(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let ch = random_channel(&mut rng, &scn);
            let beam = random_unit(&mut rng, 2);
            let theta = crate::model::test_support::random_cvector(&mut rng, 8);
            let beta = 0.6;
            let forms = build_theta_forms(&scn, &ch, beta, &beam).unwrap();
            // quadratic-form route, accounting for the constant the ratio omits
            let numerator = forms.numerator(&theta) + forms.direct_gain.norm_sqr();
            let snr_quad =
                beta * scn.p_max * numerator / forms.denominator(&theta, scn.sigma2_user);
            let st = PaState::new(beta, beam.clone(), theta.clone()).unwrap();
            let snr_direct = model::snr_pa(&scn, &ch, &st).unwrap();
            assert!(rel_err(snr_quad, snr_direct) < 1e-9);
            // power route
            let p_quad = beta * scn.p_max * crate::model::irs_signal_power(&ch, &theta, &beam)
                + scn.sigma2_irs * theta.norm_squared();
            assert!(rel_err(forms.irs_power(&theta), p_quad) < 1e-12);
        }
    }

    #[test]
    fn theta_forms_trivial_cases() {
        let scn = paper_scenario(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut ch = random_channel(&mut rng, &scn);
        let beam = random_unit(&mut rng, 2);
        ch.irs_user = CVector::zeros(6);
        let forms = build_theta_forms(&scn, &ch, 0.5, &beam).unwrap();
        assert_eq!(forms.signal_factor.norm(), 0.0);
        assert_eq!(forms.linear.norm(), 0.0);
        assert_eq!(forms.noise_diag.norm(), 0.0);
        let ch = random_channel(&mut rng, &scn);
        let forms = build_theta_forms(&scn, &ch, 0.0, &beam).unwrap();
        assert!(forms
            .power_diag
            .iter()
            .all(|f| (f - scn.sigma2_irs).abs() < 1e-25));
    }

    #[test]
    fn dinkelbach_zero_forms_returns_zero() {
        let scn = paper_scenario(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut ch = random_channel(&mut rng, &scn);
        ch.irs_user = CVector::zeros(6);
        let beam = random_unit(&mut rng, 2);
        let theta0 = CVector::zeros(6);
        let out = dinkelbach_theta(&scn, &ch, 0.5, &beam, &theta0, 1e-6, 50).unwrap();
        assert_eq!(out.theta.norm(), 0.0);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn dinkelbach_zero_noise_hits_power_boundary() {
        // synthetic forms with no amplified-noise coupling: the ratio is
        // linear over a constant, so the optimum saturates the power ball
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let forms = ThetaForms {
            signal_factor: crate::model::test_support::random_cvector(&mut rng, n),
            linear: crate::model::test_support::random_cvector(&mut rng, n),
            noise_diag: RVector::zeros(n),
            power_diag: RVector::from_fn(n, |_, _| 0.5 + 0.1 * rand::Rng::gen::<f64>(&mut rng)),
            direct_gain: C64::from(0.0),
        };
        let budget = 2.0;
        let out =
            dinkelbach_theta_forms(&forms, 1e-13, budget, &CVector::zeros(n), 1e-9, 60).unwrap();
        let used = forms.irs_power(&out.theta);
        assert!(rel_err(used, budget) < 1e-8, "used {used} of {budget}");
    }

    #[test]
    fn dinkelbach_ratio_ascends_and_eta_monotone() {
        let scn = paper_scenario(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for seed in 0..10u64 {
            let ch = channel::generate(&scn, seed);
            let beam = random_unit(&mut rng, 2);
            let dir = aligned_direction(&ch, &beam);
            let beta = 0.5;
            let rho = pa_beta::rho_of_beta(&scn, &ch, &dir, &beam, beta).unwrap();
            let theta0 = dir.map(|c| c * C64::from(rho));
            let forms = build_theta_forms(&scn, &ch, beta, &beam).unwrap();
            let start_ratio =
                forms.numerator(&theta0) / forms.denominator(&theta0, scn.sigma2_user);
            let out = dinkelbach_theta(&scn, &ch, beta, &beam, &theta0, 1e-9, 80).unwrap();
            let final_ratio = forms.numerator(&out.theta)
                / forms.denominator(&out.theta, scn.sigma2_user);
            assert!(final_ratio >= start_ratio * (1.0 - 1e-9));
            for pair in out.history.windows(2) {
                assert!(pair[1].eta >= pair[0].eta * (1.0 - 1e-12) - 1e-18);
            }
            let last = out.history.last().unwrap();
            assert!(last.parametric_value <= 1e-9 || out.history.len() == 80);
        }
    }

    #[test]
    fn beam_update_is_mrt_without_reflections() {
        let scn = paper_scenario(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let ch = random_channel(&mut rng, &scn);
        let mrt = ch.bs_user.map(|c| c / C64::from(ch.bs_user.norm()));
        let step = update_beam(&scn, &ch, 0.5, &CVector::zeros(4), &mrt).unwrap();
        assert!(!step.skipped);
        assert!((&step.beam - &mrt).norm() < 1e-9);
        // from a different start the aligned objective only improves
        let other = random_unit(&mut rng, 3);
        let step = update_beam(&scn, &ch, 0.5, &CVector::zeros(4), &other).unwrap();
        let r = combined_channel(&ch, &CVector::zeros(4));
        assert!(r.dotc(&step.beam).norm_sqr() >= r.dotc(&other).norm_sqr() - 1e-12);
    }

    #[test]
    fn beam_update_never_lowers_linearized_objective() {
        let scn = paper_scenario(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for seed in 0..10u64 {
            let ch = channel::generate(&scn, seed);
            let beam = random_unit(&mut rng, 2);
            let dir = aligned_direction(&ch, &beam);
            let rho = pa_beta::rho_of_beta(&scn, &ch, &dir, &beam, 0.5).unwrap();
            let theta = dir.map(|c| c * C64::from(rho));
            let step = update_beam(&scn, &ch, 0.5, &theta, &beam).unwrap();
            let r = combined_channel(&ch, &theta);
            assert!(
                r.dotc(&step.beam).norm_sqr() >= r.dotc(&beam).norm_sqr() * (1.0 - 1e-8) - 1e-12,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn beam_update_skips_when_budget_exhausted() {
        let scn = paper_scenario(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let ch = random_channel(&mut rng, &scn);
        let beam = random_unit(&mut rng, 2);
        // theta so large the noise term alone exceeds the IRS budget
        let huge = (2.0 * scn.p_max / scn.sigma2_irs).sqrt();
        let theta = CVector::from_element(4, C64::from(huge));
        let step = update_beam(&scn, &ch, 0.5, &theta, &beam).unwrap();
        assert!(step.skipped);
        assert_eq!(step.beam, beam);
    }

    #[test]
    fn degenerate_no_irs_config_converges_to_mrt() {
        let scn = paper_scenario(2, 0);
        let ch = channel::generate(&scn, 5);
        let init = initial_state(&scn, &ch).unwrap();
        let (state, trace) = run_max_snr_pa(&scn, &ch, init, &SnrPaOptions::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.iterates.len() <= 3); // init + at most 2 iterations
        assert!((state.beta - 1.0).abs() < 1e-12);
        let expect =
            (1.0 + scn.p_max * ch.bs_user.norm_squared() / scn.sigma2_user).log2();
        let got = trace.iterates.last().unwrap().ar_bits;
        assert!(rel_err(got, expect) < 1e-9);
    }

    #[test]
    fn run_is_monotone_feasible_and_converges() {
        let scn = paper_scenario(2, 16);
        let opts = SnrPaOptions::default();
        for seed in 0..8u64 {
            let ch = channel::generate(&scn, seed);
            let init = initial_state(&scn, &ch).unwrap();
            let (state, trace) = run_max_snr_pa(&scn, &ch, init, &opts).unwrap();
            assert!(trace.converged, "seed {seed}");
            for pair in trace.iterates.windows(2) {
                assert!(
                    pair[1].ar_bits >= pair[0].ar_bits - 1e-6,
                    "seed {seed}: {} -> {}",
                    pair[0].ar_bits,
                    pair[1].ar_bits
                );
            }
            for it in &trace.iterates[1..] {
                assert!(
                    it.irs_power <= (1.0 - it.beta) * scn.p_max * (1.0 + 1e-9),
                    "seed {seed} iteration {} infeasible",
                    it.iteration
                );
            }
            let residual = model::budget_residual_pa(&scn, &ch, &state).unwrap();
            assert!(residual >= -1e-9 * scn.p_max);
        }
    }
}

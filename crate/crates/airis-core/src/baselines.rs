//! Benchmark schemes: fixed power splits, passive IRS, random phase shifts,
//! and the no-IRS closed form.

use nalgebra::ComplexField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::max_snr_pa::{self, SnrPaOptions, SnrPaTrace};
use crate::model::{self, ChannelSet, PaState, Scenario};
use crate::pa_beta::{self, RegressionConfig};
use crate::{AlgorithmError, C64, CVector};

/// Full Max-SNR-PA machinery with the power split pinned: only the beam and
/// reflection blocks iterate.
pub fn run_fixed_beta(
    scn: &Scenario,
    ch: &ChannelSet,
    beta_fixed: f64,
    opts: &SnrPaOptions,
) -> Result<(PaState, SnrPaTrace), AlgorithmError> {
    if !(0.0 < beta_fixed && beta_fixed < 1.0) {
        return Err(AlgorithmError::InfeasibleInit(format!(
            "fixed beta must lie in (0,1), got {beta_fixed}"
        )));
    }
    let mut opts = opts.clone();
    opts.fixed_beta = Some(beta_fixed);
    let base = max_snr_pa::initial_state(scn, ch)?;
    let init = if scn.n_elements > 0 {
        let rho = pa_beta::rho_of_beta(scn, ch, &base.reflect_dir, &base.beam, beta_fixed)?;
        let reflect = base.reflect_dir.map(|c| c * C64::from(rho));
        PaState::new(beta_fixed, base.beam, reflect)?
    } else {
        PaState::new(beta_fixed, base.beam, CVector::zeros(0))?
    };
    max_snr_pa::run_max_snr_pa(scn, ch, init, &opts)
}

/// Passive-IRS result: unit-magnitude reflections, no amplifier draw and no
/// amplifier noise, full budget at the BS.
#[derive(Debug, Clone)]
pub struct PassiveOutcome {
    pub beam: CVector,
    pub reflect: CVector,
    pub snr: f64,
    pub ar_bits: f64,
    /// Coherent-gain magnitude after each alignment round.
    pub round_gains: Vec<f64>,
}

/// Alternates an MRT beam against the combined channel with per-element
/// phase alignment of the reflections. Every element keeps magnitude one and
/// the IRS consumes no power.
pub fn run_passive_irs(
    scn: &Scenario,
    ch: &ChannelSet,
    rounds: usize,
) -> Result<PassiveOutcome, AlgorithmError> {
    ch.check_dims(scn)?;
    let n = scn.n_elements;
    let m = scn.m_antennas;
    let mut beam = mrt(&ch.bs_user, m);
    // start from reflections aligned for the direct-link MRT beam
    let mut reflect = aligned_unit_magnitude(ch, &beam);
    let mut round_gains = Vec::with_capacity(rounds);
    for _ in 0..rounds.max(1) {
        let combined = model::combined_channel(ch, &reflect);
        beam = mrt(&combined, m);
        reflect = aligned_unit_magnitude(ch, &beam);
        let gain = model::received_gain(ch, &reflect, &beam).norm();
        round_gains.push(gain);
    }
    let amplitude = model::received_gain(ch, &reflect, &beam);
    // no amplifiers: the receiver sees only its own noise
    let snr = scn.p_max * amplitude.norm_sqr() / scn.sigma2_user;
    let _ = n;
    Ok(PassiveOutcome {
        beam,
        reflect,
        snr,
        ar_bits: model::achievable_rate(snr)?,
    round_gains,
    })
}

fn mrt(channel_vec: &CVector, m: usize) -> CVector {
    let norm = channel_vec.norm();
    if norm == 0.0 {
        let mut e = CVector::zeros(m);
        if m > 0 {
            e[0] = C64::from(1.0);
        }
        e
    } else {
        channel_vec.map(|c| c / C64::from(norm))
    }
}

/// Unit-magnitude reflections phasing every cascaded term onto the direct
/// path. The physical element phase is `arg(h^H v) - arg(conj(f_n) (Gv)_n)`;
/// stored entries are its conjugate because the model applies `diag(theta^H)`.
fn aligned_unit_magnitude(ch: &ChannelSet, beam: &CVector) -> CVector {
    let n = ch.bs_irs.nrows();
    if n == 0 {
        return CVector::zeros(0);
    }
    let gv = &ch.bs_irs * beam;
    let direct = ch.bs_user.dotc(beam);
    let direct_phase = if direct.norm_sqr() > 0.0 { direct.arg() } else { 0.0 };
    CVector::from_fn(n, |i, _| {
        let cascade = ch.irs_user[i].conjugate() * gv[i];
        let phase = if cascade.norm_sqr() > 0.0 { cascade.arg() } else { 0.0 };
        C64::from_polar(1.0, phase - direct_phase)
    })
}

/// Random-phase benchmark: active IRS with seeded uniform phases, the power
/// split still optimized by regression, the beam MRT to the resulting
/// combined channel.
pub fn run_random_phase(
    scn: &Scenario,
    ch: &ChannelSet,
    seed: u64,
    regression: &RegressionConfig,
) -> Result<(PaState, f64), AlgorithmError> {
    ch.check_dims(scn)?;
    let n = scn.n_elements;
    let m = scn.m_antennas;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if n > 0 { 1.0 / (n as f64).sqrt() } else { 0.0 };
    let dir = CVector::from_fn(n, |_, _| {
        C64::from_polar(scale, rng.gen::<f64>() * 2.0 * std::f64::consts::PI)
    });
    let beam0 = mrt(&ch.bs_user, m);
    if n == 0 {
        let st = PaState::new(1.0, beam0, CVector::zeros(0))?;
        let ar = model::achievable_rate(model::snr_pa(scn, ch, &st)?)?;
        return Ok((st, ar));
    }
    let fit = pa_beta::optimize_beta(scn, ch, &dir, &beam0, regression, 0.5)?;
    let beta = fit.beta_opt;
    let rho = pa_beta::rho_of_beta(scn, ch, &dir, &beam0, beta)?;
    let reflect = dir.map(|c| c * C64::from(rho));
    // beam toward the combined channel, then re-tighten the budget
    let beam = mrt(&model::combined_channel(ch, &reflect), m);
    let rho = pa_beta::rho_of_beta(scn, ch, &dir, &beam, beta)?;
    let state = PaState::new(beta, beam, dir.map(|c| c * C64::from(rho)))?;
    let ar = model::achievable_rate(model::snr_pa(scn, ch, &state)?)?;
    Ok((state, ar))
}

/// No-IRS closed form: MRT beam, full budget, direct link only.
pub fn run_no_irs(scn: &Scenario, ch: &ChannelSet) -> Result<(PaState, f64), AlgorithmError> {
    ch.check_dims(scn)?;
    let beam = mrt(&ch.bs_user, scn.m_antennas);
    let state = PaState::new(1.0, beam, CVector::zeros(scn.n_elements))?;
    let snr = scn.p_max * ch.bs_user.norm_squared() / scn.sigma2_user;
    Ok((state, model::achievable_rate(snr)?))
}

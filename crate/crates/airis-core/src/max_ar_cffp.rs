//! Max-AR-CFFP: closed-form fractional programming for the model without a
//! power-allocation factor.
//!
//! Auxiliary variables turn the rate into a surrogate that every block update
//! maximizes exactly: `mu` (quadratic transform) and `gamma` (Lagrangian dual
//! transform) have closed forms, the BS beam solves a linear-over-ellipsoid
//! program, and the reflection vector a diagonal trust-region program.
//!
//! Two variants share the machinery. `PaperFaithful` uses the printed `mu`
//! denominator (amplified noise only); its surrogate grows without bound in
//! `gamma` whenever the SNR exceeds one, so `gamma` is capped to keep floats
//! finite and only surrogate monotonicity is certified. `StandardFp` uses the
//! canonical quadratic-transform denominator (signal plus noise); its
//! `(mu, gamma)` pair contracts to a joint fixed point where the surrogate
//! equals `ln(1 + SNR)`, which makes the true rate nondecreasing.

use nalgebra::ComplexField;

use crate::model::{self, ChannelSet, CffpState, Scenario};
use crate::qcqp::{self, HermitianForm, KktReport};
use crate::{AlgorithmError, C64, CMatrix, CVector, RVector};

/// Which surrogate the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CffpVariant {
    /// Printed updates; surrogate-monotone only.
    PaperFaithful,
    /// Canonical quadratic-transform denominator; true-rate monotone.
    StandardFp,
}

impl CffpVariant {
    pub fn label(&self) -> &'static str {
        match self {
            CffpVariant::PaperFaithful => "paper_faithful",
            CffpVariant::StandardFp => "standard_fp",
        }
    }
}

/// Keeps the PaperFaithful gamma recursion finite; its printed updates grow
/// geometrically whenever the SNR exceeds one.
const GAMMA_CAP: f64 = 1e100;

/// Amplified-noise-plus-receiver-noise denominator.
fn noise_power(scn: &Scenario, ch: &ChannelSet, st: &CffpState) -> f64 {
    scn.sigma2_irs * model::irs_noise_coupling(ch, &st.reflect) + scn.sigma2_user
}

/// Closed-form quadratic-transform update. PaperFaithful divides by the noise
/// power alone; StandardFp by signal plus noise. The result is phase-aligned
/// with the received amplitude so the surrogate is stationary in `mu`.
pub fn update_mu(scn: &Scenario, ch: &ChannelSet, st: &CffpState, variant: CffpVariant) -> C64 {
    let amplitude = model::received_gain(ch, &st.reflect, &st.beam);
    let noise = noise_power(scn, ch, st);
    let denom = match variant {
        CffpVariant::PaperFaithful => noise,
        CffpVariant::StandardFp => amplitude.norm_sqr() + noise,
    };
    amplitude * C64::from((1.0 + st.gamma).sqrt() / denom)
}

/// Closed-form dual-transform update from `varpi = Re{conj(mu) c}`; the
/// stationary point of `ln(1+g) - g + 2 sqrt(1+g) varpi`, floored at zero.
pub fn update_gamma(varpi: f64) -> f64 {
    if varpi <= 0.0 {
        return 0.0;
    }
    ((varpi * varpi + varpi * (varpi * varpi + 4.0).sqrt()) / 2.0).min(GAMMA_CAP)
}

/// `Re{conj(mu) c}` for the current state.
pub fn varpi(ch: &ChannelSet, st: &CffpState) -> f64 {
    (st.mu.conjugate() * model::received_gain(ch, &st.reflect, &st.beam)).re
}

/// Surrogate value in the natural-log domain.
pub fn surrogate_value(
    scn: &Scenario,
    ch: &ChannelSet,
    st: &CffpState,
    variant: CffpVariant,
) -> f64 {
    let amplitude = model::received_gain(ch, &st.reflect, &st.beam);
    let noise = noise_power(scn, ch, st);
    let quad_term = match variant {
        CffpVariant::PaperFaithful => noise,
        CffpVariant::StandardFp => amplitude.norm_sqr() + noise,
    };
    (1.0 + st.gamma).ln() - st.gamma - st.mu.norm_sqr() * quad_term
        + 2.0 * (1.0 + st.gamma).sqrt() * (st.mu.conjugate() * amplitude).re
}

/// Double-double helpers for the tightness measurement: at the `(mu, gamma)`
/// fixed point the three order-SNR surrogate terms cancel analytically, so a
/// plain f64 sum would report its own rounding (about eps times the SNR)
/// instead of the actual identity error.
mod compensated {
    #[derive(Clone, Copy)]
    pub struct Dd {
        hi: f64,
        lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let hi = a + b;
        let v = hi - a;
        let lo = (a - (hi - v)) + (b - v);
        Dd { hi, lo }
    }

    fn two_prod(a: f64, b: f64) -> Dd {
        let hi = a * b;
        let lo = a.mul_add(b, -hi);
        Dd { hi, lo }
    }

    impl Dd {
        pub fn from(x: f64) -> Dd {
            Dd { hi: x, lo: 0.0 }
        }

        pub fn add(self, other: Dd) -> Dd {
            let s = two_sum(self.hi, other.hi);
            let lo = s.lo + self.lo + other.lo;
            let hi = s.hi + lo;
            Dd {
                hi,
                lo: lo - (hi - s.hi),
            }
        }

        pub fn mul(self, other: Dd) -> Dd {
            let p = two_prod(self.hi, other.hi);
            let lo = p.lo + self.hi * other.lo + self.lo * other.hi;
            let hi = p.hi + lo;
            Dd {
                hi,
                lo: lo - (hi - p.hi),
            }
        }

        pub fn neg(self) -> Dd {
            Dd {
                hi: -self.hi,
                lo: -self.lo,
            }
        }

        /// Square root with one Newton refinement in double-double.
        pub fn sqrt(self) -> Dd {
            let seed = self.hi.sqrt();
            if !(seed > 0.0) {
                return Dd::from(0.0);
            }
            let s = Dd::from(seed);
            // s + (x - s^2) / (2 seed)
            let correction = self.add(s.mul(s).neg()).mul(Dd::from(0.5 / seed));
            s.add(correction)
        }

        pub fn value(self) -> f64 {
            self.hi + self.lo
        }
    }
}

/// `|AR1' - ln(1 + SNR)|` evaluated so that the measurement error stays far
/// below the identity's own error. With `gamma` equal to the f64 SNR the log
/// terms cancel exactly and the gap reduces to
/// `2 sqrt(1+gamma) Re{conj(mu) c} - |mu|^2 (|c|^2 + noise) - gamma`.
fn standard_fp_tightness_gap(scn: &Scenario, ch: &ChannelSet, st: &CffpState) -> f64 {
    use compensated::Dd;
    let amplitude = model::received_gain(ch, &st.reflect, &st.beam);
    let noise = noise_power(scn, ch, st);
    let c_re = Dd::from(amplitude.re);
    let c_im = Dd::from(amplitude.im);
    let mu_re = Dd::from(st.mu.re);
    let mu_im = Dd::from(st.mu.im);
    // |c|^2 + noise
    let denom = c_re.mul(c_re).add(c_im.mul(c_im)).add(Dd::from(noise));
    // |mu|^2 (|c|^2 + noise)
    let mu_sq = mu_re.mul(mu_re).add(mu_im.mul(mu_im));
    let quad = mu_sq.mul(denom);
    // 2 sqrt(1+gamma) Re{conj(mu) c}
    let inner = mu_re.mul(c_re).add(mu_im.mul(c_im));
    let root = Dd::from(1.0).add(Dd::from(st.gamma)).sqrt();
    let linear = Dd::from(2.0).mul(root).mul(inner);
    linear
        .add(quad.neg())
        .add(Dd::from(st.gamma).neg())
        .value()
        .abs()
}

/// Outcome of a beam or reflection block.
#[derive(Debug, Clone)]
pub struct BlockUpdate {
    pub value: CVector,
    pub skipped: bool,
    pub report: Option<KktReport>,
}

/// Beam update: maximize the surrogate's beam block over
/// `v1^H (I + G^H Theta^H Theta G) v1 <= P - sigma_I^2 ||theta||^2`.
pub fn update_v1(
    scn: &Scenario,
    ch: &ChannelSet,
    st: &CffpState,
    variant: CffpVariant,
) -> Result<BlockUpdate, AlgorithmError> {
    ch.check_dims(scn)?;
    let p_remaining = scn.p_max - scn.sigma2_irs * st.reflect.norm_squared();
    if p_remaining <= 0.0 {
        return Err(AlgorithmError::BudgetExhausted(format!(
            "reflections alone consume the whole budget (P_r = {p_remaining})"
        )));
    }
    if st.mu.norm_sqr() == 0.0 {
        return Ok(BlockUpdate {
            value: st.beam.clone(),
            skipped: true,
            report: None,
        });
    }
    let m = scn.m_antennas;
    let combined = model::combined_channel(ch, &st.reflect);
    // H = I + G^H diag(|theta|^2) G
    let mut ellipsoid = CMatrix::identity(m, m);
    for i in 0..scn.n_elements {
        let w = st.reflect[i].norm_sqr();
        if w == 0.0 {
            continue;
        }
        let row = ch.bs_irs.row(i);
        for a in 0..m {
            for b in 0..m {
                ellipsoid[(a, b)] += row[a].conjugate() * row[b] * C64::from(w);
            }
        }
    }
    match variant {
        CffpVariant::PaperFaithful => {
            // k = 2 sqrt(1+gamma) mu r; the maximizer is invariant to the
            // positive scale of k, so solve with the unit-magnitude version
            // to keep the numbers bounded when gamma is huge.
            let phase = st.mu / C64::from(st.mu.norm());
            let k = combined.map(|c| c * phase);
            let (beam, report) = qcqp::solve_lin_ellipsoid(&k, &ellipsoid, p_remaining)?;
            Ok(BlockUpdate {
                value: beam,
                skipped: false,
                report: Some(report),
            })
        }
        CffpVariant::StandardFp => {
            // maximize 2 Re{q^H v} - |mu|^2 v^H r r^H v; scale by 1/|mu|^2
            let scale = (1.0 + st.gamma).sqrt() / st.mu.norm();
            let q = combined.map(|c| c * st.mu.conjugate() / C64::from(st.mu.norm()) * C64::from(scale));
            let a = HermitianForm::DiagonalPlusRankOne {
                diag: RVector::zeros(m),
                factor: combined.clone(),
                weight: 1.0,
            };
            let b = HermitianForm::Dense(ellipsoid);
            let (beam, report) = qcqp::solve_trust_region(&q, &a, &b, p_remaining)?;
            Ok(BlockUpdate {
                value: beam,
                skipped: false,
                report: Some(report),
            })
        }
    }
}

/// Reflection update: maximize the surrogate's reflection block over
/// `theta^H (diag(|Gv1|^2) + sigma_I^2 I) theta <= P - ||v1||^2`.
pub fn update_theta_cffp(
    scn: &Scenario,
    ch: &ChannelSet,
    st: &CffpState,
    variant: CffpVariant,
) -> Result<BlockUpdate, AlgorithmError> {
    ch.check_dims(scn)?;
    let p_budget = scn.p_max - st.beam.norm_squared();
    if p_budget <= 0.0 {
        return Err(AlgorithmError::BudgetExhausted(format!(
            "beam alone consumes the whole budget (P_b = {p_budget})"
        )));
    }
    let n = scn.n_elements;
    if st.mu.norm_sqr() == 0.0 {
        return Ok(BlockUpdate {
            value: CVector::zeros(n),
            skipped: false,
            report: None,
        });
    }
    let gv = if n > 0 {
        &ch.bs_irs * &st.beam
    } else {
        CVector::zeros(0)
    };
    // a_n = conj(f_n) (G v1)_n, the cascade factor of the amplitude
    let cascade = CVector::from_fn(n, |i, _| ch.irs_user[i].conjugate() * gv[i]);
    let power_diag = RVector::from_fn(n, |i, _| gv[i].norm_sqr() + scn.sigma2_irs);
    // The whole objective is scaled by 1/|mu|^2 (maximizer unchanged), so
    // q = sqrt(1+gamma)/|mu| * unit(conj(mu)) * a stays bounded under the
    // PaperFaithful gamma growth.
    let scale = (1.0 + st.gamma).sqrt() / st.mu.norm();
    let unit_conj = st.mu.conjugate() / C64::from(st.mu.norm());
    let noise_diag = RVector::from_fn(n, |i, _| scn.sigma2_irs * ch.irs_user[i].norm_sqr());
    let (q, a_form) = match variant {
        CffpVariant::PaperFaithful => (
            cascade.map(|c| c * unit_conj * C64::from(scale)),
            HermitianForm::Diagonal(noise_diag),
        ),
        CffpVariant::StandardFp => {
            let direct = ch.bs_user.dotc(&st.beam);
            let q = CVector::from_fn(n, |i, _| {
                cascade[i] * unit_conj * C64::from(scale) - cascade[i] * direct.conjugate()
            });
            (
                q,
                HermitianForm::DiagonalPlusRankOne {
                    diag: noise_diag,
                    factor: cascade.clone(),
                    weight: 1.0,
                },
            )
        }
    };
    let b_form = HermitianForm::Diagonal(power_diag);
    if q.norm() == 0.0 {
        return Ok(BlockUpdate {
            value: CVector::zeros(n),
            skipped: false,
            report: None,
        });
    }
    let (theta, report) = qcqp::solve_trust_region(&q, &a_form, &b_form, p_budget)?;
    Ok(BlockUpdate {
        value: theta,
        skipped: false,
        report: Some(report),
    })
}

/// Per-iteration record.
#[derive(Debug, Clone)]
pub struct CffpIterate {
    pub iteration: usize,
    pub mu: C64,
    pub gamma: f64,
    /// Surrogate after each block: mu, gamma, beam, reflections.
    pub block_surrogates: [f64; 4],
    /// Surrogate at the end of the iteration (natural-log domain).
    pub surrogate_nat: f64,
    pub ar_bits: f64,
    pub total_power: f64,
    /// `|surrogate - ln(1 + SNR)|` after the (mu, gamma) pass
    /// (StandardFp only, where the pass reaches its joint fixed point).
    pub tightness_gap: Option<f64>,
    pub beam_report: Option<KktReport>,
    pub theta_report: Option<KktReport>,
}

#[derive(Debug, Clone)]
pub struct CffpTrace {
    pub variant: CffpVariant,
    pub iterates: Vec<CffpIterate>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct CffpOptions {
    /// Stopping threshold on |delta AR| in bits.
    pub zeta_bits: f64,
    pub max_iters: usize,
}

impl Default for CffpOptions {
    fn default() -> Self {
        CffpOptions {
            zeta_bits: 1e-3,
            max_iters: 200,
        }
    }
}

/// Standard feasible start: half the budget to an MRT beam, half to
/// phase-aligned reflections, auxiliaries from one update pass.
pub fn initial_state(
    scn: &Scenario,
    ch: &ChannelSet,
    variant: CffpVariant,
) -> Result<CffpState, AlgorithmError> {
    let m = scn.m_antennas;
    let norm = ch.bs_user.norm();
    let beam_dir = if norm > 0.0 {
        ch.bs_user.map(|c| c / C64::from(norm))
    } else {
        let mut e = CVector::zeros(m);
        e[0] = C64::from(1.0);
        e
    };
    let beam = beam_dir.map(|c| c * C64::from((scn.p_max / 2.0).sqrt()));
    let reflect = if scn.n_elements > 0 {
        let dir = crate::max_snr_pa::aligned_direction(ch, &beam);
        let coupling = model::irs_signal_power(ch, &dir, &beam);
        let gain = (scn.p_max / 2.0 / (coupling + scn.sigma2_irs)).sqrt();
        dir.map(|c| c * C64::from(gain))
    } else {
        CVector::zeros(0)
    };
    let mut state = CffpState::new(beam, reflect, C64::from(0.0), 0.0)?;
    state.mu = update_mu(scn, ch, &state, variant);
    state.gamma = update_gamma(varpi(ch, &state));
    Ok(state)
}

/// Runs Algorithm 3: mu, gamma, beam, reflection updates in order until the
/// achievable rate stalls.
pub fn run_max_ar_cffp(
    scn: &Scenario,
    ch: &ChannelSet,
    init: CffpState,
    variant: CffpVariant,
    opts: &CffpOptions,
) -> Result<(CffpState, CffpTrace), AlgorithmError> {
    scn.validate()
        .map_err(|e| AlgorithmError::InfeasibleInit(e.to_string()))?;
    let total = model::total_power_no_pa(scn, ch, &init)?;
    if total > scn.p_max * (1.0 + qcqp::TOLERANCES.feasibility) {
        return Err(AlgorithmError::InfeasibleInit(format!(
            "initial total power {total} W exceeds budget {} W",
            scn.p_max
        )));
    }
    let mut state = init;
    let mut ar = model::achievable_rate(model::snr_no_pa(scn, ch, &state)?)?;
    let mut trace = CffpTrace {
        variant,
        iterates: Vec::new(),
        converged: false,
    };

    for iteration in 1..=opts.max_iters {
        // mu and gamma blocks (closed forms)
        state.mu = update_mu(scn, ch, &state, variant);
        let s_mu = surrogate_value(scn, ch, &state, variant);
        state.gamma = update_gamma(varpi(ch, &state));
        let s_gamma = surrogate_value(scn, ch, &state, variant);
        let tightness_gap = match variant {
            CffpVariant::PaperFaithful => None,
            CffpVariant::StandardFp => {
                // the alternating pair contracts to gamma = SNR,
                // mu = sqrt(1+SNR) c / (|c|^2 + noise); jump there directly
                // (the contraction factor approaches 1 at high SNR)
                let snr = model::snr_no_pa(scn, ch, &state)?;
                state.gamma = snr.min(GAMMA_CAP);
                state.mu = update_mu(scn, ch, &state, variant);
                Some(standard_fp_tightness_gap(scn, ch, &state))
            }
        };

        // beam block
        let beam_step = update_v1(scn, ch, &state, variant)?;
        state.beam = beam_step.value.clone();
        let s_beam = surrogate_value(scn, ch, &state, variant);

        // reflection block; a beam that saturated the whole budget leaves
        // theta = 0 as the only feasible point
        let p_budget = scn.p_max - state.beam.norm_squared();
        let theta_step = if p_budget > 0.0 {
            update_theta_cffp(scn, ch, &state, variant)?
        } else {
            BlockUpdate {
                value: CVector::zeros(scn.n_elements),
                skipped: true,
                report: None,
            }
        };
        state.reflect = theta_step.value.clone();
        let s_theta = surrogate_value(scn, ch, &state, variant);

        let snr = model::snr_no_pa(scn, ch, &state)?;
        let ar_new = model::achievable_rate(snr)?;
        if !ar_new.is_finite() {
            return Err(AlgorithmError::NonFinite(iteration));
        }
        trace.iterates.push(CffpIterate {
            iteration,
            mu: state.mu,
            gamma: state.gamma,
            block_surrogates: [s_mu, s_gamma, s_beam, s_theta],
            surrogate_nat: s_theta,
            ar_bits: ar_new,
            total_power: model::total_power_no_pa(scn, ch, &state)?,
            tightness_gap,
            beam_report: beam_step.report,
            theta_report: theta_step.report,
        });
        let delta = (ar_new - ar).abs();
        ar = ar_new;
        if delta <= opts.zeta_bits {
            trace.converged = true;
            break;
        }
    }
    Ok((state, trace))
}

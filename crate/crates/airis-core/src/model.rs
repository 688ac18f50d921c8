//! System model: scenario geometry, channel containers, algorithm states, and
//! the deterministic power/SNR/rate formulas they satisfy.
//!
//! Two model variants coexist. With a power-allocation factor `beta`, the BS
//! spends `beta * p_max` and the active IRS budget is `(1 - beta) * p_max`.
//! Without it, the BS beam is unnormalized and the single constraint is the
//! sum of BS and IRS consumption.
//!
//! The IRS reflection matrix is `diag(theta^H)`; every formula here uses the
//! vector `theta` with diagonal-aware products, so nothing is ever `N x N`.

use nalgebra::ComplexField;
use thiserror::Error;

use crate::{C64, CVector};

/// Errors raised by model-layer operations.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch in {operand}: expected {expected}, got {got}")]
    DimensionMismatch {
        operand: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("snr must be nonnegative, got {0}")]
    NegativeSnr(f64),
}

/// Physical configuration of one experiment: array sizes, power budget,
/// noise powers, node positions, and path-loss exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Number of BS antennas (M), at least 1.
    pub m_antennas: usize,
    /// Number of active IRS elements (N). Zero disables the IRS entirely.
    pub n_elements: usize,
    /// Total BS + IRS power budget in watts.
    pub p_max: f64,
    /// IRS amplifier noise power in watts.
    pub sigma2_irs: f64,
    /// Receiver noise power at the user in watts.
    pub sigma2_user: f64,
    /// BS position in meters.
    pub bs_pos: [f64; 3],
    /// IRS position in meters.
    pub irs_pos: [f64; 3],
    /// User position in meters.
    pub user_pos: [f64; 3],
    /// Path-loss exponent BS -> IRS.
    pub alpha_bi: f64,
    /// Path-loss exponent IRS -> user.
    pub alpha_iu: f64,
    /// Path-loss exponent BS -> user.
    pub alpha_bu: f64,
    /// Reference path loss at 1 m, in dB (typically negative).
    pub pl0_db: f64,
}

/// Pairwise link distances derived from scenario geometry.
#[derive(Debug, Clone, Copy)]
pub struct LinkDistances {
    pub bs_irs: f64,
    pub irs_user: f64,
    pub bs_user: f64,
}

fn euclidean(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl Scenario {
    /// Checks every scenario invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidScenario(msg));
        if self.m_antennas == 0 {
            return bad("m_antennas must be at least 1".into());
        }
        if !(self.p_max > 0.0) {
            return bad(format!("p_max must be positive, got {}", self.p_max));
        }
        if !(self.sigma2_irs > 0.0) {
            return bad(format!("sigma2_irs must be positive, got {}", self.sigma2_irs));
        }
        if !(self.sigma2_user > 0.0) {
            return bad(format!("sigma2_user must be positive, got {}", self.sigma2_user));
        }
        for (name, alpha) in [
            ("alpha_bi", self.alpha_bi),
            ("alpha_iu", self.alpha_iu),
            ("alpha_bu", self.alpha_bu),
        ] {
            if !(alpha >= 2.0) {
                return bad(format!("{name} must be at least 2, got {alpha}"));
            }
        }
        for (name, pos) in [
            ("bs_pos", &self.bs_pos),
            ("irs_pos", &self.irs_pos),
            ("user_pos", &self.user_pos),
        ] {
            if pos.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} has a non-finite coordinate"));
            }
        }
        if !self.pl0_db.is_finite() {
            return bad(format!("pl0_db must be finite, got {}", self.pl0_db));
        }
        let d = self.distances();
        for (name, dist) in [
            ("bs-irs", d.bs_irs),
            ("irs-user", d.irs_user),
            ("bs-user", d.bs_user),
        ] {
            if !(dist > 0.0) {
                return bad(format!("{name} distance must be positive, got {dist}"));
            }
        }
        Ok(())
    }

    /// Euclidean distances of the three links.
    pub fn distances(&self) -> LinkDistances {
        LinkDistances {
            bs_irs: euclidean(&self.bs_pos, &self.irs_pos),
            irs_user: euclidean(&self.irs_pos, &self.user_pos),
            bs_user: euclidean(&self.bs_pos, &self.user_pos),
        }
    }

    /// SHA-256 digest of all scenario fields; identifies the scenario a
    /// channel file was generated for.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.m_antennas as u64).to_le_bytes());
        hasher.update((self.n_elements as u64).to_le_bytes());
        for value in [
            self.p_max,
            self.sigma2_irs,
            self.sigma2_user,
            self.alpha_bi,
            self.alpha_iu,
            self.alpha_bu,
            self.pl0_db,
        ] {
            hasher.update(value.to_le_bytes());
        }
        for pos in [&self.bs_pos, &self.irs_pos, &self.user_pos] {
            for coord in pos {
                hasher.update(coord.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

/// One realization of the three links: `bs_irs` is the N x M matrix from the
/// BS to the IRS, `irs_user` the length-N vector from the IRS to the user,
/// and `bs_user` the length-M direct vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub bs_irs: crate::CMatrix,
    pub irs_user: CVector,
    pub bs_user: CVector,
}

impl ChannelSet {
    /// Verifies dimensions against a scenario and entry finiteness.
    pub fn check_dims(&self, scn: &Scenario) -> Result<(), ModelError> {
        let (n, m) = (scn.n_elements, scn.m_antennas);
        if self.bs_irs.nrows() != n || self.bs_irs.ncols() != m {
            return Err(ModelError::DimensionMismatch {
                operand: "bs_irs channel matrix",
                expected: n * m,
                got: self.bs_irs.len(),
            });
        }
        if self.irs_user.len() != n {
            return Err(ModelError::DimensionMismatch {
                operand: "irs_user channel vector",
                expected: n,
                got: self.irs_user.len(),
            });
        }
        if self.bs_user.len() != m {
            return Err(ModelError::DimensionMismatch {
                operand: "bs_user channel vector",
                expected: m,
                got: self.bs_user.len(),
            });
        }
        let finite = self.bs_irs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.irs_user.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.bs_user.iter().all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite {
            return Err(ModelError::InvalidState("channel has non-finite entries".into()));
        }
        Ok(())
    }
}

const UNIT_TOL: f64 = 1e-12;

/// Iterate of the Max-SNR-PA strategy. `reflect = reflect_gain * reflect_dir`
/// decomposes the IRS vector into its norm and a unit direction.
#[derive(Debug, Clone)]
pub struct PaState {
    /// Power-allocation factor in [0, 1]; the BS transmits `beta * p_max`.
    pub beta: f64,
    /// Unit-norm BS beamforming vector (length M).
    pub beam: CVector,
    /// IRS reflection vector theta (length N).
    pub reflect: CVector,
    /// Norm of `reflect`.
    pub reflect_gain: f64,
    /// Unit direction of `reflect` (arbitrary unit vector when theta = 0).
    pub reflect_dir: CVector,
}

impl PaState {
    /// Builds a state from `(beta, beam, reflect)`, deriving the gain/direction
    /// split and validating the unit-norm invariants.
    pub fn new(beta: f64, beam: CVector, reflect: CVector) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(ModelError::InvalidState(format!(
                "beta must lie in [0,1], got {beta}"
            )));
        }
        let beam_norm = beam.norm();
        if (beam_norm - 1.0).abs() > UNIT_TOL {
            return Err(ModelError::InvalidState(format!(
                "beam must be unit norm, got {beam_norm}"
            )));
        }
        let reflect_gain = reflect.norm();
        let n = reflect.len();
        let reflect_dir = if reflect_gain > 0.0 {
            reflect.map(|c| c / C64::from(reflect_gain))
        } else if n > 0 {
            CVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0))
        } else {
            CVector::zeros(0)
        };
        Ok(Self {
            beta,
            beam,
            reflect,
            reflect_gain,
            reflect_dir,
        })
    }
}

/// Iterate of the Max-AR-CFFP strategy. The BS beam is unnormalized; its
/// squared norm is the BS transmit power.
#[derive(Debug, Clone)]
pub struct CffpState {
    /// Unnormalized BS beamforming vector (length M).
    pub beam: CVector,
    /// IRS reflection vector theta (length N).
    pub reflect: CVector,
    /// Quadratic-transform auxiliary.
    pub mu: C64,
    /// Lagrangian-dual-transform auxiliary, nonnegative.
    pub gamma: f64,
}

impl CffpState {
    pub fn new(beam: CVector, reflect: CVector, mu: C64, gamma: f64) -> Result<Self, ModelError> {
        if !(gamma >= 0.0) {
            return Err(ModelError::InvalidState(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let finite = beam.iter().chain(reflect.iter()).all(|c| c.re.is_finite() && c.im.is_finite())
            && mu.re.is_finite()
            && mu.im.is_finite();
        if !finite {
            return Err(ModelError::InvalidState("state has non-finite entries".into()));
        }
        Ok(Self {
            beam,
            reflect,
            mu,
            gamma,
        })
    }
}

fn check_lengths(
    ch: &ChannelSet,
    reflect: &CVector,
    beam: &CVector,
    scn: &Scenario,
) -> Result<(), ModelError> {
    ch.check_dims(scn)?;
    if reflect.len() != scn.n_elements {
        return Err(ModelError::DimensionMismatch {
            operand: "reflect vector",
            expected: scn.n_elements,
            got: reflect.len(),
        });
    }
    if beam.len() != scn.m_antennas {
        return Err(ModelError::DimensionMismatch {
            operand: "beam vector",
            expected: scn.m_antennas,
            got: beam.len(),
        });
    }
    Ok(())
}

/// Scalar received amplitude `(f^H Theta G + h^H) v` for a reflection vector
/// `theta` and beam `v`. With `Theta = diag(theta^H)` the cascaded term is
/// `sum_n conj(theta_n f_n) (Gv)_n`.
pub fn received_gain(ch: &ChannelSet, reflect: &CVector, beam: &CVector) -> C64 {
    let through_irs = ch.bs_irs.ncols() == beam.len() && ch.bs_irs.nrows() > 0;
    let mut acc = ch.bs_user.dotc(beam);
    if through_irs {
        let gv = &ch.bs_irs * beam;
        for n in 0..gv.len() {
            acc += (reflect[n] * ch.irs_user[n]).conjugate() * gv[n];
        }
    }
    acc
}

/// Combined channel seen by the beam: `(f^H Theta G + h^H)^H
/// = G^H Theta^H f + h`.
pub fn combined_channel(ch: &ChannelSet, reflect: &CVector) -> CVector {
    let mut r = ch.bs_user.clone();
    if ch.bs_irs.nrows() > 0 {
        let weighted = CVector::from_fn(reflect.len(), |i, _| reflect[i] * ch.irs_user[i]);
        r += ch.bs_irs.adjoint() * weighted;
    }
    r
}

/// Amplified-noise coupling `||f^H Theta||^2 = sum_n |f_n theta_n|^2`.
pub fn irs_noise_coupling(ch: &ChannelSet, reflect: &CVector) -> f64 {
    reflect
        .iter()
        .zip(ch.irs_user.iter())
        .map(|(t, f)| (t * f).norm_sqr())
        .sum()
}

/// `||Theta G v||^2 = sum_n |theta_n|^2 |(Gv)_n|^2`: the signal power entering
/// the IRS amplifiers.
pub fn irs_signal_power(ch: &ChannelSet, reflect: &CVector, beam: &CVector) -> f64 {
    if ch.bs_irs.nrows() == 0 {
        return 0.0;
    }
    let gv = &ch.bs_irs * beam;
    reflect
        .iter()
        .zip(gv.iter())
        .map(|(t, g)| t.norm_sqr() * g.norm_sqr())
        .sum()
}

/// SNR of the PA-factor model:
/// `beta P ||(f^H Theta G + h^H) v||^2 / (sigma_I^2 ||f^H Theta||^2 + sigma_n^2)`.
pub fn snr_pa(scn: &Scenario, ch: &ChannelSet, st: &PaState) -> Result<f64, ModelError> {
    check_lengths(ch, &st.reflect, &st.beam, scn)?;
    let signal = scn.p_max * st.beta * received_gain(ch, &st.reflect, &st.beam).norm_sqr();
    let noise = scn.sigma2_irs * irs_noise_coupling(ch, &st.reflect) + scn.sigma2_user;
    Ok(signal / noise)
}

/// Achievable rate `log2(1 + snr)` in bits/s/Hz.
pub fn achievable_rate(snr: f64) -> Result<f64, ModelError> {
    if snr < 0.0 {
        return Err(ModelError::NegativeSnr(snr));
    }
    Ok((1.0 + snr).log2())
}

/// Power consumed at the active IRS in the PA model:
/// `beta P ||Theta G v||^2 + sigma_I^2 ||Theta||_F^2`.
pub fn irs_power_pa(scn: &Scenario, ch: &ChannelSet, st: &PaState) -> Result<f64, ModelError> {
    check_lengths(ch, &st.reflect, &st.beam, scn)?;
    Ok(scn.p_max * st.beta * irs_signal_power(ch, &st.reflect, &st.beam)
        + scn.sigma2_irs * st.reflect.norm_squared())
}

/// Signed slack of the IRS power constraint: `(1 - beta) P - irs_power_pa`.
/// The state is feasible iff the residual is at least `-tolerance`.
pub fn budget_residual_pa(scn: &Scenario, ch: &ChannelSet, st: &PaState) -> Result<f64, ModelError> {
    Ok((1.0 - st.beta) * scn.p_max - irs_power_pa(scn, ch, st)?)
}

/// SNR of the model without a PA factor, with unnormalized beam `v1`.
pub fn snr_no_pa(scn: &Scenario, ch: &ChannelSet, st: &CffpState) -> Result<f64, ModelError> {
    check_lengths(ch, &st.reflect, &st.beam, scn)?;
    let signal = received_gain(ch, &st.reflect, &st.beam).norm_sqr();
    let noise = scn.sigma2_irs * irs_noise_coupling(ch, &st.reflect) + scn.sigma2_user;
    Ok(signal / noise)
}

/// Combined BS + IRS power of the model without a PA factor:
/// `v1^H v1 + ||Theta G v1||^2 + sigma_I^2 ||Theta||_F^2`.
pub fn total_power_no_pa(scn: &Scenario, ch: &ChannelSet, st: &CffpState) -> Result<f64, ModelError> {
    check_lengths(ch, &st.reflect, &st.beam, scn)?;
    Ok(st.beam.norm_squared()
        + irs_signal_power(ch, &st.reflect, &st.beam)
        + scn.sigma2_irs * st.reflect.norm_squared())
}

//! Power allocation and beamforming for an active-IRS-assisted single-user
//! MISO downlink under a shared base-station + IRS power budget.
//!
//! The library implements two joint power-allocation/beamforming strategies
//! and the benchmark schemes they are usually compared against:
//!
//! * **Max-SNR-PA** ([`max_snr_pa`]): alternating optimization of the power
//!   allocation factor (polynomial regression over the closed-form rate
//!   expression), the BS beam (successive convex approximation), and the IRS
//!   reflection vector (Dinkelbach ratio maximization).
//! * **Max-AR-CFFP** ([`max_ar_cffp`]): closed-form fractional programming
//!   with auxiliary variables, alternating four block updates with closed
//!   forms or single-constraint quadratic subproblems.
//! * **Benchmarks** ([`baselines`]): fixed power splits, passive IRS, random
//!   phase shifts, and the no-IRS closed form.
//!
//! All formulas operate on watt-scale quantities; dBm conversions belong to
//! the configuration boundary. The IRS reflection matrix is never
//! materialized: every product exploits its diagonal structure.

pub mod baselines;
pub mod channel;
pub mod max_ar_cffp;
pub mod max_snr_pa;
pub mod model;
pub mod pa_beta;
pub mod parallel;
pub mod qcqp;

pub use model::{ChannelSet, CffpState, ModelError, PaState, Scenario};

/// Errors shared by the iterative algorithms.
#[derive(Debug, thiserror::Error)]
pub enum AlgorithmError {
    #[error("initial point is infeasible: {0}")]
    InfeasibleInit(String),
    #[error("objective became non-finite at iteration {0}")]
    NonFinite(usize),
    #[error("power budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Beta(#[from] pa_beta::BetaError),
    #[error("subproblem solver failed: {0}")]
    Solver(#[from] qcqp::SolverError),
}

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense real vector.
pub type RVector = nalgebra::DVector<f64>;

/// Converts a dBm figure to watts (30 dBm -> 1 W, -100 dBm -> 1e-13 W).
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

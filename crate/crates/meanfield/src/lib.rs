//! Deterministic mean-field engine for group-normalized policy-gradient
//! dynamics on the simplex under a noisy binary verifier.
//!
//! The state is a [`simplex_core::BlockState`]: total bad mass `p` plus the
//! within-block shapes `y` (good arms) and `z` (bad arms). The flow
//! decouples into a scalar law for `p` and replicator-type shape dynamics
//! driven by a common rate `kappa(p) = eta (J / sigma) p (1 - p)`:
//!
//! ```text
//! dp/dt = -eta (J / sigma) [p (1 - p)]^2 (s2 + t2)
//! dy/dt = +kappa(p) y (*) (y - s2 1)        s2 = ||y||^2
//! dz/dt = -kappa(p) z (*) (z - t2 1)        t2 = ||z||^2
//! ```
//!
//! Alongside the integrator the crate provides the noise-free two-class
//! closed form, internal-time and logit representations, the
//! small-heterogeneity logit expansion, envelopes and hitting-time
//! brackets, within-block closed forms, Lyapunov values, equilibrium
//! classification, and asymptotic tail fitting.

mod analysis;
mod closed;
mod export;
mod flow;

pub use analysis::{
    classify_equilibrium, lyapunov_value, tail_exponent, BlockKind, EquilibriumKind, Stability,
};
pub use closed::{
    closed_form_p, heterogeneity_expansion, hitting_time_bracket, inner_bad_at_internal_time,
    inner_bad_closed_form, inner_good_at_internal_time, inner_good_closed_form, logit_envelopes,
    ExpansionPrediction,
};
pub use export::write_trajectory_csv;
pub use flow::{
    coupled_drift, integrate, integrate_two_class, internal_time, tau_profile, two_class_drift,
    BlockDrift, Method, OdeConfig, Trajectory, TrajectoryPoint,
};

use noise_model::NoiseError;
use simplex_core::SimplexError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeanfieldError {
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("adaptive step underflow at t = {t} (h = {h}); the state may be stiff or absorbing")]
    StepUnderflow { t: f64, h: f64 },
    #[error("operation requires an interior bad mass, got p = {p}")]
    BoundaryState { p: f64 },
    #[error("hitting target must satisfy 0 < p_star < p0 < 1, got p0 = {p0}, p_star = {p_star}")]
    HittingOrder { p0: f64, p_star: f64 },
    #[error("parameter I = {i} is at or beyond the singular value {limit}")]
    SingularParameter { i: f64, limit: f64 },
    #[error("window does not decay enough for a tail fit: max mass {max_mass} >= 0.05")]
    InsufficientDecay { max_mass: f64 },
    #[error("window selects fewer than two positive-time samples")]
    EmptyWindow,
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MeanfieldError>;

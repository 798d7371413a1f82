//! Finite-group stochastic simulator for policy-gradient training on a
//! categorical bandit scored by a noisy binary verifier.
//!
//! This crate is the ground truth that the deterministic flow in
//! `meanfield` approximates. Each step draws a group of arms from the
//! current softmax policy, scores every draw through the noisy verifier,
//! z-scores the rewards within the group, and takes the resulting
//! policy-gradient step on the logits. On top of the plain step there are
//! clipped importance-ratio updates, an optional per-step pull toward a
//! reference policy, and a diffusion surrogate whose noise carries the
//! same group-size scaling as the sampling fluctuations.

mod config;
mod diffusion;
mod group;
mod run;
mod steps;

pub use config::{SimConfig, SimMode};
pub use diffusion::wright_fisher_step;
pub use group::{group_normalize, sample_group, truth_labels};
pub use run::{run, run_replica, write_sim_csv, SimPoint, SimTrajectory};
pub use steps::{grpo_clipped_step, reinforce_step, StepRecord};

use meanfield::MeanfieldError;
use noise_model::NoiseError;
use simplex_core::SimplexError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BanditError {
    #[error("invalid simulation config: {reason}")]
    InvalidConfig { reason: String },
    #[error("dimension {dim} does not match the expected {expected} arms")]
    DimensionMismatch { dim: usize, expected: usize },
    #[error("diffusion needs an interior state; smallest arm probability is {min_entry}")]
    NotInterior { min_entry: f64 },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Meanfield(#[from] MeanfieldError),
    #[error("trajectory export failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BanditError>;

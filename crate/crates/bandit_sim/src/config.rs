//! Run configuration.

use crate::{BanditError, Result};
use serde::{Deserialize, Serialize};

/// Which update rule drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Plain group-normalized policy gradient on the logits.
    Reinforce,
    /// The same gradient reweighted by importance ratios against the
    /// provisional iterate, with optional clipping.
    GrpoClipped,
    /// Diffusion surrogate: deterministic drift plus Gaussian noise with
    /// the sampling covariance, scaled by the group size.
    WrightFisher,
}

/// Knobs for a simulated run.
///
/// The flat policy lists the `k` good arms first and the `m` bad arms
/// last. `clip_low` / `clip_high` are the importance-ratio margins
/// `(1 - clip_low, 1 + clip_high)`; both zero switches the ratio weighting
/// to the raw, unclipped ratio. `beta > 0` adds a per-step logit pull of
/// `-beta (ln p_i - ln ref_i)` toward `reference`; the pull strength is a
/// rate per step and is deliberately not scaled by `eta`, matching the
/// convention of the anchored drift laws. `nu` rescales the surrogate
/// diffusion and is ignored by the sampling modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of good arms.
    pub k: usize,
    /// Number of bad arms.
    pub m: usize,
    /// Group size per step; at least 2 so the in-group z-score can see
    /// spread.
    pub g: usize,
    /// Learning rate.
    pub eta: f64,
    /// Number of steps to take.
    pub steps: usize,
    /// Lower importance-ratio margin.
    pub clip_low: f64,
    /// Upper importance-ratio margin.
    pub clip_high: f64,
    /// Strength of the pull toward `reference`; 0 disables it.
    pub beta: f64,
    /// Reference policy for the pull: length `k + m`, strictly positive,
    /// summing to 1. Required when `beta > 0`.
    pub reference: Option<Vec<f64>>,
    /// Guard added to the group reward std before dividing.
    pub zscore_epsilon: f64,
    /// Master seed; replica `r` runs on substream `r` of this seed.
    pub seed: u64,
    pub mode: SimMode,
    /// Record every this many steps. The initial and final states are
    /// always recorded.
    pub record_every: usize,
    /// Diffusion speed multiplier for the surrogate mode.
    pub nu: f64,
}

impl SimConfig {
    /// A config with everything optional at its default: no clipping, no
    /// reference pull, z-score guard `1e-8`, every step recorded, unit
    /// diffusion speed.
    pub fn new(mode: SimMode, k: usize, m: usize, g: usize, eta: f64, steps: usize, seed: u64) -> Self {
        SimConfig {
            k,
            m,
            g,
            eta,
            steps,
            clip_low: 0.0,
            clip_high: 0.0,
            beta: 0.0,
            reference: None,
            zscore_epsilon: 1e-8,
            seed,
            mode,
            record_every: 1,
            nu: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(BanditError::InvalidConfig { reason });
        if self.k == 0 || self.m == 0 {
            return fail(format!("need at least one arm per block, got k={} m={}", self.k, self.m));
        }
        if self.g < 2 {
            return fail(format!("group size must be at least 2, got {}", self.g));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return fail(format!("eta must be positive and finite, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.clip_low) || !(0.0..1.0).contains(&self.clip_high) {
            return fail(format!(
                "clip margins must lie in [0, 1), got {} and {}",
                self.clip_low, self.clip_high
            ));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return fail(format!("beta must be nonnegative and finite, got {}", self.beta));
        }
        if !(self.zscore_epsilon > 0.0) || !self.zscore_epsilon.is_finite() {
            return fail(format!(
                "zscore_epsilon must be positive and finite, got {}",
                self.zscore_epsilon
            ));
        }
        if self.record_every == 0 {
            return fail("record_every must be at least 1".to_string());
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return fail(format!("nu must be nonnegative and finite, got {}", self.nu));
        }
        if self.beta > 0.0 {
            let reference = match &self.reference {
                Some(r) => r,
                None => return fail("beta > 0 needs a reference policy".to_string()),
            };
            if reference.len() != self.k + self.m {
                return Err(BanditError::DimensionMismatch {
                    dim: reference.len(),
                    expected: self.k + self.m,
                });
            }
            if reference.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
                return fail("reference entries must be strictly positive".to_string());
            }
            let sum: f64 = reference.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return fail(format!("reference must sum to 1, got {sum}"));
            }
        }
        Ok(())
    }

    /// True when ratio clipping is active. Both margins zero means the
    /// raw ratio is used untouched.
    pub(crate) fn clipping_enabled(&self) -> bool {
        self.clip_low > 0.0 || self.clip_high > 0.0
    }

    pub(crate) fn ratio_bounds(&self) -> (f64, f64) {
        (1.0 - self.clip_low, 1.0 + self.clip_high)
    }
}

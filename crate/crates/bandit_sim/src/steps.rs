//! Single policy-gradient steps: plain and importance-weighted.

use crate::config::SimConfig;
use crate::group::{group_normalize, sample_group};
use crate::{BanditError, Result};
use noise_model::NoiseSpec;
use rand::Rng;
use simplex_core::ProbVector;

/// Softmax over the live support: arms whose logit is negative infinity
/// keep exactly zero mass, so extinct arms never respawn. On all-finite
/// input this reproduces [`simplex_core::softmax`] bit for bit.
pub(crate) fn masked_softmax(theta: &[f64]) -> ProbVector {
    let m = theta
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(m.is_finite(), "a policy needs at least one live arm");
    let w: Vec<f64> = theta
        .iter()
        .map(|&x| if x.is_finite() { (x - m).exp() } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    ProbVector::sanitized(w.into_iter().map(|x| x / z).collect())
        .expect("live arms carry positive mass")
}

/// Everything observable about one step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Step index within a run; standalone step calls leave this at 0.
    pub step: usize,
    pub pre: ProbVector,
    pub post: ProbVector,
    /// How many group members landed on each arm.
    pub arm_counts: Vec<u64>,
    /// Raw verifier outcomes, one per group member.
    pub rewards: Vec<u8>,
    /// Group-normalized advantages, one per group member. They sum to
    /// zero up to rounding; a unanimous group yields exact zeros.
    pub advantages: Vec<f64>,
    /// Share of the group whose importance ratio hit a clip margin.
    /// Always 0 for the plain step.
    pub clipped_fraction: f64,
}

/// Internal result of one sampled update.
pub(crate) struct GroupOutcome {
    pub arms: Vec<usize>,
    pub rewards: Vec<u8>,
    pub advantages: Vec<f64>,
    pub reward_mean: f64,
    pub clipped_fraction: f64,
    /// False when the group was unanimous and the logits were left
    /// untouched.
    pub updated: bool,
}

/// The shared logit increment `(eta / G) sum_g w_g (e_{I_g} - base)`,
/// accumulated as per-arm weight totals to keep the cost at O(G + d).
/// Arms at `-inf` stay there: their base probability is exactly zero, so
/// the increment is exactly zero.
fn apply_update(theta: &mut [f64], base: &[f64], arms: &[usize], weights: &[f64], eta: f64) {
    let scale = eta / arms.len() as f64;
    let mut per_arm = vec![0.0; theta.len()];
    let mut total = 0.0;
    for (&arm, &w) in arms.iter().zip(weights) {
        per_arm[arm] += w;
        total += w;
    }
    for (i, th) in theta.iter_mut().enumerate() {
        *th += scale * (per_arm[i] - base[i] * total);
    }
}

/// Samples one group and applies the plain update to `theta` in place.
/// `policy` must be the softmax of `theta`.
pub(crate) fn reinforce_core<R: Rng + ?Sized>(
    theta: &mut [f64],
    policy: &ProbVector,
    truth: &[bool],
    spec: &NoiseSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> GroupOutcome {
    let (arms, rewards) = sample_group(policy, truth, spec, cfg.g, rng);
    let advantages = group_normalize(&rewards, cfg.zscore_epsilon);
    let reward_mean = rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / cfg.g as f64;
    let updated = advantages.iter().any(|&a| a != 0.0);
    if updated {
        apply_update(theta, policy.entries(), &arms, &advantages, cfg.eta);
    }
    GroupOutcome {
        arms,
        rewards,
        advantages,
        reward_mean,
        clipped_fraction: 0.0,
        updated,
    }
}

/// Samples one group and applies the ratio-weighted update to `theta` in
/// place. The plain update from the same group defines the provisional
/// iterate; each member is reweighted by its (optionally clipped) ratio of
/// provisional to current probability, and the score is taken at the
/// provisional policy. A unanimous group has a zero provisional step, all
/// ratios at 1, and degenerates to the plain step exactly.
pub(crate) fn grpo_core<R: Rng + ?Sized>(
    theta: &mut [f64],
    policy: &ProbVector,
    truth: &[bool],
    spec: &NoiseSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> GroupOutcome {
    let (arms, rewards) = sample_group(policy, truth, spec, cfg.g, rng);
    let advantages = group_normalize(&rewards, cfg.zscore_epsilon);
    let reward_mean = rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / cfg.g as f64;
    if advantages.iter().all(|&a| a == 0.0) {
        return GroupOutcome {
            arms,
            rewards,
            advantages,
            reward_mean,
            clipped_fraction: 0.0,
            updated: false,
        };
    }
    let mut provisional = theta.to_vec();
    apply_update(&mut provisional, policy.entries(), &arms, &advantages, cfg.eta);
    let plus = masked_softmax(&provisional);
    let (lo, hi) = cfg.ratio_bounds();
    let clip_on = cfg.clipping_enabled();
    let mut weights = Vec::with_capacity(arms.len());
    let mut clipped = 0usize;
    for (&arm, &a) in arms.iter().zip(&advantages) {
        let raw = plus.entries()[arm] / policy.entries()[arm];
        let ratio = if clip_on {
            if raw < lo || raw > hi {
                clipped += 1;
            }
            raw.clamp(lo, hi)
        } else {
            raw
        };
        weights.push(a * ratio);
    }
    apply_update(theta, plus.entries(), &arms, &weights, cfg.eta);
    GroupOutcome {
        arms,
        rewards,
        advantages,
        reward_mean,
        clipped_fraction: clipped as f64 / cfg.g as f64,
        updated: true,
    }
}

fn step_impl<R: Rng + ?Sized>(
    policy: &ProbVector,
    truth: &[bool],
    spec: &NoiseSpec,
    cfg: &SimConfig,
    rng: &mut R,
    ratio_weighted: bool,
) -> Result<(ProbVector, StepRecord)> {
    cfg.validate()?;
    if policy.dim() != truth.len() {
        return Err(BanditError::DimensionMismatch {
            dim: policy.dim(),
            expected: truth.len(),
        });
    }
    let mut theta: Vec<f64> = policy.iter().map(|&p| p.ln()).collect();
    let out = if ratio_weighted {
        grpo_core(&mut theta, policy, truth, spec, cfg, rng)
    } else {
        reinforce_core(&mut theta, policy, truth, spec, cfg, rng)
    };
    let post = if out.updated {
        masked_softmax(&theta)
    } else {
        policy.clone()
    };
    let mut arm_counts = vec![0u64; policy.dim()];
    for &arm in &out.arms {
        arm_counts[arm] += 1;
    }
    let record = StepRecord {
        step: 0,
        pre: policy.clone(),
        post: post.clone(),
        arm_counts,
        rewards: out.rewards,
        advantages: out.advantages,
        clipped_fraction: out.clipped_fraction,
    };
    Ok((post, record))
}

/// One plain group-normalized step from an explicit policy. Logits are
/// reconstructed as `ln p`, so zero-mass arms sit at `-inf` and can never
/// regain mass. A unanimous group returns the input policy bitwise.
pub fn reinforce_step<R: Rng + ?Sized>(
    policy: &ProbVector,
    truth: &[bool],
    spec: &NoiseSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(ProbVector, StepRecord)> {
    step_impl(policy, truth, spec, cfg, rng, false)
}

/// One ratio-weighted step from an explicit policy; see [`grpo_core`]'s
/// description on the module for the provisional-iterate construction.
/// With both clip margins at 0 the raw ratio is used.
pub fn grpo_clipped_step<R: Rng + ?Sized>(
    policy: &ProbVector,
    truth: &[bool],
    spec: &NoiseSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(ProbVector, StepRecord)> {
    step_impl(policy, truth, spec, cfg, rng, true)
}

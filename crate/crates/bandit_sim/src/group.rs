//! Group sampling and in-group reward normalization.

use noise_model::{noisy_check, NoiseSpec};
use rand::Rng;
use simplex_core::ProbVector;

/// Arm labels for the canonical block layout: the first `k` arms are good,
/// the remaining `m` are bad.
pub fn truth_labels(k: usize, m: usize) -> Vec<bool> {
    let mut labels = vec![true; k];
    labels.extend(std::iter::repeat(false).take(m));
    labels
}

/// Draws `g` arms i.i.d. from the policy and scores each through the noisy
/// verifier. Returns the arm indices and the 0/1 rewards, one pair per
/// draw. Zero-probability arms are never drawn, including through the
/// cumulative-sum fallback for a uniform variate in the rounding residue.
///
/// Panics if `truth` does not provide one label per arm.
pub fn sample_group<R: Rng + ?Sized>(
    policy: &ProbVector,
    truth: &[bool],
    spec: &NoiseSpec,
    g: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<u8>) {
    assert_eq!(policy.dim(), truth.len(), "one truth label per arm");
    let weights = policy.entries();
    let fallback = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("a probability vector has positive mass");
    let mut arms = Vec::with_capacity(g);
    let mut rewards = Vec::with_capacity(g);
    for _ in 0..g {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = fallback;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        arms.push(pick);
        rewards.push(noisy_check(truth[pick], spec, rng) as u8);
    }
    (arms, rewards)
}

/// Z-scores a group of 0/1 rewards with a guarded denominator:
/// `(r - mean) / (pop_std + epsilon)`. A group whose rewards all agree
/// carries no ranking signal and maps to all zeros; because of that early
/// return a zero guard is tolerated even though callers pass a small
/// positive one.
pub fn group_normalize(rewards: &[u8], epsilon: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|&r| f64::from(r) - mean).collect();
    let variance = centered.iter().map(|c| c * c).sum::<f64>() / n;
    if variance == 0.0 {
        return vec![0.0; rewards.len()];
    }
    let denom = variance.sqrt() + epsilon;
    centered.into_iter().map(|c| c / denom).collect()
}

//! The sloppy-verifier model: a binary reward channel that misses correct
//! answers at rate `delta_fn` and rewards wrong ones at rate `delta_fp`.
//!
//! Exposes the discrimination index `J = 1 - delta_fn - delta_fp`, exact
//! reward moments and normalized-advantage statistics as functions of the
//! bad mass, the learnability functional and its maximizer, a Bernoulli
//! noise-injection wrapper, and piecewise-constant noise schedules.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("rate {name} = {value} must lie in [0, 1]")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("probability {value} must lie in [0, 1]")]
    InvalidProbability { value: f64 },
    #[error("J = 0: the reward variance has no unique maximizer")]
    ZeroDiscrimination,
    #[error("learnability requires J > 0, got J = {j}")]
    NonPositiveDiscrimination { j: f64 },
    #[error("schedule must start at time 0 with strictly increasing finite breakpoints")]
    InvalidSchedule,
}

fn check_rate(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(NoiseError::InvalidRate { name, value });
    }
    Ok(())
}

/// Verifier corruption rates. `delta_fn` is the false-negative rate (one
/// minus the true-positive rate) and `delta_fp` the false-positive rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRates", into = "RawRates")]
pub struct NoiseSpec {
    delta_fn: f64,
    delta_fp: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawRates {
    delta_fn: f64,
    delta_fp: f64,
}

impl TryFrom<RawRates> for NoiseSpec {
    type Error = NoiseError;
    fn try_from(raw: RawRates) -> Result<Self, NoiseError> {
        NoiseSpec::new(raw.delta_fn, raw.delta_fp)
    }
}

impl From<NoiseSpec> for RawRates {
    fn from(spec: NoiseSpec) -> Self {
        RawRates {
            delta_fn: spec.delta_fn,
            delta_fp: spec.delta_fp,
        }
    }
}

impl NoiseSpec {
    pub fn new(delta_fn: f64, delta_fp: f64) -> Result<Self, NoiseError> {
        check_rate("delta_fn", delta_fn)?;
        check_rate("delta_fp", delta_fp)?;
        Ok(NoiseSpec { delta_fn, delta_fp })
    }

    /// The perfect verifier: rewards exactly the correct answers.
    pub fn noiseless() -> Self {
        NoiseSpec {
            delta_fn: 0.0,
            delta_fp: 0.0,
        }
    }

    /// Build from detection rates instead of error rates.
    pub fn from_tpr_fpr(tpr: f64, fpr: f64) -> Result<Self, NoiseError> {
        check_rate("tpr", tpr)?;
        NoiseSpec::new(1.0 - tpr, fpr)
    }

    pub fn delta_fn(&self) -> f64 {
        self.delta_fn
    }

    pub fn delta_fp(&self) -> f64 {
        self.delta_fp
    }

    pub fn tpr(&self) -> f64 {
        1.0 - self.delta_fn
    }

    pub fn fpr(&self) -> f64 {
        self.delta_fp
    }

    /// Youden's index `J = 1 - delta_fn - delta_fp`, the verifier's net
    /// discriminative power. Positive means informative, zero blind,
    /// negative adversarial.
    pub fn youden(&self) -> f64 {
        1.0 - self.delta_fn - self.delta_fp
    }
}

/// Reward moments and normalized advantages at a given bad mass.
///
/// When the reward is almost surely constant (`sigma == 0`) the z-scored
/// advantages are undefined; `degenerate` is set and the advantage fields
/// are zeroed. Consumers of drift laws should then use the algebraically
/// reduced forms instead of dividing by `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardStats {
    /// Mean reward `q(p) = (1 - delta_fn) - J p`.
    pub q: f64,
    /// Reward standard deviation `sqrt(q (1 - q))`.
    pub sigma: f64,
    /// Conditional normalized advantage of a good arm: `J p / sigma`.
    pub a_good: f64,
    /// Conditional normalized advantage of a bad arm: `-J (1 - p) / sigma`.
    pub a_bad: f64,
    /// Advantage gap `a_good - a_bad = J / sigma`.
    pub gap: f64,
    /// True when `sigma == 0` and the advantage fields are meaningless.
    pub degenerate: bool,
}

/// Exact first and second moments of the reward channel at bad mass `p`,
/// plus the conditional z-scored advantages of good and bad arms.
pub fn reward_stats(spec: &NoiseSpec, p: f64) -> Result<RewardStats, NoiseError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(NoiseError::InvalidProbability { value: p });
    }
    let j = spec.youden();
    let q = ((1.0 - spec.delta_fn) - j * p).clamp(0.0, 1.0);
    let sigma = (q * (1.0 - q)).sqrt();
    if sigma == 0.0 {
        return Ok(RewardStats {
            q,
            sigma,
            a_good: 0.0,
            a_bad: 0.0,
            gap: 0.0,
            degenerate: true,
        });
    }
    Ok(RewardStats {
        q,
        sigma,
        a_good: j * p / sigma,
        a_bad: -j * (1.0 - p) / sigma,
        gap: j / sigma,
        degenerate: false,
    })
}

/// The bad mass maximizing the reward variance:
/// `clip((1/2 - delta_fn) / J, 0, 1)`. Undefined for `J = 0`, where the
/// variance is constant in `p`.
pub fn variance_argmax(spec: &NoiseSpec) -> Result<f64, NoiseError> {
    let j = spec.youden();
    if j == 0.0 {
        return Err(NoiseError::ZeroDiscrimination);
    }
    Ok(((0.5 - spec.delta_fn) / j).clamp(0.0, 1.0))
}

/// The learnability speed `(J / sigma(p)) [p (1 - p)]^2`: the magnitude of
/// the one-step mean decrease of the bad mass, up to the step constant.
/// Defined for informative verifiers (`J > 0`); returns 0 at the absorbing
/// boundaries.
pub fn learnability_speed(spec: &NoiseSpec, p: f64) -> Result<f64, NoiseError> {
    let j = spec.youden();
    if j <= 0.0 {
        return Err(NoiseError::NonPositiveDiscrimination { j });
    }
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(NoiseError::InvalidProbability { value: p });
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    let stats = reward_stats(spec, p)?;
    let pq = p * (1.0 - p);
    Ok(j / stats.sigma * pq * pq)
}

/// The bad mass at which the learnability speed peaks, found as the real
/// root in (0, 1) of the cleared stationarity cubic
/// `4 (1 - 2p) q (1 - q) + J (1 - 2q) p (1 - p) = 0`. When several roots
/// exist the one with the largest speed wins; if the scan finds none the
/// best grid point is returned.
pub fn learnability_argmax(spec: &NoiseSpec) -> Result<f64, NoiseError> {
    let j = spec.youden();
    if j <= 0.0 {
        return Err(NoiseError::NonPositiveDiscrimination { j });
    }
    let foc = |p: f64| {
        let q = (1.0 - spec.delta_fn) - j * p;
        4.0 * (1.0 - 2.0 * p) * q * (1.0 - q) + j * (1.0 - 2.0 * q) * p * (1.0 - p)
    };
    let n = 1000;
    let mut roots = Vec::new();
    let mut prev_p = 1e-9;
    let mut prev_f = foc(prev_p);
    for i in 1..=n {
        let p = if i == n {
            1.0 - 1e-9
        } else {
            i as f64 / n as f64
        };
        let f = foc(p);
        if prev_f == 0.0 {
            roots.push(prev_p);
        } else if prev_f * f < 0.0 {
            let (mut lo, mut hi) = (prev_p, p);
            let (mut flo, _) = (prev_f, f);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = foc(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_p = p;
        prev_f = f;
    }
    let speed = |p: f64| learnability_speed(spec, p).unwrap_or(0.0);
    let best_root = roots
        .into_iter()
        .max_by(|a, b| speed(*a).total_cmp(&speed(*b)));
    if let Some(root) = best_root {
        return Ok(root);
    }
    // No sign change anywhere: fall back to the best scanned point.
    let best_grid = (0..=n)
        .map(|i| i as f64 / n as f64)
        .max_by(|a, b| speed(*a).total_cmp(&speed(*b)))
        .unwrap();
    Ok(best_grid)
}

/// Algorithm wrapper for a noisy verifier: reports success on a correct
/// answer with probability `tpr` and on a wrong answer with probability
/// `fpr`. One uniform draw per call.
pub fn noisy_check<R: Rng + ?Sized>(truth: bool, spec: &NoiseSpec, rng: &mut R) -> bool {
    let accept = if truth { spec.tpr() } else { spec.fpr() };
    rng.random::<f64>() < accept
}

/// Piecewise-constant noise schedule: a list of `(start_time, spec)`
/// segments covering `[0, inf)`. All closed-form analysis in this crate
/// assumes constant rates; schedules exist for forward simulation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    segments: Vec<(f64, NoiseSpec)>,
}

impl NoiseSchedule {
    /// A schedule that never changes.
    pub fn constant(spec: NoiseSpec) -> Self {
        NoiseSchedule {
            segments: vec![(0.0, spec)],
        }
    }

    pub fn new(segments: Vec<(f64, NoiseSpec)>) -> Result<Self, NoiseError> {
        let starts_at_zero = segments.first().map(|s| s.0 == 0.0).unwrap_or(false);
        let increasing = segments.windows(2).all(|w| w[0].0 < w[1].0);
        let finite = segments.iter().all(|s| s.0.is_finite());
        if !starts_at_zero || !increasing || !finite {
            return Err(NoiseError::InvalidSchedule);
        }
        Ok(NoiseSchedule { segments })
    }

    /// The active spec at time `t` (the last segment whose start is <= t).
    pub fn at(&self, t: f64) -> NoiseSpec {
        let idx = self
            .segments
            .partition_point(|&(start, _)| start <= t)
            .saturating_sub(1);
        self.segments[idx].1
    }

    pub fn segments(&self) -> &[(f64, NoiseSpec)] {
        &self.segments
    }
}

pub mod rng {
    //! Deterministic stream splitting for parallel runs.

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A counter-based generator: one master seed, one independent stream
    /// per index. Replicas drawn from distinct indices are statistically
    /// independent and bitwise reproducible regardless of scheduling.
    pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(index);
        r
    }
}

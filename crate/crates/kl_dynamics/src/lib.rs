//! KL-anchored variants of the group-normalized flow.
//!
//! A divergence penalty toward a reference policy adds a restoring drift
//! on top of the reward-driven dynamics. Two penalty shapes are
//! implemented, named by what they anchor:
//!
//! * `two_class` penalizes only the aggregate bad mass. The bad-mass rate
//!   gains `-beta p(1-p)(l - l_ref)` in logit `l`, and the within-block
//!   shapes are untouched.
//! * `full_reverse` penalizes the whole distribution against a reference
//!   split into the same blocks. The logit gap is shifted by
//!   `-KL(y||y_ref) + KL(z||z_ref)`, and each block feels an independent
//!   replicator pull toward its reference shape.
//!
//! (Both conventions for naming the divergence direction appear in the
//! literature; the two drifts here are exactly the forms stated above,
//! whatever the label.)
//!
//! With any positive anchoring strength the flow acquires a unique
//! interior rest point for frozen shapes: the anchor balances the reward
//! drift, turning the hard collapse toward a vertex into a stable interior
//! equilibrium. The solver, its stability check, and the strong/weak
//! anchoring asymptotics live here.

use meanfield::{coupled_drift, MeanfieldError};
pub use meanfield::BlockDrift;
use noise_model::{reward_stats, NoiseError, NoiseSpec};
use serde::{Deserialize, Serialize};
use simplex_core::{kl_divergence, BlockState, ProbVector, SimplexError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KlError {
    #[error("anchoring strength must be a finite nonnegative number, got {value}")]
    InvalidStrength { value: f64 },
    #[error("reference mass must lie strictly inside (0, 1), got {value}")]
    ReferenceNotInterior { value: f64 },
    #[error("state mass must lie strictly inside (0, 1), got {value}")]
    StateNotInterior { value: f64 },
    #[error("full_reverse mode needs strictly positive reference entries; {block} entry {index} is not")]
    SupportViolation { block: &'static str, index: usize },
    #[error("no interior fixed point exists at beta = 0")]
    NoFixedPoint,
    #[error("collision mass {name} must lie in (0, 1], got {value}")]
    InvalidCollisionMass { name: &'static str, value: f64 },
    #[error("learning rate must be a finite positive number, got {value}")]
    InvalidLearningRate { value: f64 },
    #[error("fixed-point residual does not change sign over the logit bracket")]
    NoBracket,
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Meanfield(#[from] MeanfieldError),
}

pub type Result<T> = std::result::Result<T, KlError>;

/// Which part of the policy the divergence penalty anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    TwoClass,
    FullReverse,
}

/// Anchoring strength and reference policy for the regularized flow.
#[derive(Debug, Clone, PartialEq)]
pub struct KlConfig {
    beta: f64,
    p_ref: f64,
    y_ref: ProbVector,
    z_ref: ProbVector,
    mode: KlMode,
}

impl KlConfig {
    pub fn new(
        beta: f64,
        p_ref: f64,
        y_ref: ProbVector,
        z_ref: ProbVector,
        mode: KlMode,
    ) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(KlError::InvalidStrength { value: beta });
        }
        if !(p_ref > 0.0 && p_ref < 1.0) {
            return Err(KlError::ReferenceNotInterior { value: p_ref });
        }
        if mode == KlMode::FullReverse {
            for (block, shape) in [("good", &y_ref), ("bad", &z_ref)] {
                if let Some(index) = shape.iter().position(|&v| !(v > 0.0)) {
                    return Err(KlError::SupportViolation { block, index });
                }
            }
        }
        Ok(KlConfig {
            beta,
            p_ref,
            y_ref,
            z_ref,
            mode,
        })
    }

    /// Aggregate-only anchoring with uniform placeholder shapes.
    pub fn two_class(beta: f64, p_ref: f64, k: usize, m: usize) -> Result<Self> {
        KlConfig::new(
            beta,
            p_ref,
            ProbVector::uniform(k)?,
            ProbVector::uniform(m)?,
            KlMode::TwoClass,
        )
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p_ref(&self) -> f64 {
        self.p_ref
    }

    /// Log-odds of the reference mass.
    pub fn logit_ref(&self) -> f64 {
        (self.p_ref / (1.0 - self.p_ref)).ln()
    }

    pub fn y_ref(&self) -> &ProbVector {
        &self.y_ref
    }

    pub fn z_ref(&self) -> &ProbVector {
        &self.z_ref
    }

    pub fn mode(&self) -> KlMode {
        self.mode
    }
}

fn check_dims(state: &BlockState, cfg: &KlConfig) -> Result<()> {
    for (have, want) in [
        (state.good_shape().dim(), cfg.y_ref.dim()),
        (state.bad_shape().dim(), cfg.z_ref.dim()),
    ] {
        if have != want {
            return Err(SimplexError::DimensionMismatch {
                expected: want,
                got: have,
            }
            .into());
        }
    }
    Ok(())
}

/// Replicator pull of one block toward its reference shape:
/// `d s_j = -beta s_j (log(s_j / ref_j) - KL(s || ref))`. Entries with no
/// mass stay at zero, and the components sum to zero.
fn block_pull(shape: &ProbVector, reference: &ProbVector, beta: f64) -> Result<Vec<f64>> {
    let kl = kl_divergence(shape, reference)?;
    Ok(shape
        .iter()
        .zip(reference.iter())
        .map(|(&s, &r)| {
            if s <= 0.0 {
                0.0
            } else {
                -beta * s * ((s / r).ln() - kl)
            }
        })
        .collect())
}

/// The anchoring drift alone. In `two_class` mode only the bad mass
/// moves; in `full_reverse` mode the logit gap is corrected by the
/// within-block divergences and both shapes feel replicator pulls toward
/// their references.
pub fn kl_drift(state: &BlockState, cfg: &KlConfig) -> Result<BlockDrift> {
    check_dims(state, cfg)?;
    let p = state.bad_mass();
    if !(p > 0.0 && p < 1.0) {
        return Err(KlError::StateNotInterior { value: p });
    }
    let logit = (p / (1.0 - p)).ln();
    let k = state.good_shape().dim();
    let m = state.bad_shape().dim();
    match cfg.mode {
        KlMode::TwoClass => Ok(BlockDrift {
            dp: -cfg.beta * p * (1.0 - p) * (logit - cfg.logit_ref()),
            dy: vec![0.0; k],
            dz: vec![0.0; m],
        }),
        KlMode::FullReverse => {
            let kl_good = kl_divergence(state.good_shape(), &cfg.y_ref)?;
            let kl_bad = kl_divergence(state.bad_shape(), &cfg.z_ref)?;
            let gap = logit - cfg.logit_ref() - kl_good + kl_bad;
            Ok(BlockDrift {
                dp: -cfg.beta * p * (1.0 - p) * gap,
                dy: block_pull(state.good_shape(), &cfg.y_ref, cfg.beta)?,
                dz: block_pull(state.bad_shape(), &cfg.z_ref, cfg.beta)?,
            })
        }
    }
}

/// Reward-driven drift plus the anchoring drift, componentwise.
pub fn regularized_drift(
    state: &BlockState,
    spec: &NoiseSpec,
    eta: f64,
    cfg: &KlConfig,
) -> Result<BlockDrift> {
    let reward = coupled_drift(state, spec, eta)?;
    let anchor = kl_drift(state, cfg)?;
    Ok(BlockDrift {
        dp: reward.dp + anchor.dp,
        dy: reward
            .dy
            .iter()
            .zip(&anchor.dy)
            .map(|(a, b)| a + b)
            .collect(),
        dz: reward
            .dz
            .iter()
            .zip(&anchor.dz)
            .map(|(a, b)| a + b)
            .collect(),
    })
}

fn check_scalar_inputs(eta: f64, s2: f64, t2: f64) -> Result<()> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(KlError::InvalidLearningRate { value: eta });
    }
    for (name, value) in [("s2", s2), ("t2", t2)] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(KlError::InvalidCollisionMass { name, value });
        }
    }
    Ok(())
}

/// Fixed-point residual in logit coordinates for frozen shapes:
/// `R(l) = beta (l - l_ref) + eta (J / sigma) p(1-p) (s2 + t2)` with
/// `p = sigmoid(l)`. The bad-mass rate is `-p(1-p) R(l)`, so roots of R
/// are rest points.
fn residual(logit: f64, spec: &NoiseSpec, eta: f64, cfg: &KlConfig, c2: f64) -> f64 {
    let p = 1.0 / (1.0 + (-logit).exp());
    let stats = reward_stats(spec, p).expect("sigmoid output is a probability");
    cfg.beta * (logit - cfg.logit_ref()) + eta * stats.gap * p * (1.0 - p) * c2
}

/// The unique interior rest mass of the regularized flow for frozen
/// shapes with collision masses `s2`, `t2`. Solved by bisection on the
/// monotone logit residual over `l_ref +- 40`, refined to machine width.
/// The root sits below `p_ref` for informative verifiers, at `p_ref` for
/// blind ones, above for adversarial ones.
pub fn interior_fixed_point(
    spec: &NoiseSpec,
    eta: f64,
    cfg: &KlConfig,
    s2: f64,
    t2: f64,
) -> Result<f64> {
    check_scalar_inputs(eta, s2, t2)?;
    if cfg.beta == 0.0 {
        return Err(KlError::NoFixedPoint);
    }
    if spec.youden() == 0.0 {
        // The reward term vanishes identically; the anchor alone pins the
        // mass at the reference, exactly.
        return Ok(cfg.p_ref);
    }
    let c2 = s2 + t2;
    let (mut lo, mut hi) = (cfg.logit_ref() - 40.0, cfg.logit_ref() + 40.0);
    if !(residual(lo, spec, eta, cfg, c2) < 0.0 && residual(hi, spec, eta, cfg, c2) > 0.0) {
        return Err(KlError::NoBracket);
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if residual(mid, spec, eta, cfg, c2) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(1.0 / (1.0 + (-0.5 * (lo + hi)).exp()))
}

/// Analytic derivative of the frozen-shape bad-mass rate at a rest point.
/// Negative for every positive anchoring strength: the interior
/// equilibrium is asymptotically stable.
pub fn fixed_point_stability(
    p_star: f64,
    spec: &NoiseSpec,
    eta: f64,
    cfg: &KlConfig,
    s2: f64,
    t2: f64,
) -> Result<f64> {
    check_scalar_inputs(eta, s2, t2)?;
    if !(p_star > 0.0 && p_star < 1.0) {
        return Err(KlError::StateNotInterior { value: p_star });
    }
    let c2 = s2 + t2;
    let p = p_star;
    let g = 1.0 - p;
    let logit = (p / g).ln();
    let anchor_part = -cfg.beta * ((1.0 - 2.0 * p) * (logit - cfg.logit_ref()) + 1.0);
    let stats = reward_stats(spec, p)?;
    if stats.degenerate {
        return Ok(anchor_part);
    }
    let j = spec.youden();
    // d/dp [ (p(1-p))^2 / sigma ] with sigma' = -J (1 - 2q) / (2 sigma).
    let reward_part = -eta * c2 * j
        * (2.0 * p * g * (1.0 - 2.0 * p) / stats.sigma
            + j * (p * g).powi(2) * (1.0 - 2.0 * stats.q) / (2.0 * stats.sigma.powi(3)));
    Ok(reward_part + anchor_part)
}

/// First-order strong-anchoring location of the rest mass:
/// `p_ref - (eta J / beta) [p_ref(1-p_ref)]^2 / sigma(p_ref) (s2 + t2)`.
/// The true root approaches this at second order in `1/beta`.
pub fn strong_kl_prediction(
    spec: &NoiseSpec,
    eta: f64,
    cfg: &KlConfig,
    s2: f64,
    t2: f64,
) -> Result<f64> {
    check_scalar_inputs(eta, s2, t2)?;
    if cfg.beta == 0.0 {
        return Err(KlError::NoFixedPoint);
    }
    let stats = reward_stats(spec, cfg.p_ref)?;
    let pq = cfg.p_ref * (1.0 - cfg.p_ref);
    Ok(cfg.p_ref - eta * stats.gap / cfg.beta * pq * pq * (s2 + t2))
}

/// Weak-anchoring location for adversarial verifiers:
/// `1 - p_star ~ (beta / c) log(c / beta)` with
/// `c = -eta J (s2 + t2) / sigma(1)`. `None` when the asymptotic does not
/// apply (non-adversarial verifier, degenerate variance at the bad
/// vertex, or anchoring at least as strong as `c`).
pub fn weak_kl_prediction(
    spec: &NoiseSpec,
    eta: f64,
    cfg: &KlConfig,
    s2: f64,
    t2: f64,
) -> Result<Option<f64>> {
    check_scalar_inputs(eta, s2, t2)?;
    if cfg.beta == 0.0 {
        return Err(KlError::NoFixedPoint);
    }
    let j = spec.youden();
    if j >= 0.0 {
        return Ok(None);
    }
    let stats = reward_stats(spec, 1.0)?;
    if stats.degenerate {
        return Ok(None);
    }
    let c = -eta * j * (s2 + t2) / stats.sigma;
    if cfg.beta >= c {
        return Ok(None);
    }
    Ok(Some(1.0 - cfg.beta / c * (c / cfg.beta).ln()))
}

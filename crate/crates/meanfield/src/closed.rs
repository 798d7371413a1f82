//! Closed-form solutions and analytic bounds: the noise-free two-class
//! trajectory, the small-heterogeneity logit expansion, logit envelopes,
//! hitting-time brackets, and the within-block shape closed forms.

use crate::{MeanfieldError, Result};
use noise_model::{NoiseError, NoiseSpec};
use simplex_core::{BlockState, ProbVector};

/// Exact trajectory of the noise-free two-class scalar law
/// `dp/dt = -eta [p (1 - p)]^{3/2}`:
///
/// `p(t) = 1/2 + (1/2) x / sqrt(4 + x^2)` with
/// `x = phi(p0) - eta t / 2` and `phi(p) = (2p - 1) / sqrt(p (1 - p))`.
///
/// The boundaries are absorbing: `p0` in {0, 1} returns `p0` forever.
pub fn closed_form_p(p0: f64, eta: f64, t: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&p0) && p0.is_finite(),
        "p0 must lie in [0, 1], got {p0}"
    );
    assert!(eta > 0.0 && eta.is_finite(), "eta must be positive, got {eta}");
    assert!(t >= 0.0 && t.is_finite(), "t must be nonnegative, got {t}");
    if p0 == 0.0 || p0 == 1.0 {
        return p0;
    }
    let phi = (2.0 * p0 - 1.0) / (p0 * (1.0 - p0)).sqrt();
    let x = phi - eta * t / 2.0;
    0.5 + 0.5 * x / (4.0 + x * x).sqrt()
}

/// A predicted logit from the small-heterogeneity expansion, plus whether
/// the requested internal time is inside the expansion's validity regime.
/// Out-of-regime predictions are advisory only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionPrediction {
    pub logit: f64,
    pub in_regime: bool,
}

/// Second-order logit expansion in internal time for nearly uniform
/// shapes. With `zeta0 = s2(0) - 1/K` and `xi0 = t2(0) - 1/M`:
///
/// `L(tau) = L(0) - sign(J) [ (1/K + 1/M) tau
///            + (K/2) zeta0 (e^{2 tau / K} - 1)
///            + (M/2) xi0 (1 - e^{-2 tau / M}) ]`
///
/// The regime flag requires `sqrt(zeta0) e^{tau/K} <= 1/2` and
/// `sqrt(xi0) <= 1/2`.
pub fn heterogeneity_expansion(
    initial: &BlockState,
    k: usize,
    m: usize,
    tau: f64,
    spec: &NoiseSpec,
) -> Result<ExpansionPrediction> {
    if initial.good_shape().dim() != k || initial.bad_shape().dim() != m {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!(
                "shape dims ({}, {}) do not match requested K = {k}, M = {m}",
                initial.good_shape().dim(),
                initial.bad_shape().dim()
            ),
        });
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!("tau must be nonnegative and finite, got {tau}"),
        });
    }
    let j = spec.youden();
    if j == 0.0 {
        return Err(NoiseError::ZeroDiscrimination.into());
    }
    let p = initial.bad_mass();
    if p <= 0.0 || p >= 1.0 {
        return Err(MeanfieldError::BoundaryState { p });
    }
    let kf = k as f64;
    let mf = m as f64;
    let zeta0 = (initial.s2() - 1.0 / kf).max(0.0);
    let xi0 = (initial.t2() - 1.0 / mf).max(0.0);
    let l0 = (p / (1.0 - p)).ln();
    let drift = (1.0 / kf + 1.0 / mf) * tau
        + kf / 2.0 * zeta0 * ((2.0 * tau / kf).exp() - 1.0)
        + mf / 2.0 * xi0 * (1.0 - (-2.0 * tau / mf).exp());
    let in_regime = zeta0.sqrt() * (tau / kf).exp() <= 0.5 && xi0.sqrt() <= 0.5;
    Ok(ExpansionPrediction {
        logit: l0 - j.signum() * drift,
        in_regime,
    })
}

/// Two-sided bounds on the bad mass as a function of internal time, for
/// the informative branch (`J > 0`): the geometry factor `s2 + t2` is
/// pinched between `1/K + 1/M` and 2, so
///
/// `1 / (1 + r e^{2 tau}) <= p(tau) <= 1 / (1 + r e^{(1/K + 1/M) tau})`
///
/// with `r = (1 - p0) / p0`. For K = M = 1 the bounds coincide.
pub fn logit_envelopes(p0: f64, k: usize, m: usize, tau: f64) -> Result<(f64, f64)> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(MeanfieldError::BoundaryState { p: p0 });
    }
    if k == 0 || m == 0 {
        return Err(simplex_core::SimplexError::EmptyBlock.into());
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!("tau must be nonnegative and finite, got {tau}"),
        });
    }
    let r = (1.0 - p0) / p0;
    let slow = 1.0 / k as f64 + 1.0 / m as f64;
    let lower = 1.0 / (1.0 + r * (2.0 * tau).exp());
    let upper = 1.0 / (1.0 + r * (slow * tau).exp());
    Ok((lower, upper))
}

/// Internal-time window in which the bad mass first reaches `p_star` from
/// `p0` on the informative branch. With
/// `Lambda = log(p0 (1 - p_star) / ((1 - p0) p_star))` the crossing lies
/// in `[Lambda / 2, Lambda / (1/K + 1/M)]`.
pub fn hitting_time_bracket(p0: f64, p_star: f64, k: usize, m: usize) -> Result<(f64, f64)> {
    if k == 0 || m == 0 {
        return Err(simplex_core::SimplexError::EmptyBlock.into());
    }
    if !(p_star > 0.0 && p_star < p0 && p0 < 1.0) {
        return Err(MeanfieldError::HittingOrder { p0, p_star });
    }
    let lambda = (p0 * (1.0 - p_star) / ((1.0 - p0) * p_star)).ln();
    let slow = 1.0 / k as f64 + 1.0 / m as f64;
    Ok((lambda / 2.0, lambda / slow))
}

fn shape_closed_form(q: &ProbVector, i: f64, sign: f64) -> Result<ProbVector> {
    if !(i >= 0.0) || !i.is_finite() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!("I must be nonnegative and finite, got {i}"),
        });
    }
    if sign < 0.0 {
        let q_max = q.iter().cloned().fold(0.0, f64::max);
        let limit = 1.0 / q_max;
        if i >= limit {
            return Err(MeanfieldError::SingularParameter { i, limit });
        }
    }
    let w: Vec<f64> = q.iter().map(|&qj| qj / (1.0 + sign * i * qj)).collect();
    Ok(ProbVector::sanitized(w)?)
}

/// Within-good-block shape as a function of the parameter `I`:
/// `y_j(I)` proportional to `q_j / (1 - I q_j)` for initial shape `q`.
/// Valid for `0 <= I < 1 / max_j q_j`; as `I` approaches the singular
/// value, mass concentrates on the initial maximizer.
pub fn inner_good_closed_form(q: &ProbVector, i: f64) -> Result<ProbVector> {
    shape_closed_form(q, i, -1.0)
}

/// Within-bad-block shape: `z_j(I)` proportional to `q_j / (1 + I q_j)`,
/// defined for all `I >= 0` and converging to uniform.
pub fn inner_bad_closed_form(q: &ProbVector, i: f64) -> Result<ProbVector> {
    shape_closed_form(q, i, 1.0)
}

/// The internal-time coordinate of the good-block parameter:
/// `tau(I) = -sum_j log(1 - I q_j)`, strictly increasing from 0 and
/// unbounded as `I` approaches the singularity.
fn good_tau_of_i(q: &ProbVector, i: f64) -> f64 {
    -q.iter().map(|&qj| (1.0 - i * qj).ln()).sum::<f64>()
}

fn bad_tau_of_i(q: &ProbVector, i: f64) -> f64 {
    q.iter().map(|&qj| (1.0 + i * qj).ln()).sum::<f64>()
}

fn invert_monotone(
    target: f64,
    mut hi: f64,
    grow: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> f64,
) -> f64 {
    // Expand the bracket until f(hi) >= target, then bisect. The
    // expansion is capped: beyond it the map has saturated in floats and
    // the best representable preimage is returned.
    let mut lo = 0.0;
    let mut guard = 0;
    while f(hi) < target && guard < 200 {
        lo = hi;
        hi = grow(hi);
        guard += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Good-block shape at internal time `tau`, via inversion of the
/// `tau(I)` map and the closed form.
pub fn inner_good_at_internal_time(q: &ProbVector, tau: f64) -> Result<ProbVector> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!("tau must be nonnegative and finite, got {tau}"),
        });
    }
    let q_max = q.iter().cloned().fold(0.0, f64::max);
    let limit = 1.0 / q_max;
    let i = invert_monotone(
        tau,
        limit * 0.5,
        |hi| hi + 0.5 * (limit - hi),
        |i| good_tau_of_i(q, i),
    );
    inner_good_closed_form(q, i.min(limit * (1.0 - 1e-15)))
}

/// Bad-block shape at internal time `tau`.
pub fn inner_bad_at_internal_time(q: &ProbVector, tau: f64) -> Result<ProbVector> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!("tau must be nonnegative and finite, got {tau}"),
        });
    }
    let i = invert_monotone(tau, 1.0, |hi| hi * 2.0, |i| bad_tau_of_i(q, i));
    inner_bad_closed_form(q, i)
}

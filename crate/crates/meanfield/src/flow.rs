//! The coupled mean-field flow and its integrators.

use crate::{analysis, MeanfieldError, Result};
use noise_model::{NoiseError, NoiseSpec};
use serde::{Deserialize, Serialize};
use simplex_core::{BlockState, ProbVector};

/// Bad mass is clamped to this band during integration; the true dynamics
/// are absorbing at the boundary and floats need breathing room.
const P_CLAMP: f64 = 1e-12;
/// Crossing this band counts as convergence to an absorbing state.
const P_ABSORB: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

/// Integrator settings. `step` is the fixed step for `Rk4Fixed` and the
/// initial step for `Rk45Adaptive`; `abs_tol`/`rel_tol` apply to the
/// adaptive method only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub eta: f64,
    pub step: f64,
    pub horizon: f64,
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl OdeConfig {
    pub fn rk4(eta: f64, step: f64, horizon: f64) -> Self {
        OdeConfig {
            eta,
            step,
            horizon,
            method: Method::Rk4Fixed,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
        }
    }

    pub fn rk45(eta: f64, horizon: f64, abs_tol: f64, rel_tol: f64) -> Self {
        OdeConfig {
            eta,
            step: (horizon / 100.0).min(1e-2),
            horizon,
            method: Method::Rk45Adaptive,
            abs_tol,
            rel_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(MeanfieldError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad("eta must be positive and finite");
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad("step must be positive and finite");
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("horizon must be positive and finite");
        }
        if self.step > self.horizon {
            return bad("step must not exceed horizon");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol < 1e-3) {
            return bad("abs_tol must lie in (0, 1e-3)");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-3) {
            return bad("rel_tol must lie in (0, 1e-3)");
        }
        Ok(())
    }
}

/// Time derivative of a block state. The shape components are tangent:
/// they sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDrift {
    pub dp: f64,
    pub dy: Vec<f64>,
    pub dz: Vec<f64>,
}

/// Raw drift on unvalidated coordinates; shared by the public drift and
/// the integrator stages (which pass intermediate, not-quite-normalized
/// states).
fn drift_raw(p: f64, y: &[f64], z: &[f64], spec: &NoiseSpec, eta: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let j = spec.youden();
    let zeros = || (0.0, vec![0.0; y.len()], vec![0.0; z.len()]);
    if j == 0.0 || p <= 0.0 || p >= 1.0 {
        return zeros();
    }
    let q = ((1.0 - spec.delta_fn()) - j * p).clamp(0.0, 1.0);
    let var = q * (1.0 - q);
    if var <= 0.0 {
        return zeros();
    }
    let sigma = var.sqrt();
    let s2: f64 = y.iter().map(|v| v * v).sum();
    let t2: f64 = z.iter().map(|v| v * v).sum();
    let pq = p * (1.0 - p);
    let rate = eta * j / sigma;
    let kappa = rate * pq;
    let dp = -rate * pq * pq * (s2 + t2);
    let dy = y.iter().map(|&v| kappa * v * (v - s2)).collect();
    let dz = z.iter().map(|&v| -kappa * v * (v - t2)).collect();
    (dp, dy, dz)
}

/// The coupled drift at a block state. Zero for a blind verifier (`J = 0`)
/// and at the absorbing boundaries; on the interior the sign of `dp` is
/// opposite to the sign of `J`.
pub fn coupled_drift(state: &BlockState, spec: &NoiseSpec, eta: f64) -> Result<BlockDrift> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!("eta must be positive and finite, got {eta}"),
        });
    }
    let (dp, dy, dz) = drift_raw(
        state.bad_mass(),
        state.good_shape().entries(),
        state.bad_shape().entries(),
        spec,
        eta,
    );
    Ok(BlockDrift { dp, dy, dz })
}

/// The two-class scalar law for a single Bernoulli logit:
/// `dp/dt = -eta (J / sigma) [p (1 - p)]^2`. The coupled flow restricted
/// to K = M = 1 runs at exactly twice this rate, because its geometry
/// factor `s2 + t2` equals 2.
pub fn two_class_drift(p: f64, spec: &NoiseSpec, eta: f64) -> f64 {
    let j = spec.youden();
    if j == 0.0 || p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let q = ((1.0 - spec.delta_fn()) - j * p).clamp(0.0, 1.0);
    let var = q * (1.0 - q);
    if var <= 0.0 {
        return 0.0;
    }
    let pq = p * (1.0 - p);
    -eta * j / var.sqrt() * pq * pq
}

/// One sampled point of an integrated trajectory, with diagnostics:
/// collision probabilities of the shapes, the bad-mass logit, cumulative
/// internal time, the Lyapunov value, and the geometry factor `s2 + t2`.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: BlockState,
    pub s2: f64,
    pub t2: f64,
    pub logit: f64,
    pub tau: f64,
    pub lyapunov: f64,
    pub c_geo: f64,
}

/// An integrated trajectory. `converged` is set when the bad mass entered
/// the absorbing band before the horizon.
#[derive(Debug, Clone)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
    pub converged: bool,
}

impl Trajectory {
    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory is never empty")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|pt| pt.t)
    }

    pub fn bad_mass(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|pt| pt.state.bad_mass())
    }

    /// Bad mass at time `t` by linear interpolation between samples.
    /// `None` outside the sampled range.
    pub fn mass_at_time(&self, t: f64) -> Option<f64> {
        interp_by(&self.points, |pt| pt.t, |pt| pt.state.bad_mass(), t)
    }

    /// Logit at internal time `tau` by linear interpolation between
    /// samples. `None` outside the sampled range.
    pub fn logit_at_tau(&self, tau: f64) -> Option<f64> {
        interp_by(&self.points, |pt| pt.tau, |pt| pt.logit, tau)
    }

    /// Internal time at the first sample where the bad mass is at or below
    /// `p_star`. `None` if the trajectory never gets there.
    pub fn tau_at_first_crossing(&self, p_star: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|pt| pt.state.bad_mass() <= p_star)
            .map(|pt| pt.tau)
    }
}

fn interp_by<T>(
    points: &[T],
    x: impl Fn(&T) -> f64,
    y: impl Fn(&T) -> f64,
    target: f64,
) -> Option<f64> {
    if points.is_empty() || target < x(&points[0]) {
        return None;
    }
    for w in points.windows(2) {
        let (x0, x1) = (x(&w[0]), x(&w[1]));
        if target <= x1 {
            if x1 == x0 {
                return Some(y(&w[0]));
            }
            let frac = (target - x0) / (x1 - x0);
            return Some(y(&w[0]) + frac * (y(&w[1]) - y(&w[0])));
        }
    }
    let last = points.last().unwrap();
    if target == x(last) {
        return Some(y(last));
    }
    None
}

struct Raw {
    p: f64,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Raw {
    fn stage(&self, h: f64, d: &(f64, Vec<f64>, Vec<f64>)) -> Raw {
        Raw {
            p: self.p + h * d.0,
            y: self.y.iter().zip(&d.1).map(|(a, b)| a + h * b).collect(),
            z: self.z.iter().zip(&d.2).map(|(a, b)| a + h * b).collect(),
        }
    }

    fn project(&mut self) -> Result<()> {
        self.p = self.p.clamp(P_CLAMP, 1.0 - P_CLAMP);
        self.y = ProbVector::sanitized(self.y.clone())?.entries().to_vec();
        self.z = ProbVector::sanitized(self.z.clone())?.entries().to_vec();
        Ok(())
    }

    fn to_state(&self) -> Result<BlockState> {
        Ok(BlockState::new(
            self.p,
            ProbVector::sanitized(self.y.clone())?,
            ProbVector::sanitized(self.z.clone())?,
        )?)
    }
}

fn rk4_step(s: &Raw, spec: &NoiseSpec, eta: f64, h: f64) -> Raw {
    let f = |r: &Raw| drift_raw(r.p, &r.y, &r.z, spec, eta);
    let k1 = f(s);
    let k2 = f(&s.stage(h / 2.0, &k1));
    let k3 = f(&s.stage(h / 2.0, &k2));
    let k4 = f(&s.stage(h, &k3));
    let combine =
        |base: f64, a: f64, b: f64, c: f64, d: f64| base + h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
    Raw {
        p: combine(s.p, k1.0, k2.0, k3.0, k4.0),
        y: (0..s.y.len())
            .map(|i| combine(s.y[i], k1.1[i], k2.1[i], k3.1[i], k4.1[i]))
            .collect(),
        z: (0..s.z.len())
            .map(|i| combine(s.z[i], k1.2[i], k2.2[i], k3.2[i], k4.2[i]))
            .collect(),
    }
}

// Dormand-Prince 5(4) tableau.
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn flatten(r: &Raw) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + r.y.len() + r.z.len());
    v.push(r.p);
    v.extend_from_slice(&r.y);
    v.extend_from_slice(&r.z);
    v
}

fn unflatten(v: &[f64], k: usize, m: usize) -> Raw {
    Raw {
        p: v[0],
        y: v[1..1 + k].to_vec(),
        z: v[1 + k..1 + k + m].to_vec(),
    }
}

/// One trial Dormand-Prince step. Returns the fifth-order proposal and the
/// scaled error estimate.
fn dp_trial(v: &[f64], k: usize, m: usize, spec: &NoiseSpec, eta: f64, h: f64, cfg: &OdeConfig) -> (Vec<f64>, f64) {
    let f = |v: &[f64]| {
        let r = unflatten(v, k, m);
        let (dp, dy, dz) = drift_raw(r.p, &r.y, &r.z, spec, eta);
        flatten(&Raw { p: dp, y: dy, z: dz })
    };
    let n = v.len();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(7);
    stages.push(f(v));
    for row in 0..6 {
        let mut probe = v.to_vec();
        for (s, coeff) in DP_A[row].iter().enumerate().take(row + 1) {
            if *coeff != 0.0 {
                for i in 0..n {
                    probe[i] += h * coeff * stages[s][i];
                }
            }
        }
        stages.push(f(&probe));
    }
    let mut fifth = v.to_vec();
    let mut fourth = v.to_vec();
    for s in 0..7 {
        for i in 0..n {
            fifth[i] += h * DP_B5[s] * stages[s][i];
            fourth[i] += h * DP_B4[s] * stages[s][i];
        }
    }
    let mut err_sq = 0.0;
    for i in 0..n {
        let scale = cfg.abs_tol + cfg.rel_tol * v[i].abs().max(fifth[i].abs());
        let e = (fifth[i] - fourth[i]) / scale;
        err_sq += e * e;
    }
    (fifth, (err_sq / n as f64).sqrt())
}

/// Integrates the coupled flow from `initial` over `cfg.horizon` and
/// attaches per-sample diagnostics. Stops early, with `converged` set,
/// when the bad mass enters the absorbing band at either boundary.
pub fn integrate(initial: &BlockState, spec: &NoiseSpec, cfg: &OdeConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let k = initial.good_shape().dim();
    let m = initial.bad_shape().dim();
    let mut raw = Raw {
        p: initial.bad_mass(),
        y: initial.good_shape().entries().to_vec(),
        z: initial.bad_shape().entries().to_vec(),
    };
    let mut samples: Vec<(f64, BlockState)> = vec![(0.0, raw.to_state()?)];
    let mut converged = in_absorbing_band(raw.p);
    let mut t = 0.0;
    let end = cfg.horizon;

    match cfg.method {
        Method::Rk4Fixed => {
            while !converged && t < end {
                let remaining = end - t;
                let h = cfg.step.min(remaining);
                raw = rk4_step(&raw, spec, cfg.eta, h);
                raw.project()?;
                // Snap the clipped final step onto the horizon so samples
                // carry the exact end time despite accumulation error.
                t = if h >= remaining { end } else { t + h };
                converged = in_absorbing_band(raw.p);
                samples.push((t, raw.to_state()?));
            }
        }
        Method::Rk45Adaptive => {
            let mut h = cfg.step.min(end);
            while !converged && t < end {
                let remaining = end - t;
                h = h.min(remaining);
                // A vanishing step is underflow only when driven there by
                // error control; the last sliver before the horizon is not.
                if h < 1e-14 * t.abs().max(1.0) && h < remaining {
                    return Err(MeanfieldError::StepUnderflow { t, h });
                }
                let flat = flatten(&raw);
                let (proposal, err) = dp_trial(&flat, k, m, spec, cfg.eta, h, cfg);
                if err <= 1.0 {
                    raw = unflatten(&proposal, k, m);
                    raw.project()?;
                    t = if h >= remaining { end } else { t + h };
                    converged = in_absorbing_band(raw.p);
                    samples.push((t, raw.to_state()?));
                }
                let factor = if err > 0.0 {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h *= factor;
            }
        }
    }
    build_trajectory(samples, spec, cfg.eta, converged)
}

fn in_absorbing_band(p: f64) -> bool {
    p <= P_ABSORB || p >= 1.0 - P_ABSORB
}

fn build_trajectory(
    samples: Vec<(f64, BlockState)>,
    spec: &NoiseSpec,
    eta: f64,
    converged: bool,
) -> Result<Trajectory> {
    let times: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let masses: Vec<f64> = samples.iter().map(|s| s.1.bad_mass()).collect();
    let taus = tau_profile(&times, &masses, spec, eta)?;

    let j = spec.youden();
    let mut lyap = Vec::with_capacity(samples.len());
    if j == 0.0 {
        lyap.resize(samples.len(), 0.0);
    } else {
        let mut f = analysis::lyapunov_value(&samples[0].1, spec);
        lyap.push(f);
        for w in masses.windows(2) {
            let (s0, s1) = (1.0 - w[0], 1.0 - w[1]);
            let d0 = analysis::lyapunov_density(s0, spec);
            let d1 = analysis::lyapunov_density(s1, spec);
            f += 0.5 * (d0 + d1) * (s1 - s0);
            lyap.push(f);
        }
    }

    let points = samples
        .into_iter()
        .zip(taus)
        .zip(lyap)
        .map(|(((t, state), tau), lyapunov)| {
            let s2 = state.s2();
            let t2 = state.t2();
            let p = state.bad_mass().clamp(P_CLAMP, 1.0 - P_CLAMP);
            TrajectoryPoint {
                t,
                logit: (p / (1.0 - p)).ln(),
                s2,
                t2,
                c_geo: s2 + t2,
                tau,
                lyapunov,
                state,
            }
        })
        .collect();
    Ok(Trajectory { points, converged })
}

/// Cumulative internal time along a sampled bad-mass path:
/// `tau(t) = integral of eta |J| p (1 - p) / sigma(p)` by the trapezoid
/// rule on the given samples. For `J = 0` the profile is identically zero.
pub fn tau_profile(times: &[f64], bad_mass: &[f64], spec: &NoiseSpec, eta: f64) -> Result<Vec<f64>> {
    if times.len() != bad_mass.len() {
        return Err(MeanfieldError::InvalidConfig {
            reason: format!(
                "times and bad_mass lengths differ: {} vs {}",
                times.len(),
                bad_mass.len()
            ),
        });
    }
    let j_abs = spec.youden().abs();
    let density = |p: f64| {
        let pq = p * (1.0 - p);
        if pq <= 0.0 || j_abs == 0.0 {
            return 0.0;
        }
        let q = ((1.0 - spec.delta_fn()) - spec.youden() * p).clamp(0.0, 1.0);
        let var = q * (1.0 - q);
        if var <= 0.0 {
            return 0.0;
        }
        eta * j_abs * pq / var.sqrt()
    };
    let mut taus = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    taus.push(0.0);
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        acc += 0.5 * (density(bad_mass[i - 1]) + density(bad_mass[i])) * dt;
        taus.push(acc);
    }
    Ok(taus)
}

/// Internal-time samples aligned with a trajectory. Requires a
/// discriminating verifier; `J = 0` has no internal clock.
pub fn internal_time(traj: &Trajectory, spec: &NoiseSpec, eta: f64) -> Result<Vec<f64>> {
    if spec.youden() == 0.0 {
        return Err(NoiseError::ZeroDiscrimination.into());
    }
    let times: Vec<f64> = traj.times().collect();
    let masses: Vec<f64> = traj.bad_mass().collect();
    tau_profile(&times, &masses, spec, eta)
}

/// Fixed-step RK4 integration of the scalar two-class law. Returns
/// `(t, p)` samples; stops early inside the absorbing band.
pub fn integrate_two_class(
    p0: f64,
    spec: &NoiseSpec,
    cfg: &OdeConfig,
) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&p0) || !p0.is_finite() {
        return Err(NoiseError::InvalidProbability { value: p0 }.into());
    }
    let mut samples = vec![(0.0, p0)];
    let mut p = p0;
    let mut t = 0.0;
    let end = cfg.horizon;
    while !in_absorbing_band(p) && t < end {
        let remaining = end - t;
        let h = cfg.step.min(remaining);
        let k1 = two_class_drift(p, spec, cfg.eta);
        let k2 = two_class_drift(p + h / 2.0 * k1, spec, cfg.eta);
        let k3 = two_class_drift(p + h / 2.0 * k2, spec, cfg.eta);
        let k4 = two_class_drift(p + h * k3, spec, cfg.eta);
        p = (p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(P_CLAMP, 1.0 - P_CLAMP);
        t = if h >= remaining { end } else { t + h };
        samples.push((t, p));
    }
    Ok(samples)
}

//! Locating where the bad-mass drift changes sign along a family of
//! verifiers ordered by discrimination.

use bandit_sim::{SimConfig, SimMode};
use meanfield::OdeConfig;
use noise_model::NoiseSpec;
use rayon::prelude::*;
use simplex_core::{BlockState, ProbVector};

use crate::{Result, SweepError};

/// The symmetric verifier with discrimination `j`: both error rates equal
/// `(1 - j) / 2`.
pub fn symmetric_spec(j: f64) -> Result<NoiseSpec> {
    let delta = (1.0 - j) / 2.0;
    Ok(NoiseSpec::new(delta, delta)?)
}

/// Root of the mean final-minus-initial mass as a function of the scan
/// coordinate, from `(coordinate, shift)` samples. An exact zero wins;
/// otherwise the first adjacent sign change is interpolated linearly.
/// Errors when no sign change exists.
pub fn detect_transition(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(SweepError::InvalidConfig {
            reason: format!("a transition scan needs at least 2 points, got {}", points.len()),
        });
    }
    for &(j, d) in points {
        if !j.is_finite() || !d.is_finite() {
            return Err(SweepError::InvalidConfig {
                reason: format!("non-finite scan sample ({j}, {d})"),
            });
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(SweepError::InvalidConfig {
            reason: "duplicate scan coordinates".into(),
        });
    }
    if let Some(&(j, _)) = sorted.iter().find(|&&(_, d)| d == 0.0) {
        return Ok(j);
    }
    for w in sorted.windows(2) {
        let (ja, da) = w[0];
        let (jb, db) = w[1];
        if da * db < 0.0 {
            return Ok(ja - da * (jb - ja) / (db - da));
        }
    }
    Err(SweepError::NoSignChange)
}

/// Deterministic scan: integrates the flow at each symmetric verifier and
/// reports the final-minus-initial bad mass.
pub fn ode_scan(
    js: &[f64],
    k: usize,
    m: usize,
    p0: f64,
    eta: f64,
    step: f64,
    horizon: f64,
) -> Result<Vec<(f64, f64)>> {
    let initial = BlockState::new(p0, ProbVector::uniform(k)?, ProbVector::uniform(m)?)?;
    js.iter()
        .map(|&j| {
            let spec = symmetric_spec(j)?;
            let cfg = OdeConfig::rk4(eta, step, horizon);
            let traj = meanfield::integrate(&initial, &spec, &cfg)?;
            Ok((j, traj.last().state.bad_mass() - p0))
        })
        .collect()
}

/// Sampled scan: `replicas` independent group runs per symmetric
/// verifier, averaged. Scan point `i` runs on seed `base_seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn sim_scan(
    js: &[f64],
    k: usize,
    m: usize,
    g: usize,
    eta: f64,
    steps: usize,
    replicas: u64,
    base_seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if replicas == 0 {
        return Err(SweepError::InvalidConfig {
            reason: "replicas must be at least 1".into(),
        });
    }
    let p0 = m as f64 / (k + m) as f64;
    let mut flat = vec![(1.0 - p0) / k as f64; k];
    flat.extend(std::iter::repeat(p0 / m as f64).take(m));
    let initial = ProbVector::new(flat)?;

    js.iter()
        .enumerate()
        .map(|(idx, &j)| {
            let spec = symmetric_spec(j)?;
            let mut cfg = SimConfig::new(
                SimMode::Reinforce,
                k,
                m,
                g,
                eta,
                steps,
                base_seed.wrapping_add(idx as u64),
            );
            cfg.record_every = steps.max(1);
            let finals: Vec<f64> = (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let traj = bandit_sim::run_replica(&cfg, &spec, &initial, r)?;
                    Ok(traj.last().state.bad_mass())
                })
                .collect::<Result<_>>()?;
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            Ok((j, mean - p0))
        })
        .collect()
}

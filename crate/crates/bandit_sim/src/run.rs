//! Whole-run driver, the recorded trajectory, and CSV export.

use crate::config::{SimConfig, SimMode};
use crate::diffusion::wright_fisher_step;
use crate::group::truth_labels;
use crate::steps::{grpo_core, masked_softmax, reinforce_core};
use crate::{BanditError, Result};
use noise_model::{reward_stats, rng::substream, NoiseSpec};
use simplex_core::{decompose, BlockState, ProbVector};
use std::io::Write;

/// One recorded sample of a run.
#[derive(Debug, Clone)]
pub struct SimPoint {
    pub step: usize,
    pub state: BlockState,
    /// Bad-mass log odds.
    pub logit: f64,
    /// Share of the producing step's group that hit a clip margin; 0 at
    /// step 0 and in plain mode.
    pub clipped_fraction: f64,
    /// Mean group reward of the producing step; 0 at step 0. The
    /// diffusion surrogate draws no rewards and records the population
    /// mean instead.
    pub reward_mean: f64,
}

/// A recorded run. Points are strictly increasing in step index; the
/// initial state and the final step are always present.
#[derive(Debug, Clone)]
pub struct SimTrajectory {
    points: Vec<SimPoint>,
    pub k: usize,
    pub m: usize,
    pub eta: f64,
    pub seed: u64,
    pub replica: u64,
}

impl SimTrajectory {
    pub fn points(&self) -> &[SimPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &SimPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &SimPoint {
        self.points.last().expect("a run always records something")
    }

    pub fn bad_mass(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|pt| pt.state.bad_mass())
    }

    /// First recorded step index with bad mass at or below `threshold`.
    pub fn first_step_at_or_below(&self, threshold: f64) -> Option<usize> {
        self.points
            .iter()
            .find(|pt| pt.state.bad_mass() <= threshold)
            .map(|pt| pt.step)
    }
}

fn sample_point(
    step: usize,
    policy: &ProbVector,
    k: usize,
    m: usize,
    clipped_fraction: f64,
    reward_mean: f64,
) -> Result<SimPoint> {
    let state = decompose(policy, k, m)?;
    Ok(point_from_state(step, state, clipped_fraction, reward_mean))
}

fn point_from_state(step: usize, state: BlockState, clipped_fraction: f64, reward_mean: f64) -> SimPoint {
    let p = state.bad_mass();
    let logit = (p / (1.0 - p)).ln();
    SimPoint {
        step,
        state,
        logit,
        clipped_fraction,
        reward_mean,
    }
}

fn record_at(cfg: &SimConfig, step: usize) -> bool {
    step % cfg.record_every == 0 || step == cfg.steps
}

/// Runs replica 0; see [`run_replica`].
pub fn run(cfg: &SimConfig, spec: &NoiseSpec, initial: &ProbVector) -> Result<SimTrajectory> {
    run_replica(cfg, spec, initial, 0)
}

/// Runs one replica on its own RNG substream. The same config, spec,
/// initial policy, and replica index reproduce the trajectory bitwise;
/// distinct replicas are statistically independent.
pub fn run_replica(
    cfg: &SimConfig,
    spec: &NoiseSpec,
    initial: &ProbVector,
    replica: u64,
) -> Result<SimTrajectory> {
    cfg.validate()?;
    let d = cfg.k + cfg.m;
    if initial.dim() != d {
        return Err(BanditError::DimensionMismatch {
            dim: initial.dim(),
            expected: d,
        });
    }
    let mut rng = substream(cfg.seed, replica);
    let mut points = Vec::new();
    match cfg.mode {
        SimMode::WrightFisher => {
            let mut state = decompose(initial, cfg.k, cfg.m)?;
            let q0 = reward_stats(spec, state.bad_mass())?.q;
            points.push(point_from_state(0, state.clone(), 0.0, q0));
            for step in 1..=cfg.steps {
                state = wright_fisher_step(&state, spec, cfg, &mut rng, cfg.nu)?;
                if record_at(cfg, step) {
                    let q = reward_stats(spec, state.bad_mass())?.q;
                    points.push(point_from_state(step, state.clone(), 0.0, q));
                }
            }
        }
        SimMode::Reinforce | SimMode::GrpoClipped => {
            let truth = truth_labels(cfg.k, cfg.m);
            let ln_ref: Option<Vec<f64>> = if cfg.beta > 0.0 {
                cfg.reference
                    .as_ref()
                    .map(|r| r.iter().map(|&x| x.ln()).collect())
            } else {
                None
            };
            let mut theta: Vec<f64> = initial.iter().map(|&p| p.ln()).collect();
            let mut policy = initial.clone();
            points.push(sample_point(0, &policy, cfg.k, cfg.m, 0.0, 0.0)?);
            for step in 1..=cfg.steps {
                let out = match cfg.mode {
                    SimMode::Reinforce => {
                        reinforce_core(&mut theta, &policy, &truth, spec, cfg, &mut rng)
                    }
                    SimMode::GrpoClipped => {
                        grpo_core(&mut theta, &policy, &truth, spec, cfg, &mut rng)
                    }
                    SimMode::WrightFisher => unreachable!("handled above"),
                };
                if let Some(ln_ref) = &ln_ref {
                    // The anchor pull, evaluated at the pre-step policy so
                    // both drifts see the same state. Dead arms stay dead.
                    for (i, th) in theta.iter_mut().enumerate() {
                        let pi = policy.entries()[i];
                        if pi > 0.0 {
                            *th -= cfg.beta * (pi.ln() - ln_ref[i]);
                        }
                    }
                    policy = masked_softmax(&theta);
                } else if out.updated {
                    policy = masked_softmax(&theta);
                }
                if record_at(cfg, step) {
                    points.push(sample_point(
                        step,
                        &policy,
                        cfg.k,
                        cfg.m,
                        out.clipped_fraction,
                        out.reward_mean,
                    )?);
                }
            }
        }
    }
    Ok(SimTrajectory {
        points,
        k: cfg.k,
        m: cfg.m,
        eta: cfg.eta,
        seed: cfg.seed,
        replica,
    })
}

fn format_field(value: f64) -> String {
    let s = format!("{value}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

/// CSV export in the same column layout as the deterministic-flow export,
/// with four appended columns:
/// `t,tau,p,logit,s2,t2,c_geo,lyapunov,y_1..y_K,z_1..z_M,replica,seed,clipped_fraction,empirical_reward_mean`.
/// `t` is the step index; `tau` and `lyapunov` are diagnostics recomputed
/// on the recorded samples (trapezoid internal clock, quadrature
/// potential), so they carry the recording cadence's resolution.
pub fn write_sim_csv<W: Write>(traj: &SimTrajectory, spec: &NoiseSpec, writer: W) -> Result<()> {
    let times: Vec<f64> = traj.points().iter().map(|pt| pt.step as f64).collect();
    let masses: Vec<f64> = traj.bad_mass().collect();
    let taus = meanfield::tau_profile(&times, &masses, spec, traj.eta)?;
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["t", "tau", "p", "logit", "s2", "t2", "c_geo", "lyapunov"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=traj.k).map(|j| format!("y_{j}")));
    header.extend((1..=traj.m).map(|j| format!("z_{j}")));
    header.extend(
        ["replica", "seed", "clipped_fraction", "empirical_reward_mean"]
            .iter()
            .map(|s| s.to_string()),
    );
    out.write_record(&header)?;
    for (pt, &tau) in traj.points().iter().zip(&taus) {
        let s2 = pt.state.s2();
        let t2 = pt.state.t2();
        let mut row: Vec<String> = vec![
            format_field(pt.step as f64),
            format_field(tau),
            format_field(pt.state.bad_mass()),
            format_field(pt.logit),
            format_field(s2),
            format_field(t2),
            format_field(s2 + t2),
            format_field(meanfield::lyapunov_value(&pt.state, spec)),
        ];
        row.extend(pt.state.good_shape().iter().map(|&y| format_field(y)));
        row.extend(pt.state.bad_shape().iter().map(|&z| format_field(z)));
        row.push(traj.replica.to_string());
        row.push(traj.seed.to_string());
        row.push(format_field(pt.clipped_fraction));
        row.push(format_field(pt.reward_mean));
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

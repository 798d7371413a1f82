//! Sweep configuration: a flat TOML document plus a grid of noise points.

use std::path::Path;

use bandit_sim::{SimConfig, SimMode};
use meanfield::{Method, OdeConfig};
use noise_model::NoiseSpec;
use serde::{Deserialize, Serialize};
use simplex_core::{BlockState, ProbVector};

use crate::{Result, SweepError};

/// Which machinery advances a run: the deterministic flow, the sampling
/// simulator, or the diffusion surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Engine {
    Ode,
    Sim,
    WrightFisher,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Ode => "ode",
            Engine::Sim => "sim",
            Engine::WrightFisher => "wright_fisher",
        })
    }
}

/// One verifier operating point, with optional per-point overrides of the
/// shared run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub fpr: f64,
    pub fnr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
}

impl GridPoint {
    pub fn new(fpr: f64, fnr: f64) -> Self {
        GridPoint { fpr, fnr, eta: None, g: None, steps: None, replicas: None }
    }
}

fn default_k() -> usize {
    3
}
fn default_m() -> usize {
    2
}
fn default_g() -> usize {
    8
}
fn default_eta() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    50_000
}
fn default_replicas() -> u64 {
    1
}
fn default_mode() -> SimMode {
    SimMode::Reinforce
}
fn default_zscore_epsilon() -> f64 {
    1e-8
}
fn default_nu() -> f64 {
    1.0
}
fn default_method() -> Method {
    Method::Rk45Adaptive
}
fn default_ode_step() -> f64 {
    0.05
}
fn default_horizon() -> f64 {
    2000.0
}
fn default_abs_tol() -> f64 {
    1e-9
}
fn default_rel_tol() -> f64 {
    1e-6
}

/// The full description of a sweep. Every field except `engine` and
/// `grid` has a default, so a minimal config is the engine name plus a
/// list of `[[grid]]` tables. Time units are integrator time for the
/// `ode` engine and steps for the sampling engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub engine: Engine,
    pub grid: Vec<GridPoint>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_g")]
    pub g: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Recording stride for the sampling engines; defaults to steps/100.
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Starting bad mass; shapes start uniform. Defaults to m/(k+m).
    #[serde(default)]
    pub initial_p: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
    #[serde(default)]
    pub clip_low: f64,
    #[serde(default)]
    pub clip_high: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(default = "default_zscore_epsilon")]
    pub zscore_epsilon: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_method")]
    pub ode_method: Method,
    #[serde(default = "default_ode_step")]
    pub ode_step: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

/// One grid point with every shared setting resolved, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPoint {
    pub index: usize,
    pub noise: NoiseSpec,
    pub eta: f64,
    pub g: usize,
    pub steps: usize,
    pub replicas: u64,
    /// Master seed for this point; replica r draws from substream r.
    pub seed: u64,
}

impl SweepSpec {
    pub fn minimal(engine: Engine, grid: Vec<GridPoint>) -> Self {
        SweepSpec {
            engine,
            grid,
            k: default_k(),
            m: default_m(),
            g: default_g(),
            eta: default_eta(),
            steps: default_steps(),
            record_every: None,
            replicas: default_replicas(),
            base_seed: 0,
            initial_p: None,
            mode: default_mode(),
            clip_low: 0.0,
            clip_high: 0.0,
            beta: 0.0,
            reference: None,
            zscore_epsilon: default_zscore_epsilon(),
            nu: default_nu(),
            ode_method: default_method(),
            ode_step: default_ode_step(),
            horizon: default_horizon(),
            abs_tol: default_abs_tol(),
            rel_tol: default_rel_tol(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(SweepError::InvalidConfig { reason });
        if self.grid.is_empty() {
            return fail("the grid needs at least one point".into());
        }
        for (i, pt) in self.grid.iter().enumerate() {
            NoiseSpec::new(pt.fnr, pt.fpr).map_err(|e| SweepError::InvalidConfig {
                reason: format!("grid point {i}: {e}"),
            })?;
            if let Some(r) = pt.replicas {
                if r == 0 {
                    return fail(format!("grid point {i}: replicas must be at least 1"));
                }
            }
        }
        if self.replicas == 0 {
            return fail("replicas must be at least 1".into());
        }
        let p0 = self.starting_mass();
        if !(0.0..=1.0).contains(&p0) || !p0.is_finite() {
            return fail(format!("initial_p must lie in [0, 1], got {p0}"));
        }
        // Engine-specific knobs are checked by the engine configs; build
        // them for the first resolved point so errors surface before any
        // run starts.
        let points = self.resolve_points()?;
        match self.engine {
            Engine::Ode => {
                self.ode_config(&points[0]).validate()?;
            }
            Engine::Sim | Engine::WrightFisher => {
                self.sim_config(&points[0], 0).validate()?;
            }
        }
        Ok(())
    }

    pub fn starting_mass(&self) -> f64 {
        self.initial_p
            .unwrap_or(self.m as f64 / (self.k + self.m) as f64)
    }

    pub fn effective_record_every(&self) -> usize {
        self.record_every.unwrap_or((self.steps / 100).max(1))
    }

    /// The per-run replica budget: 1 for the deterministic engine no
    /// matter what the config asks for.
    pub fn replicas_for(&self, point: &GridPoint) -> u64 {
        match self.engine {
            Engine::Ode => 1,
            _ => point.replicas.unwrap_or(self.replicas),
        }
    }

    /// Grid points with shared settings and per-point overrides folded
    /// in. Point i runs on seed base_seed + i, so distinct points never
    /// share a stream even when their noise coincides.
    pub fn resolve_points(&self) -> Result<Vec<ResolvedPoint>> {
        self.grid
            .iter()
            .enumerate()
            .map(|(index, pt)| {
                let noise = NoiseSpec::new(pt.fnr, pt.fpr)?;
                Ok(ResolvedPoint {
                    index,
                    noise,
                    eta: pt.eta.unwrap_or(self.eta),
                    g: pt.g.unwrap_or(self.g),
                    steps: pt.steps.unwrap_or(self.steps),
                    replicas: self.replicas_for(pt),
                    seed: self.base_seed.wrapping_add(index as u64),
                })
            })
            .collect()
    }

    /// Total number of runs, and the flat index of (point, replica).
    pub fn run_count(&self) -> Result<usize> {
        Ok(self
            .resolve_points()?
            .iter()
            .map(|p| p.replicas as usize)
            .sum())
    }

    pub fn initial_flat(&self) -> Vec<f64> {
        let p0 = self.starting_mass();
        let good = (1.0 - p0) / self.k as f64;
        let bad = p0 / self.m as f64;
        let mut flat = vec![good; self.k];
        flat.extend(std::iter::repeat(bad).take(self.m));
        flat
    }

    pub fn initial_policy(&self) -> Result<ProbVector> {
        Ok(ProbVector::new(self.initial_flat())?)
    }

    pub fn initial_state(&self) -> Result<BlockState> {
        Ok(BlockState::new(
            self.starting_mass(),
            ProbVector::uniform(self.k)?,
            ProbVector::uniform(self.m)?,
        )?)
    }

    pub fn sim_config(&self, point: &ResolvedPoint, replica: u64) -> SimConfig {
        let _ = replica;
        let mode = match self.engine {
            Engine::WrightFisher => SimMode::WrightFisher,
            _ => self.mode,
        };
        let mut cfg = SimConfig::new(
            mode,
            self.k,
            self.m,
            point.g,
            point.eta,
            point.steps,
            point.seed,
        );
        cfg.clip_low = self.clip_low;
        cfg.clip_high = self.clip_high;
        cfg.beta = self.beta;
        cfg.reference = self.reference.clone();
        cfg.zscore_epsilon = self.zscore_epsilon;
        cfg.record_every = self.effective_record_every().min(point.steps.max(1));
        cfg.nu = self.nu;
        cfg
    }

    pub fn ode_config(&self, point: &ResolvedPoint) -> OdeConfig {
        OdeConfig {
            eta: point.eta,
            step: self.ode_step,
            horizon: self.horizon,
            method: self.ode_method,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
        }
    }

    /// A copy with every optional shared setting materialized, for the
    /// `config.resolved` artifact.
    pub fn resolved(&self) -> SweepSpec {
        let mut out = self.clone();
        out.record_every = Some(self.effective_record_every());
        out.initial_p = Some(self.starting_mass());
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

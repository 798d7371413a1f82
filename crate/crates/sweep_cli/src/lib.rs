//! Experiment harness tying the laboratory together: reproducible sweeps
//! over verifier operating points, transition scans, fixed-point tables,
//! and the learnability landscape, all emitted as plain CSV.
//!
//! A sweep is described by a flat TOML document ([`SweepSpec`]) naming an
//! engine (deterministic flow, group sampler, or diffusion surrogate) and
//! a grid of verifier error rates. [`run_sweep`] executes every
//! (point, replica) pair on a worker pool, writes one CSV per run plus a
//! summary keyed by grid point, and never lets one bad run take down the
//! rest: failures are recorded per run and reflected in the exit status
//! of the `sweep` subcommand.

pub mod config;
pub mod fixedpoint;
pub mod summary;
pub mod surface;
pub mod sweep;
pub mod transition;

pub use config::{Engine, GridPoint, ResolvedPoint, SweepSpec};
pub use fixedpoint::{fixed_point_rows, write_fixed_point_csv, FixedPointRow};
pub use summary::{
    classify_phase, first_crossing, loglog_tail_slope, mean_and_se, median_crossing,
    read_summary_csv, write_summary_csv, Phase, RunSummary,
};
pub use surface::{
    learnability_curve, phase_surface, write_learnability_csv, write_surface_csv, SurfaceCell,
};
pub use sweep::{run_csv_path, run_sweep, RunFailure, SweepOutcome};
pub use transition::{detect_transition, ode_scan, sim_scan, symmetric_spec};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("malformed summary: {reason}")]
    MalformedSummary { reason: String },
    #[error("the scan never changes sign: no transition inside the range")]
    NoSignChange,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Noise(#[from] noise_model::NoiseError),
    #[error(transparent)]
    Simplex(#[from] simplex_core::SimplexError),
    #[error(transparent)]
    Meanfield(#[from] meanfield::MeanfieldError),
    #[error(transparent)]
    Bandit(#[from] bandit_sim::BanditError),
    #[error(transparent)]
    Kl(#[from] kl_dynamics::KlError),
}

pub type Result<T> = std::result::Result<T, SweepError>;

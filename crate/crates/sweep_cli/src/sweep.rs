//! Sweep orchestration: runs every (grid point, replica) pair, writes the
//! per-run CSVs and the summary, and reports per-run failures without
//! aborting the rest of the sweep.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{Engine, ResolvedPoint, SweepSpec};
use crate::summary::{
    classify_phase, first_crossing, loglog_tail_slope, mean_and_se, median_crossing,
    write_summary_csv, RunSummary,
};
use crate::Result;

/// One run that did not finish, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub run_index: usize,
    pub point: usize,
    pub replica: u64,
    pub error: String,
}

/// Everything a finished sweep leaves behind in memory; the same content
/// lands in `summary.csv` and `failures.csv`.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summaries: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

impl SweepOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone)]
struct RunJob {
    run_index: usize,
    point: ResolvedPoint,
    replica: u64,
}

/// The recorded (time, bad mass) series of one finished run.
#[derive(Debug, Clone)]
struct Series {
    initial_p: f64,
    final_p: f64,
    times: Vec<f64>,
    masses: Vec<f64>,
}

pub fn run_csv_path(out_dir: &Path, run_index: usize) -> PathBuf {
    out_dir.join("runs").join(format!("{run_index}.csv"))
}

fn execute_run(spec: &SweepSpec, job: &RunJob, path: &Path) -> std::result::Result<Series, String> {
    let stringify = |e: &dyn std::fmt::Display| e.to_string();
    match spec.engine {
        Engine::Ode => {
            let state = spec.initial_state().map_err(|e| stringify(&e))?;
            let cfg = spec.ode_config(&job.point);
            let traj =
                meanfield::integrate(&state, &job.point.noise, &cfg).map_err(|e| stringify(&e))?;
            let file = fs::File::create(path).map_err(|e| stringify(&e))?;
            meanfield::write_trajectory_csv(&traj, file, 1).map_err(|e| stringify(&e))?;
            let times: Vec<f64> = traj.times().collect();
            let masses: Vec<f64> = traj.bad_mass().collect();
            Ok(Series {
                initial_p: masses[0],
                final_p: *masses.last().unwrap(),
                times,
                masses,
            })
        }
        Engine::Sim | Engine::WrightFisher => {
            let cfg = spec.sim_config(&job.point, job.replica);
            let initial = spec.initial_policy().map_err(|e| stringify(&e))?;
            let traj = bandit_sim::run_replica(&cfg, &job.point.noise, &initial, job.replica)
                .map_err(|e| stringify(&e))?;
            let file = fs::File::create(path).map_err(|e| stringify(&e))?;
            bandit_sim::write_sim_csv(&traj, &job.point.noise, file).map_err(|e| stringify(&e))?;
            let times: Vec<f64> = traj.points().iter().map(|pt| pt.step as f64).collect();
            let masses: Vec<f64> = traj.bad_mass().collect();
            Ok(Series {
                initial_p: masses[0],
                final_p: *masses.last().unwrap(),
                times,
                masses,
            })
        }
    }
}

/// Replica-mean mass curve, only defined when every series shares one
/// recording grid.
fn mean_curve(series: &[&Series]) -> Option<(Vec<f64>, Vec<f64>)> {
    let first = series.first()?;
    let len = first.times.len();
    if series.iter().any(|s| s.times != first.times) {
        return None;
    }
    let n = series.len() as f64;
    let mut masses = vec![0.0; len];
    for s in series {
        for (acc, m) in masses.iter_mut().zip(&s.masses) {
            *acc += m;
        }
    }
    for m in &mut masses {
        *m /= n;
    }
    Some((first.times.clone(), masses))
}

fn reduce_point(
    spec: &SweepSpec,
    point: &ResolvedPoint,
    results: &[std::result::Result<Series, String>],
) -> RunSummary {
    let successes: Vec<&Series> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failed = (results.len() - successes.len()) as u64;
    let initial_p = successes
        .first()
        .map(|s| s.initial_p)
        .unwrap_or_else(|| spec.starting_mass());

    let (final_p_mean, final_p_se, phase) = if successes.is_empty() {
        (None, None, None)
    } else {
        let finals: Vec<f64> = successes.iter().map(|s| s.final_p).collect();
        let (mean, se) = mean_and_se(&finals);
        (Some(mean), Some(se), Some(classify_phase(initial_p, mean, se)))
    };

    let hit = |threshold: f64| {
        let crossings: Vec<Option<f64>> = successes
            .iter()
            .map(|s| first_crossing(&s.times, &s.masses, threshold))
            .collect();
        median_crossing(&crossings)
    };

    let tail_exponent =
        mean_curve(&successes).and_then(|(t, m)| loglog_tail_slope(&t, &m));

    RunSummary {
        point: point.index,
        engine: spec.engine,
        fnr: point.noise.delta_fn(),
        fpr: point.noise.delta_fp(),
        j: point.noise.youden(),
        replicas: point.replicas,
        failed,
        seed: point.seed,
        initial_p,
        final_p_mean,
        final_p_se,
        hit_half: hit(0.5),
        hit_tenth: hit(0.1),
        hit_hundredth: hit(0.01),
        tail_exponent,
        phase,
    }
}

/// Runs the whole sweep into `out_dir`: `config.resolved`, one CSV per
/// run under `runs/`, `summary.csv`, and `failures.csv` when any run
/// failed. Runs execute on the rayon pool; outputs are keyed by run
/// index, so the result is independent of scheduling order and bitwise
/// reproducible for a fixed config.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepOutcome> {
    spec.validate()?;
    fs::create_dir_all(out_dir.join("runs"))?;
    fs::write(out_dir.join("config.resolved"), spec.resolved().to_toml()?)?;

    let points = spec.resolve_points()?;
    let mut jobs = Vec::new();
    for point in &points {
        for replica in 0..point.replicas {
            jobs.push(RunJob {
                run_index: jobs.len(),
                point: point.clone(),
                replica,
            });
        }
    }

    let results: Vec<std::result::Result<Series, String>> = jobs
        .par_iter()
        .map(|job| execute_run(spec, job, &run_csv_path(out_dir, job.run_index)))
        .collect();

    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(&results) {
        if let Err(error) = result {
            failures.push(RunFailure {
                run_index: job.run_index,
                point: job.point.index,
                replica: job.replica,
                error: error.clone(),
            });
        }
    }

    let mut summaries = Vec::new();
    let mut offset = 0;
    for point in &points {
        let count = point.replicas as usize;
        summaries.push(reduce_point(spec, point, &results[offset..offset + count]));
        offset += count;
    }

    let summary_file = fs::File::create(out_dir.join("summary.csv"))?;
    write_summary_csv(&summaries, summary_file)?;

    if !failures.is_empty() {
        let mut out = csv::Writer::from_writer(fs::File::create(out_dir.join("failures.csv"))?);
        out.write_record(["run_index", "point", "replica", "error"])?;
        for f in &failures {
            out.write_record([
                f.run_index.to_string(),
                f.point.to_string(),
                f.replica.to_string(),
                f.error.clone(),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
    }

    Ok(SweepOutcome { summaries, failures })
}

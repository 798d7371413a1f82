//! Per-point aggregation of a sweep: phase labels, hitting times, tail
//! slopes, and the summary CSV.

use std::io::{Read, Write};
use std::str::FromStr;

use crate::config::Engine;
use crate::{Result, SweepError};

/// Direction of the bad mass over a run, judged against its own
/// replica scatter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Learning,
    Neutral,
    AntiLearning,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Learning => "learning",
            Phase::Neutral => "neutral",
            Phase::AntiLearning => "anti-learning",
        })
    }
}

impl FromStr for Phase {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learning" => Ok(Phase::Learning),
            "neutral" => Ok(Phase::Neutral),
            "anti-learning" | "anti_learning" => Ok(Phase::AntiLearning),
            other => Err(SweepError::InvalidConfig {
                reason: format!("unknown phase label {other:?}"),
            }),
        }
    }
}

/// Labels the run by the sign of the mean final-minus-initial bad mass,
/// requiring the shift to clear three standard errors (plus a tiny
/// absolute floor so a deterministic zero drift still reads neutral).
pub fn classify_phase(initial_p: f64, final_mean: f64, final_se: f64) -> Phase {
    let band = 3.0 * final_se + 1e-9;
    let d = final_mean - initial_p;
    if d < -band {
        Phase::Learning
    } else if d > band {
        Phase::AntiLearning
    } else {
        Phase::Neutral
    }
}

/// First recorded time at which the mass is at or below `threshold`.
pub fn first_crossing(times: &[f64], masses: &[f64], threshold: f64) -> Option<f64> {
    times
        .iter()
        .zip(masses)
        .find(|(_, &m)| m <= threshold)
        .map(|(&t, _)| t)
}

/// Lower median of the replicas that reached the threshold, provided a
/// strict majority did.
pub fn median_crossing(crossings: &[Option<f64>]) -> Option<f64> {
    let mut reached: Vec<f64> = crossings.iter().filter_map(|c| *c).collect();
    if reached.len() * 2 <= crossings.len() {
        return None;
    }
    reached.sort_by(f64::total_cmp);
    Some(reached[(reached.len() - 1) / 2])
}

/// Least-squares slope of log mass against log time over the last decade
/// of the series, fitted on whichever side of the simplex is vanishing.
/// `None` when the series is too short, not yet in its tail (mass above
/// 0.05 inside the window), or touches zero.
pub fn loglog_tail_slope(times: &[f64], masses: &[f64]) -> Option<f64> {
    if times.len() != masses.len() || times.len() < 2 {
        return None;
    }
    let decreasing = masses[masses.len() - 1] < masses[0];
    let t_end = times[times.len() - 1];
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(masses)
        .filter(|(&t, _)| t > 0.0 && t >= t_end / 10.0)
        .map(|(&t, &m)| (t, if decreasing { m } else { 1.0 - m }))
        .collect();
    if window.len() < 8 {
        return None;
    }
    if window.iter().any(|&(_, u)| u <= 0.0 || u >= 0.05) {
        return None;
    }
    let n = window.len() as f64;
    let xs: Vec<f64> = window.iter().map(|&(t, _)| t.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, u)| u.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Mean and standard error of the mean, with the unbiased variance
/// estimator. A single sample reports zero error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One grid point of a finished sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub point: usize,
    pub engine: Engine,
    pub fnr: f64,
    pub fpr: f64,
    pub j: f64,
    pub replicas: u64,
    pub failed: u64,
    pub seed: u64,
    pub initial_p: f64,
    pub final_p_mean: Option<f64>,
    pub final_p_se: Option<f64>,
    pub hit_half: Option<f64>,
    pub hit_tenth: Option<f64>,
    pub hit_hundredth: Option<f64>,
    pub tail_exponent: Option<f64>,
    pub phase: Option<Phase>,
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "point",
    "engine",
    "fnr",
    "fpr",
    "j",
    "replicas",
    "failed",
    "seed",
    "initial_p",
    "final_p_mean",
    "final_p_se",
    "hit_0_5",
    "hit_0_1",
    "hit_0_01",
    "tail_exponent",
    "phase",
];

fn format_field(v: f64) -> String {
    let s = format!("{v}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_field).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(rows: &[RunSummary], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(SUMMARY_HEADER)?;
    for row in rows {
        out.write_record([
            row.point.to_string(),
            row.engine.to_string(),
            format_field(row.fnr),
            format_field(row.fpr),
            format_field(row.j),
            row.replicas.to_string(),
            row.failed.to_string(),
            row.seed.to_string(),
            format_field(row.initial_p),
            format_opt(row.final_p_mean),
            format_opt(row.final_p_se),
            format_opt(row.hit_half),
            format_opt(row.hit_tenth),
            format_opt(row.hit_hundredth),
            format_opt(row.tail_exponent),
            row.phase.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(idx).unwrap_or_default();
    raw.parse().map_err(|e| SweepError::MalformedSummary {
        reason: format!("bad {name} field {raw:?}: {e}"),
    })
}

fn parse_opt(record: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<f64>> {
    let raw = record.get(idx).unwrap_or_default();
    if raw.is_empty() {
        return Ok(None);
    }
    parse_field(record, idx, name).map(Some)
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<RunSummary>> {
    let mut input = csv::Reader::from_reader(reader);
    let header = input.headers()?.clone();
    if header.iter().ne(SUMMARY_HEADER) {
        return Err(SweepError::MalformedSummary {
            reason: format!("unexpected header {:?}", header),
        });
    }
    let mut rows = Vec::new();
    for record in input.records() {
        let record = record?;
        let engine_raw = record.get(1).unwrap_or_default();
        let engine = match engine_raw {
            "ode" => Engine::Ode,
            "sim" => Engine::Sim,
            "wright_fisher" => Engine::WrightFisher,
            other => {
                return Err(SweepError::MalformedSummary {
                    reason: format!("unknown engine {other:?}"),
                })
            }
        };
        let phase_raw = record.get(15).unwrap_or_default();
        let phase = if phase_raw.is_empty() {
            None
        } else {
            Some(phase_raw.parse()?)
        };
        rows.push(RunSummary {
            point: parse_field(&record, 0, "point")?,
            engine,
            fnr: parse_field(&record, 2, "fnr")?,
            fpr: parse_field(&record, 3, "fpr")?,
            j: parse_field(&record, 4, "j")?,
            replicas: parse_field(&record, 5, "replicas")?,
            failed: parse_field(&record, 6, "failed")?,
            seed: parse_field(&record, 7, "seed")?,
            initial_p: parse_field(&record, 8, "initial_p")?,
            final_p_mean: parse_opt(&record, 9, "final_p_mean")?,
            final_p_se: parse_opt(&record, 10, "final_p_se")?,
            hit_half: parse_opt(&record, 11, "hit_0_5")?,
            hit_tenth: parse_opt(&record, 12, "hit_0_1")?,
            hit_hundredth: parse_opt(&record, 13, "hit_0_01")?,
            tail_exponent: parse_opt(&record, 14, "tail_exponent")?,
            phase,
        });
    }
    Ok(rows)
}

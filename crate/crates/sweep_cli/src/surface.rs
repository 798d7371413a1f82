//! The learnability landscape over the square of verifier error rates.

use std::io::Write;

use noise_model::{learnability_argmax, learnability_speed, reward_stats, variance_argmax, NoiseSpec};

use crate::Result;

/// One cell of the error-rate grid. Cells with no discrimination to
/// exploit (`J <= 0`, including the blind diagonal) are masked and carry
/// no functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCell {
    pub delta_fn: f64,
    pub delta_fp: f64,
    pub j: f64,
    pub masked: bool,
    /// Bad mass maximizing the reward variance.
    pub p_star: Option<f64>,
    /// Reward standard deviation at that mass.
    pub sigma_max: Option<f64>,
    /// Bad mass maximizing the learnability speed.
    pub p_dagger: Option<f64>,
    /// The speed at that maximizer.
    pub l_max: Option<f64>,
}

/// Evaluates the landscape on a `resolution x resolution` grid covering
/// `[0, 1]^2`, false-negative rate on the outer axis.
pub fn phase_surface(resolution: usize) -> Result<Vec<SurfaceCell>> {
    if resolution < 2 {
        return Err(crate::SweepError::InvalidConfig {
            reason: format!("surface resolution must be at least 2, got {resolution}"),
        });
    }
    let ticks: Vec<f64> = (0..resolution)
        .map(|i| i as f64 / (resolution - 1) as f64)
        .collect();
    let mut cells = Vec::with_capacity(resolution * resolution);
    for &delta_fn in &ticks {
        for &delta_fp in &ticks {
            let spec = NoiseSpec::new(delta_fn, delta_fp)?;
            let j = spec.youden();
            if j <= 0.0 {
                cells.push(SurfaceCell {
                    delta_fn,
                    delta_fp,
                    j,
                    masked: true,
                    p_star: None,
                    sigma_max: None,
                    p_dagger: None,
                    l_max: None,
                });
                continue;
            }
            let p_star = variance_argmax(&spec)?;
            let sigma_max = reward_stats(&spec, p_star)?.sigma;
            let p_dagger = learnability_argmax(&spec)?;
            let l_max = learnability_speed(&spec, p_dagger)?;
            cells.push(SurfaceCell {
                delta_fn,
                delta_fp,
                j,
                masked: false,
                p_star: Some(p_star),
                sigma_max: Some(sigma_max),
                p_dagger: Some(p_dagger),
                l_max: Some(l_max),
            });
        }
    }
    Ok(cells)
}

/// Samples `(p, sigma, learnability)` on an interior grid of `points`
/// equal steps across the mass range.
pub fn learnability_curve(spec: &NoiseSpec, points: usize) -> Result<Vec<(f64, f64, f64)>> {
    if points < 3 {
        return Err(crate::SweepError::InvalidConfig {
            reason: format!("a curve needs at least 3 grid steps, got {points}"),
        });
    }
    (1..points)
        .map(|i| {
            let p = i as f64 / points as f64;
            let sigma = reward_stats(spec, p)?.sigma;
            let speed = learnability_speed(spec, p)?;
            Ok((p, sigma, speed))
        })
        .collect()
}

pub fn write_learnability_csv<W: Write>(curve: &[(f64, f64, f64)], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["p", "sigma", "learnability"])?;
    for &(p, sigma, speed) in curve {
        out.write_record([format_field(p), format_field(sigma), format_field(speed)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn format_field(v: f64) -> String {
    let s = format!("{v}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn write_surface_csv<W: Write>(cells: &[SurfaceCell], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "delta_fn", "delta_fp", "j", "masked", "p_star", "sigma_max", "p_dagger", "l_max",
    ])?;
    for c in cells {
        out.write_record([
            format_field(c.delta_fn),
            format_field(c.delta_fp),
            format_field(c.j),
            c.masked.to_string(),
            c.p_star.map(format_field).unwrap_or_default(),
            c.sigma_max.map(format_field).unwrap_or_default(),
            c.p_dagger.map(format_field).unwrap_or_default(),
            c.l_max.map(format_field).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

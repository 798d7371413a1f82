//! CSV serialization of integrated trajectories.

use std::io::Write;

use crate::{MeanfieldError, Result, Trajectory};

/// Writes a trajectory as CSV with one row per retained sample. Columns:
/// `t,tau,p,logit,s2,t2,c_geo,lyapunov` followed by the good-block shape
/// `y_1..y_K` and the bad-block shape `z_1..z_M`. Rows are thinned to
/// every `stride`-th sample; the final sample is always written.
pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory,
    writer: W,
    stride: usize,
) -> Result<()> {
    if stride == 0 {
        return Err(MeanfieldError::InvalidConfig {
            reason: "stride must be at least 1".into(),
        });
    }
    let points = traj.points();
    let Some(first) = points.first() else {
        return Err(MeanfieldError::EmptyWindow);
    };
    let k = first.state.good_shape().dim();
    let m = first.state.bad_shape().dim();

    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["t", "tau", "p", "logit", "s2", "t2", "c_geo", "lyapunov"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|j| format!("y_{j}")));
    header.extend((1..=m).map(|j| format!("z_{j}")));
    out.write_record(&header)?;

    let last = points.len() - 1;
    for (i, pt) in points.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        let mut row: Vec<String> = vec![
            format_field(pt.t),
            format_field(pt.tau),
            format_field(pt.state.bad_mass()),
            format_field(pt.logit),
            format_field(pt.s2),
            format_field(pt.t2),
            format_field(pt.c_geo),
            format_field(pt.lyapunov),
        ];
        row.extend(pt.state.good_shape().iter().map(|&v| format_field(v)));
        row.extend(pt.state.bad_shape().iter().map(|&v| format_field(v)));
        out.write_record(&row)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn format_field(v: f64) -> String {
    // Round-trippable without padding zeros onto short decimals.
    let mut s = format!("{v}");
    if s == "-0" {
        s = "0".into();
    }
    s
}

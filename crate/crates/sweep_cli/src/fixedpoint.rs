//! Tabulating anchored rest points across anchoring strengths.

use std::io::Write;

use kl_dynamics::{fixed_point_stability, interior_fixed_point, strong_kl_prediction, weak_kl_prediction, KlConfig};
use noise_model::NoiseSpec;

use crate::Result;

/// One anchoring strength: the rest point of the regularized scalar flow,
/// its linear stability (negative means attracting), and the two
/// asymptotic predictions where they apply.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRow {
    pub beta: f64,
    pub p_star: f64,
    pub stability: f64,
    pub strong_prediction: f64,
    pub weak_prediction: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn fixed_point_rows(
    spec: &NoiseSpec,
    eta: f64,
    p_ref: f64,
    k: usize,
    m: usize,
    s2: f64,
    t2: f64,
    betas: &[f64],
) -> Result<Vec<FixedPointRow>> {
    betas
        .iter()
        .map(|&beta| {
            let cfg = KlConfig::two_class(beta, p_ref, k, m)?;
            let p_star = interior_fixed_point(spec, eta, &cfg, s2, t2)?;
            Ok(FixedPointRow {
                beta,
                p_star,
                stability: fixed_point_stability(p_star, spec, eta, &cfg, s2, t2)?,
                strong_prediction: strong_kl_prediction(spec, eta, &cfg, s2, t2)?,
                weak_prediction: weak_kl_prediction(spec, eta, &cfg, s2, t2)?,
            })
        })
        .collect()
}

fn format_field(v: f64) -> String {
    let s = format!("{v}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn write_fixed_point_csv<W: Write>(rows: &[FixedPointRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["beta", "p_star", "stability", "strong_prediction", "weak_prediction"])?;
    for r in rows {
        out.write_record([
            format_field(r.beta),
            format_field(r.p_star),
            format_field(r.stability),
            format_field(r.strong_prediction),
            r.weak_prediction.map(format_field).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

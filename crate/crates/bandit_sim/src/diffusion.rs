//! Diffusion surrogate: the deterministic drift plus Gaussian noise with
//! the sampling covariance, scaled down by the group size.

use crate::config::SimConfig;
use crate::{BanditError, Result};
use meanfield::coupled_drift;
use noise_model::NoiseSpec;
use rand::Rng;
use rand_distr::StandardNormal;
use simplex_core::{decompose, recompose, BlockState, ProbVector};

/// Lowest arm probability the reflecting boundary maintains.
const FLOOR: f64 = 1e-12;

/// `Sigma(p) = Diag(p) - p p^T`, the covariance of a single one-hot draw.
fn sampling_covariance(p: &[f64]) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut mat = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            mat[i][j] = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
        }
    }
    mat
}

/// Symmetric PSD square root via cyclic Jacobi diagonalization with the
/// eigenvalues floored at zero. The arm counts here are tiny, so an exact
/// dense method is the simplest correct tool.
pub(crate) fn symmetric_sqrt(mat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off <= 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for row in v.iter_mut() {
                    let rp = row[p];
                    let rq = row[q];
                    row[p] = c * rp - s * rq;
                    row[q] = s * rp + c * rq;
                }
            }
        }
    }
    let roots: Vec<f64> = (0..n).map(|i| a[i][i].max(0.0).sqrt()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let entry: f64 = (0..n).map(|r| v[i][r] * roots[r] * v[j][r]).sum();
            out[i][j] = entry;
            out[j][i] = entry;
        }
    }
    out
}

/// One Euler step of the stochastic surrogate on the flat arm vector: the
/// deterministic coupled drift over unit time, plus
/// `eta sqrt(nu / G) Sigma(p)^{1/2}` applied to a standard normal draw.
/// The noise lives in the tangent space (the all-ones vector is in the
/// kernel of `Sigma`), so total mass is conserved up to rounding. Entries
/// pushed below the floor reflect back into the band and the result is
/// renormalized before splitting back into blocks.
///
/// `nu = 0` consumes no randomness and reduces to a plain Euler step of
/// the deterministic flow.
pub fn wright_fisher_step<R: Rng + ?Sized>(
    state: &BlockState,
    spec: &NoiseSpec,
    cfg: &SimConfig,
    rng: &mut R,
    nu: f64,
) -> Result<BlockState> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(BanditError::InvalidConfig {
            reason: format!("nu must be nonnegative and finite, got {nu}"),
        });
    }
    cfg.validate()?;
    let k = state.good_shape().dim();
    let m = state.bad_shape().dim();
    let flat = recompose(state);
    let min_entry = flat.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_entry > 0.0) {
        return Err(BanditError::NotInterior { min_entry });
    }
    let drift = coupled_drift(state, spec, cfg.eta)?;
    let p = state.bad_mass();
    let mut next: Vec<f64> = flat.entries().to_vec();
    for (j, &y) in state.good_shape().iter().enumerate() {
        next[j] += -drift.dp * y + (1.0 - p) * drift.dy[j];
    }
    for (j, &z) in state.bad_shape().iter().enumerate() {
        next[k + j] += drift.dp * z + p * drift.dz[j];
    }
    if nu > 0.0 {
        let amp = cfg.eta * (nu / cfg.g as f64).sqrt();
        let root = symmetric_sqrt(&sampling_covariance(flat.entries()));
        let draws: Vec<f64> = (0..k + m).map(|_| rng.sample(StandardNormal)).collect();
        for (value, row) in next.iter_mut().zip(&root) {
            let kick: f64 = row.iter().zip(&draws).map(|(r, x)| r * x).sum();
            *value += amp * kick;
        }
    }
    for value in &mut next {
        if *value < FLOOR {
            *value = FLOOR + (FLOOR - *value);
        }
        if *value > 1.0 {
            *value = 1.0;
        }
    }
    let repaired = ProbVector::sanitized(next)?;
    Ok(decompose(&repaired, k, m)?)
}

//! Lyapunov values, equilibrium classification, and asymptotic tail fits.

use crate::{MeanfieldError, Result, Trajectory};
use noise_model::{NoiseError, NoiseSpec};
use simplex_core::BlockState;

/// Integrand of the Lyapunov potential in good-mass coordinates:
/// `J / sigma(s)` where `sigma` is evaluated at bad mass `1 - s`.
pub(crate) fn lyapunov_density(s: f64, spec: &NoiseSpec) -> f64 {
    let j = spec.youden();
    let s = s.clamp(0.0, 1.0 - 1e-12);
    let q = (spec.delta_fp() + j * s).clamp(0.0, 1.0);
    let var = q * (1.0 - q);
    if var <= 0.0 {
        // Only reachable at s = 0 with delta_fp = 0; the caller handles
        // that endpoint through the square-root substitution.
        return 0.0;
    }
    j / var.sqrt()
}

/// The Lyapunov potential `F(s) = integral_0^s J / sigma(u) du` evaluated
/// at the good mass `s = 1 - p` by adaptive quadrature. Along coupled
/// trajectories F never decreases, with equality only at stationary
/// points. For a blind verifier the potential is identically zero by
/// convention.
pub fn lyapunov_value(state: &BlockState, spec: &NoiseSpec) -> f64 {
    let j = spec.youden();
    if j == 0.0 {
        return 0.0;
    }
    let s = (1.0 - state.bad_mass()).clamp(0.0, 1.0 - 1e-12);
    if s == 0.0 {
        return 0.0;
    }
    // Substitute u = v^2: du = 2 v dv regularizes the integrable
    // 1/sqrt(u) endpoint singularity that appears when delta_fp = 0.
    let g = |v: f64| {
        if v == 0.0 {
            // Limit of 2 v J / sigma(v^2): zero unless delta_fp = 0, where
            // sigma(u) ~ sqrt(J u) and the limit is 2 sqrt(J).
            if spec.delta_fp() == 0.0 && j > 0.0 {
                return 2.0 * j.sqrt();
            }
            return 0.0;
        }
        2.0 * v * lyapunov_density(v * v, spec)
    };
    adaptive_simpson(&g, 0.0, s.sqrt(), 1e-12, 40)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_refine(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    Uniform,
    Vertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

/// Linear stability of the canonical shape equilibria, by block and by
/// the sign of `J`. An informative verifier collapses the good block onto
/// its leading arm (uniform unstable, vertex stable) while diffusing the
/// bad block (uniform stable, vertex unstable); an adversarial verifier
/// does the reverse. A blind verifier has no shape dynamics at all.
pub fn classify_equilibrium(
    block: BlockKind,
    kind: EquilibriumKind,
    j: f64,
) -> Result<Stability> {
    if j == 0.0 || j.is_nan() {
        return Err(NoiseError::ZeroDiscrimination.into());
    }
    let informative = j > 0.0;
    let stable = match (block, kind) {
        (BlockKind::Good, EquilibriumKind::Uniform) => !informative,
        (BlockKind::Good, EquilibriumKind::Vertex) => informative,
        (BlockKind::Bad, EquilibriumKind::Uniform) => informative,
        (BlockKind::Bad, EquilibriumKind::Vertex) => !informative,
    };
    Ok(if stable {
        Stability::Stable
    } else {
        Stability::Unstable
    })
}

/// Least-squares slope of `log(mass)` against `log(t)` over a time
/// window, where `mass` is the vanishing side of the trajectory (bad mass
/// when it decays, good mass when the bad mass grows). The window must
/// contain at least two positive-time samples and the mass must be below
/// 0.05 throughout.
pub fn tail_exponent(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let (w0, w1) = window;
    let pts: Vec<(f64, f64)> = traj
        .points()
        .iter()
        .filter(|pt| pt.t > 0.0 && pt.t >= w0 && pt.t <= w1)
        .map(|pt| (pt.t, pt.state.bad_mass()))
        .collect();
    if pts.len() < 2 {
        return Err(MeanfieldError::EmptyWindow);
    }
    let decreasing = pts.last().unwrap().1 < pts[0].1;
    let masses: Vec<f64> = pts
        .iter()
        .map(|&(_, p)| if decreasing { p } else { 1.0 - p })
        .collect();
    let max_mass = masses.iter().cloned().fold(0.0, f64::max);
    if max_mass >= 0.05 {
        return Err(MeanfieldError::InsufficientDecay { max_mass });
    }
    let xs: Vec<f64> = pts.iter().map(|&(t, _)| t.ln()).collect();
    let ys: Vec<f64> = masses.iter().map(|&u| u.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    Ok(sxy / sxx)
}

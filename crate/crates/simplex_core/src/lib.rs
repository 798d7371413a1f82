//! Exact geometry and algebra of the probability simplex.
//!
//! Provides the softmax map, the linearization `J(p) = Diag(p) - p p^T`,
//! replicator and natural-gradient vector fields, multiplicative-weights
//! (mirror ascent) steps, KL and Bhattacharyya divergences, and the block
//! decomposition of a policy into (bad mass, within-block shapes).
//!
//! All operations are pure; values are immutable after construction and
//! safe to share across threads.

use std::fmt;

/// Absolute tolerance for structural identities: simplex sums, tangency.
pub const STRUCT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexError {
    /// An input entry was NaN or infinite.
    NonFinite,
    /// Vector lengths disagree.
    DimensionMismatch { expected: usize, got: usize },
    /// A vector needs at least one entry.
    Empty,
    /// Entries do not sum to the required total within `STRUCT_TOL`.
    NotNormalized { sum: f64 },
    /// A probability entry was negative.
    NegativeEntry { index: usize, value: f64 },
    /// A scalar probability was outside [0, 1].
    InvalidProbability { value: f64 },
    /// KL(a || b) needs support(a) contained in support(b).
    UndefinedDivergence { index: usize },
    /// Block sizes K and M must both be at least 1.
    EmptyBlock,
    /// Step sizes must be positive and finite.
    InvalidStep { value: f64 },
}

impl fmt::Display for SimplexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimplexError::NonFinite => write!(f, "input contains a non-finite entry"),
            SimplexError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            SimplexError::Empty => write!(f, "vector must have at least one entry"),
            SimplexError::NotNormalized { sum } => {
                write!(f, "entries sum to {sum}, outside tolerance of the required total")
            }
            SimplexError::NegativeEntry { index, value } => {
                write!(f, "entry {index} is negative ({value})")
            }
            SimplexError::InvalidProbability { value } => {
                write!(f, "probability {value} is outside [0, 1]")
            }
            SimplexError::UndefinedDivergence { index } => {
                write!(f, "KL undefined: entry {index} has mass in a but none in b")
            }
            SimplexError::EmptyBlock => write!(f, "block sizes K and M must be at least 1"),
            SimplexError::InvalidStep { value } => {
                write!(f, "step size must be positive and finite, got {value}")
            }
        }
    }
}

impl std::error::Error for SimplexError {}

pub type Result<T> = std::result::Result<T, SimplexError>;

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SimplexError::NonFinite);
    }
    Ok(())
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SimplexError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// A point on the probability simplex: nonnegative entries summing to 1
/// within `STRUCT_TOL`. Dimension is fixed at construction. Length 1 is
/// allowed so that single-arm block shapes are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    entries: Vec<f64>,
}

impl ProbVector {
    /// Validating constructor: rejects non-finite or negative entries and
    /// sums off by more than `STRUCT_TOL`.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SimplexError::Empty);
        }
        check_finite(&entries)?;
        for (i, &x) in entries.iter().enumerate() {
            if x < 0.0 {
                return Err(SimplexError::NegativeEntry { index: i, value: x });
            }
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > STRUCT_TOL {
            return Err(SimplexError::NotNormalized { sum });
        }
        Ok(ProbVector { entries })
    }

    /// Repairing constructor for post-update state: clamps small negative
    /// entries at 0 and renormalizes when the sum has drifted by more than
    /// `STRUCT_TOL`. Fails only on non-finite input or zero total mass.
    pub fn sanitized(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SimplexError::Empty);
        }
        check_finite(&entries)?;
        let mut entries: Vec<f64> = entries.iter().map(|&x| x.max(0.0)).collect();
        let sum: f64 = entries.iter().sum();
        if sum <= 0.0 {
            return Err(SimplexError::NotNormalized { sum });
        }
        if (sum - 1.0).abs() > STRUCT_TOL {
            for x in &mut entries {
                *x /= sum;
            }
        }
        Ok(ProbVector { entries })
    }

    /// The uniform distribution on `d` outcomes.
    pub fn uniform(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(SimplexError::Empty);
        }
        Ok(ProbVector {
            entries: vec![1.0 / d as f64; d],
        })
    }

    /// Internal constructor for values valid by construction.
    fn from_raw(entries: Vec<f64>) -> Self {
        ProbVector { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.entries.iter()
    }

    /// Sum of squared entries; the collision probability of the distribution.
    pub fn sum_of_squares(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

/// An element of the tangent space at a simplex point: entries sum to 0
/// within `STRUCT_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    entries: Vec<f64>,
}

impl TangentVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SimplexError::Empty);
        }
        check_finite(&entries)?;
        let sum: f64 = entries.iter().sum();
        if sum.abs() > STRUCT_TOL {
            return Err(SimplexError::NotNormalized { sum });
        }
        Ok(TangentVector { entries })
    }

    /// Internal constructor for fields that are tangent by construction.
    fn from_raw(entries: Vec<f64>) -> Self {
        TangentVector { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<usize> for TangentVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

/// A policy split into total bad mass `p`, the shape `y` of the good block
/// (length K), and the shape `z` of the bad block (length M). The flat
/// policy is `((1-p) y, p z)` with the good block first.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    bad_mass: f64,
    good_shape: ProbVector,
    bad_shape: ProbVector,
}

impl BlockState {
    pub fn new(bad_mass: f64, good_shape: ProbVector, bad_shape: ProbVector) -> Result<Self> {
        if !(0.0..=1.0).contains(&bad_mass) || !bad_mass.is_finite() {
            return Err(SimplexError::InvalidProbability { value: bad_mass });
        }
        Ok(BlockState {
            bad_mass,
            good_shape,
            bad_shape,
        })
    }

    pub fn bad_mass(&self) -> f64 {
        self.bad_mass
    }

    pub fn good_shape(&self) -> &ProbVector {
        &self.good_shape
    }

    pub fn bad_shape(&self) -> &ProbVector {
        &self.bad_shape
    }

    /// Collision probability of the good shape, often written s2.
    pub fn s2(&self) -> f64 {
        self.good_shape.sum_of_squares()
    }

    /// Collision probability of the bad shape, often written t2.
    pub fn t2(&self) -> f64 {
        self.bad_shape.sum_of_squares()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax with max-subtraction so that extreme logits neither overflow nor
/// underflow to an all-zero vector. Invariant under adding a constant to
/// every logit.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(SimplexError::Empty);
    }
    check_finite(logits)?;
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(ProbVector::from_raw(w.into_iter().map(|x| x / z).collect()))
}

/// Applies `J(p) = Diag(p) - p p^T` to `v`, computed as
/// `p (*) (v - <p, v> 1)`. The result is tangent: it sums to zero.
pub fn jacobian_apply(p: &ProbVector, v: &[f64]) -> Result<TangentVector> {
    check_dims(p.dim(), v.len())?;
    check_finite(v)?;
    let mean = dot(p.entries(), v);
    Ok(TangentVector::from_raw(
        p.iter().zip(v).map(|(&pi, &vi)| pi * (vi - mean)).collect(),
    ))
}

/// The replicator field `p (*) (A - <p, A> 1)`. Identical to
/// [`jacobian_apply`]; exposed under the flow-assembly name.
pub fn replicator_field(p: &ProbVector, a: &[f64]) -> Result<TangentVector> {
    jacobian_apply(p, a)
}

/// The preconditioned field `J(p)^2 A`: the replicator field applied to the
/// already-projected signal. This is the per-unit-step mean displacement of
/// group-normalized policy-gradient updates through the softmax.
pub fn grpo_field(p: &ProbVector, a: &[f64]) -> Result<TangentVector> {
    let inner = jacobian_apply(p, a)?;
    jacobian_apply(p, inner.entries())
}

/// Multiplicative-weights step `p+ = p (*) exp(eta A) / Z`, the closed-form
/// solution of the KL-regularized ascent problem. The largest exponent is
/// subtracted over the support of `p` before exponentiation, so arbitrarily
/// large advantages are safe. Preserves the support of `p` exactly and is
/// invariant under `A -> A + c 1`.
pub fn mirror_ascent_step(p: &ProbVector, a: &[f64], eta: f64) -> Result<ProbVector> {
    check_dims(p.dim(), a.len())?;
    check_finite(a)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(SimplexError::InvalidStep { value: eta });
    }
    let m = p
        .iter()
        .zip(a)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(_, &ai)| eta * ai)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = p
        .iter()
        .zip(a)
        .map(|(&pi, &ai)| {
            if pi > 0.0 {
                pi * (eta * ai - m).exp()
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = w.iter().sum();
    Ok(ProbVector::from_raw(w.into_iter().map(|x| x / z).collect()))
}

/// `KL(a || b) = sum_i a_i ln(a_i / b_i)` with `0 ln 0 := 0`. Requires the
/// support of `a` to lie inside the support of `b`.
pub fn kl_divergence(a: &ProbVector, b: &ProbVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let mut total = 0.0;
    for (i, (&ai, &bi)) in a.iter().zip(b.iter()).enumerate() {
        if ai > 0.0 {
            if bi <= 0.0 {
                return Err(SimplexError::UndefinedDivergence { index: i });
            }
            total += ai * (ai / bi).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Geodesic distance `2 arccos(sum_i sqrt(a_i b_i))` induced by the
/// square-root embedding of the simplex into the sphere. The arccos
/// argument is clamped to [-1, 1] to absorb rounding.
pub fn bhattacharyya_distance(a: &ProbVector, b: &ProbVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let s: f64 = a.iter().zip(b.iter()).map(|(&x, &y)| (x * y).sqrt()).sum();
    Ok(2.0 * s.clamp(-1.0, 1.0).acos())
}

/// Splits a flat policy over K good arms followed by M bad arms into
/// `(bad mass, good shape, bad shape)`. When a block carries zero mass its
/// shape is undefined; the uniform shape is stored by convention.
pub fn decompose(flat: &ProbVector, k: usize, m: usize) -> Result<BlockState> {
    if k == 0 || m == 0 {
        return Err(SimplexError::EmptyBlock);
    }
    check_dims(flat.dim(), k + m)?;
    let bad: f64 = flat.entries()[k..].iter().sum();
    let bad = bad.clamp(0.0, 1.0);
    let good = 1.0 - bad;
    let good_shape = if good == 0.0 {
        ProbVector::uniform(k)?
    } else {
        ProbVector::sanitized(flat.entries()[..k].iter().map(|&x| x / good).collect())?
    };
    let bad_shape = if bad == 0.0 {
        ProbVector::uniform(m)?
    } else {
        ProbVector::sanitized(flat.entries()[k..].iter().map(|&x| x / bad).collect())?
    };
    BlockState::new(bad, good_shape, bad_shape)
}

/// Rebuilds the flat policy `((1-p) y, p z)` from a block state. Inverse of
/// [`decompose`] on interior states up to rounding.
pub fn recompose(state: &BlockState) -> ProbVector {
    let p = state.bad_mass();
    let good = 1.0 - p;
    let mut entries: Vec<f64> = state.good_shape().iter().map(|&y| good * y).collect();
    entries.extend(state.bad_shape().iter().map(|&z| p * z));
    let sum: f64 = entries.iter().sum();
    if (sum - 1.0).abs() > STRUCT_TOL {
        for x in &mut entries {
            *x /= sum;
        }
    }
    ProbVector::from_raw(entries)
}

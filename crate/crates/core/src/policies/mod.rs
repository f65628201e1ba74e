//! Arm-selection rules.
//!
//! All optimistic rules share one scoring form over the observed context:
//!
//! ```text
//!   score(a) = x_aᵀθ̂ + radius · ‖x_a‖_{V⁻¹}
//! ```
//!
//! with `radius = β_t` for LinUCB, `β_t + γ_t·C′` for the enlarged variant and
//! `0` for greedy. Ties go to the lowest arm index everywhere.

mod exp3;
mod robust;
mod runner;

pub use exp3::{candidate_set, Exp3State};
pub use robust::{BobNoRestart, RobustBandit};
pub use runner::{default_lints_scale, Policy, PolicyKind};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, l2_norm, FeatureVector, RidgeState, NORM_TOLERANCE};

/// The K feature vectors shown to the player at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    dim: usize,
    data: Vec<f64>,
}

impl ContextSet {
    pub fn new(arms: Vec<FeatureVector>) -> Result<Self> {
        let dim = arms.first().ok_or(Error::EmptyContext)?.dim();
        let mut data = Vec::with_capacity(dim * arms.len());
        for arm in arms {
            if arm.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: arm.dim(),
                });
            }
            data.extend_from_slice(arm.as_slice());
        }
        Ok(Self { dim, data })
    }

    /// Build from `K·dim` row-major entries.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(Error::EmptyContext);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature entry"));
        }
        for arm in data.chunks_exact(dim) {
            let norm = l2_norm(arm);
            if norm > 1.0 + NORM_TOLERANCE {
                return Err(Error::NormExceeded { norm });
            }
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn arm(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, index: usize) -> Result<&[f64]> {
        if index >= self.len() {
            return Err(Error::ArmOutOfRange {
                index,
                arms: self.len(),
            });
        }
        Ok(self.arm(index))
    }

    pub fn arms(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn arm_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.data[index * self.dim..(index + 1) * self.dim]
    }
}

fn check_context(ridge: &RidgeState, ctx: &ContextSet) -> Result<()> {
    if ctx.is_empty() {
        return Err(Error::EmptyContext);
    }
    if ctx.dim() != ridge.dim() {
        return Err(Error::DimensionMismatch {
            expected: ridge.dim(),
            actual: ctx.dim(),
        });
    }
    Ok(())
}

/// First index of the strict maximum.
fn argmax(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

fn optimistic_select(ridge: &RidgeState, ctx: &ContextSet, radius: f64) -> Result<usize> {
    check_context(ridge, ctx)?;
    if !radius.is_finite() {
        return Err(Error::NonFinite("exploration radius"));
    }
    Ok(argmax(ctx.arms().map(|x| {
        ridge.predict_unchecked(x) + radius * ridge.weighted_norm_sq_unchecked(x).sqrt()
    })))
}

/// LinUCB: argmax of `xᵀθ̂ + β_t‖x‖_{V⁻¹}`.
pub fn linucb_select(ridge: &RidgeState, ctx: &ContextSet, beta_t: f64) -> Result<usize> {
    optimistic_select(ridge, ctx, beta_t)
}

/// LinUCB with the radius enlarged to `β_t + γ_t·C′`.
pub fn robust_linucb_select(
    ridge: &RidgeState,
    ctx: &ContextSet,
    beta_t: f64,
    gamma_t: f64,
    c_prime: f64,
) -> Result<usize> {
    if c_prime.is_nan() || c_prime < 0.0 {
        return Err(Error::param("c_prime", "must be non-negative"));
    }
    optimistic_select(ridge, ctx, beta_t + gamma_t * c_prime)
}

/// Pure exploitation: argmax of `xᵀθ̂`.
pub fn greedy_select(ridge: &RidgeState, ctx: &ContextSet) -> Result<usize> {
    check_context(ridge, ctx)?;
    Ok(argmax(ctx.arms().map(|x| ridge.predict_unchecked(x))))
}

/// Linear Thompson sampling: draw θ̃ ~ N(θ̂, scale²·V⁻¹) and act greedily on it.
pub fn lints_select<R: Rng + ?Sized>(
    ridge: &RidgeState,
    ctx: &ContextSet,
    scale: f64,
    rng: &mut R,
) -> Result<usize> {
    check_context(ridge, ctx)?;
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::param("scale", "must be finite and non-negative"));
    }
    let d = ridge.dim();
    let chol = cholesky(ridge.gram_inv(), d).ok_or(Error::NotPositiveDefinite)?;
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let sample: Vec<f64> = ridge
        .estimate()
        .iter()
        .enumerate()
        .map(|(i, &mean)| {
            let row = &chol[i * d..i * d + i + 1];
            mean + scale * row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>()
        })
        .collect();
    Ok(argmax(
        ctx.arms()
            .map(|x| x.iter().zip(&sample).map(|(a, b)| a * b).sum::<f64>()),
    ))
}

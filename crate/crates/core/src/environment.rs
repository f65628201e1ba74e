//! Ground-truth environments.
//!
//! Two arm sources are supported:
//!
//! - **Synthetic**: θ and every feature coordinate are drawn from
//!   `Uniform(−1/√d, 1/√d)`, features are redrawn every round, and the raw
//!   mean `xᵀθ ∈ [−1, 1]` is mapped to `(xᵀθ + 1)/2`.
//! - **Dataset**: K item rows from a factor matrix form a fixed pool, θ is the
//!   average of randomly chosen user rows, and raw means are min-max scaled
//!   onto `[0, 1]` over the selected arms.
//!
//! Rewards are `μ + N(0, noise_sd²)` and are not clipped. Regret is always
//! computed on true features and true means.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::{dot, l2_norm, NORM_TOLERANCE};
use crate::policies::ContextSet;

/// Raw means closer than this are treated as one value by the min-max map.
const DEGENERATE_RANGE: f64 = 1e-12;

/// Affine map `μ = scale·xᵀθ + offset` from raw to transformed means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanTransform {
    pub scale: f64,
    pub offset: f64,
}

impl MeanTransform {
    pub fn apply(&self, raw: f64) -> f64 {
        self.scale * raw + self.offset
    }

    /// Min-max map of `raw` onto `[0, 1]`; a degenerate range maps to 0.5.
    pub fn min_max(raw: &[f64]) -> Self {
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if (hi - lo).is_nan() || hi - lo <= DEGENERATE_RANGE {
            return Self {
                scale: 0.0,
                offset: 0.5,
            };
        }
        Self {
            scale: 1.0 / (hi - lo),
            offset: -lo / (hi - lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmSource {
    /// Fresh `Uniform(−bound, bound)` coordinates every round.
    Generator { arms: usize, bound: f64 },
    /// The same K arms every round.
    Pool(ContextSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentModel {
    theta: Vec<f64>,
    noise_sd: f64,
    arm_source: ArmSource,
    transform: MeanTransform,
}

impl EnvironmentModel {
    pub fn new(
        theta: Vec<f64>,
        noise_sd: f64,
        arm_source: ArmSource,
        transform: MeanTransform,
    ) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::param("theta", "must not be empty"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        let norm = l2_norm(&theta);
        if norm > 1.0 + NORM_TOLERANCE {
            return Err(Error::NormExceeded { norm });
        }
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(Error::param("noise_sd", "must be finite and non-negative"));
        }
        match &arm_source {
            ArmSource::Generator { arms, bound } => {
                if *arms == 0 {
                    return Err(Error::param("K", "must be at least 1"));
                }
                if !(*bound >= 0.0 && bound * bound * theta.len() as f64 <= 1.0 + NORM_TOLERANCE)
                {
                    return Err(Error::param("bound", "coordinates could exceed the unit ball"));
                }
            }
            ArmSource::Pool(pool) => {
                if pool.dim() != theta.len() {
                    return Err(Error::DimensionMismatch {
                        expected: theta.len(),
                        actual: pool.dim(),
                    });
                }
            }
        }
        Ok(Self {
            theta,
            noise_sd,
            arm_source,
            transform,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn arms(&self) -> usize {
        match &self.arm_source {
            ArmSource::Generator { arms, .. } => *arms,
            ArmSource::Pool(pool) => pool.len(),
        }
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn transform(&self) -> MeanTransform {
        self.transform
    }

    pub fn arm_source(&self) -> &ArmSource {
        &self.arm_source
    }

    /// The true context for the next round.
    pub fn draw_context<R: Rng + ?Sized>(&self, rng: &mut R) -> ContextSet {
        match &self.arm_source {
            ArmSource::Generator { arms, bound } => {
                let d = self.dim();
                let data: Vec<f64> = if *bound > 0.0 {
                    (0..arms * d).map(|_| rng.gen_range(-*bound..*bound)).collect()
                } else {
                    vec![0.0; arms * d]
                };
                ContextSet::from_flat(d, data).expect("coordinates bounded by 1/sqrt(d)")
            }
            ArmSource::Pool(pool) => pool.clone(),
        }
    }

    pub fn true_mean(&self, x: &[f64]) -> f64 {
        self.transform.apply(dot(x, &self.theta))
    }

    pub fn true_means(&self, ctx: &ContextSet) -> Vec<f64> {
        ctx.arms().map(|x| self.true_mean(x)).collect()
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.true_mean(x) + self.noise_sd * z
    }

    /// Gap between the best true mean and the pulled arm's true mean.
    pub fn instant_regret(&self, true_ctx: &ContextSet, pulled: usize) -> Result<f64> {
        let pulled_mean = self.true_mean(true_ctx.get(pulled)?);
        let best = true_ctx
            .arms()
            .map(|x| self.true_mean(x))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((best - pulled_mean).max(0.0))
    }
}

/// Synthetic environment; θ is drawn once here, features every round.
pub fn synthetic_env<R: Rng + ?Sized>(
    dim: usize,
    arms: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<EnvironmentModel> {
    if dim == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let bound = 1.0 / (dim as f64).sqrt();
    let theta = (0..dim).map(|_| rng.gen_range(-bound..bound)).collect();
    EnvironmentModel::new(
        theta,
        noise_sd,
        ArmSource::Generator { arms, bound },
        MeanTransform {
            scale: 0.5,
            offset: 0.5,
        },
    )
}

/// Dense row-major factor matrix read from a text file.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().ok_or(Error::param("rows", "no rows"))?.len();
        if dim == 0 {
            return Err(Error::param("rows", "zero-width rows"));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("factor entry"));
            }
            data.extend(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("cannot read factor file {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: no rows")]
    NoRows { path: PathBuf },
    #[error("{path}:{line}: expected {expected} fields, found {found}")]
    Ragged {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: non-numeric field `{field}`")]
    NonNumeric {
        path: PathBuf,
        line: usize,
        field: String,
    },
    #[error("{path}: rows have dimension {found}, expected {expected}")]
    DimMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
}

impl FactorError {
    /// Distinct numeric code per failure class.
    pub fn code(&self) -> i32 {
        match self {
            FactorError::Io { .. } => 10,
            FactorError::NoRows { .. } => 11,
            FactorError::Ragged { .. } => 12,
            FactorError::NonNumeric { .. } => 13,
            FactorError::DimMismatch { .. } => 14,
        }
    }
}

/// Read a whitespace- or comma-delimited numeric table with one entity per
/// line and no header. Blank lines are skipped.
pub fn load_factors(path: &Path, expected_dim: Option<usize>) -> Result<FactorMatrix, FactorError> {
    let text = fs::read_to_string(path).map_err(|e| FactorError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_factors(&text, path, expected_dim)
}

fn parse_factors(
    text: &str,
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<FactorMatrix, FactorError> {
    let mut dim = None;
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let width = *dim.get_or_insert(fields.len());
        if fields.len() != width {
            return Err(FactorError::Ragged {
                path: path.to_path_buf(),
                line: i + 1,
                expected: width,
                found: fields.len(),
            });
        }
        for field in fields {
            let value: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| FactorError::NonNumeric {
                    path: path.to_path_buf(),
                    line: i + 1,
                    field: field.to_string(),
                })?;
            data.push(value);
        }
    }
    let dim = dim.ok_or_else(|| FactorError::NoRows {
        path: path.to_path_buf(),
    })?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(FactorError::DimMismatch {
                path: path.to_path_buf(),
                expected,
                found: dim,
            });
        }
    }
    Ok(FactorMatrix { dim, data })
}

/// Dataset-backed environment with a fixed pool of `arms` item rows.
pub fn dataset_env<R: Rng + ?Sized>(
    items: &FactorMatrix,
    users: &FactorMatrix,
    arms: usize,
    n_users: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<EnvironmentModel> {
    if items.dim() != users.dim() {
        return Err(Error::DimensionMismatch {
            expected: items.dim(),
            actual: users.dim(),
        });
    }
    if arms == 0 || arms > items.rows() {
        return Err(Error::param(
            "K",
            format!("must lie in 1..={}, got {arms}", items.rows()),
        ));
    }
    if n_users == 0 || n_users > users.rows() {
        return Err(Error::param(
            "n_users",
            format!("must lie in 1..={}, got {n_users}", users.rows()),
        ));
    }
    let d = items.dim();

    let mut theta = vec![0.0; d];
    for u in sample(rng, users.rows(), n_users) {
        for (t, v) in theta.iter_mut().zip(users.row(u)) {
            *t += v / n_users as f64;
        }
    }
    let theta_norm = l2_norm(&theta);
    if theta_norm > 1.0 {
        theta.iter_mut().for_each(|t| *t /= theta_norm);
    }

    let chosen: Vec<usize> = sample(rng, items.rows(), arms).into_vec();
    let max_norm = chosen
        .iter()
        .map(|&i| l2_norm(items.row(i)))
        .fold(0.0, f64::max);
    let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
    let mut flat = Vec::with_capacity(arms * d);
    for &i in &chosen {
        flat.extend(items.row(i).iter().map(|v| v * scale));
    }
    let pool = ContextSet::from_flat(d, flat)?;
    let raw: Vec<f64> = pool.arms().map(|x| dot(x, &theta)).collect();
    EnvironmentModel::new(
        theta,
        noise_sd,
        ArmSource::Pool(pool),
        MeanTransform::min_max(&raw),
    )
}

impl fmt::Display for ArmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArmSource::Generator { arms, .. } => write!(f, "generator({arms} arms)"),
            ArmSource::Pool(pool) => write!(f, "pool({} arms)", pool.len()),
        }
    }
}

//! Incremental ridge regression and exploration radii.
//!
//! Every policy in the crate keeps a [`RidgeState`]:
//!
//! ```text
//!   V_t     = λI + Σ_{s<t} x_s x_sᵀ        (gram)
//!   b_t     = Σ_{s<t} x_s y_s              (moment)
//!   θ̂_t     = V_t⁻¹ b_t                    (estimate)
//!   γ_t²    = Σ_{s<t} ‖x_s‖²_{V_s⁻¹}        (gamma_sq, pre-update inverse)
//! ```
//!
//! The inverse is maintained with a rank-1 Sherman–Morrison update and
//! recomputed from the gram matrix by Cholesky every [`REFRESH_INTERVAL`]
//! updates to bound floating-point drift.

use crate::error::{Error, Result};

/// Number of rank-1 updates between full re-inversions of the gram matrix.
pub const REFRESH_INTERVAL: u64 = 10_000;

/// Slack allowed on the unit-norm feature constraint.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// A feature vector with Euclidean norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature entry"));
        }
        let norm = l2_norm(&entries);
        if norm > 1.0 + NORM_TOLERANCE {
            return Err(Error::NormExceeded { norm });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Noise scale, confidence level, regularizer and dimension feeding `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationParams {
    pub sigma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub dim: usize,
}

impl ExplorationParams {
    pub fn new(sigma: f64, delta: f64, lambda: f64, dim: usize) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be finite and non-negative"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        Ok(Self {
            sigma,
            delta,
            lambda,
            dim,
        })
    }
}

/// Confidence radius of the clean ridge estimator at round `t` (1-based).
pub fn beta(t: u64, params: &ExplorationParams) -> f64 {
    let t = t.max(1) as f64;
    let d = params.dim as f64;
    let log_term = ((1.0 + t / params.lambda) / params.delta).ln();
    params.sigma * (d * log_term).sqrt() + params.lambda.sqrt()
}

/// A-priori upper bound on γ_t, valid when λ ≥ max(1, max‖x‖²).
pub fn gamma_bound(t: u64, dim: usize, lambda: f64) -> f64 {
    let d = dim as f64;
    let steps = t.saturating_sub(1) as f64;
    (2.0 * d * (steps / (d * lambda)).ln_1p()).sqrt()
}

/// Regularized least-squares state shared by every policy.
#[derive(Debug, Clone)]
pub struct RidgeState {
    lambda: f64,
    dim: usize,
    gram: Vec<f64>,
    gram_inv: Vec<f64>,
    moment: Vec<f64>,
    estimate: Vec<f64>,
    gamma_sq: f64,
    count: u64,
    scratch: Vec<f64>,
}

impl RidgeState {
    pub fn new(lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        let mut gram = vec![0.0; dim * dim];
        let mut gram_inv = vec![0.0; dim * dim];
        for i in 0..dim {
            gram[i * dim + i] = lambda;
            gram_inv[i * dim + i] = 1.0 / lambda;
        }
        Ok(Self {
            lambda,
            dim,
            gram,
            gram_inv,
            moment: vec![0.0; dim],
            estimate: vec![0.0; dim],
            gamma_sq: 0.0,
            count: 0,
            scratch: vec![0.0; dim],
        })
    }

    /// Restart from λI, keeping λ and the dimension.
    pub fn reset(&mut self) {
        let d = self.dim;
        self.gram.iter_mut().for_each(|v| *v = 0.0);
        self.gram_inv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            self.gram[i * d + i] = self.lambda;
            self.gram_inv[i * d + i] = 1.0 / self.lambda;
        }
        self.moment.iter_mut().for_each(|v| *v = 0.0);
        self.estimate.iter_mut().for_each(|v| *v = 0.0);
        self.gamma_sq = 0.0;
        self.count = 0;
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Row-major d×d gram matrix.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// Row-major d×d maintained inverse of the gram matrix.
    pub fn gram_inv(&self) -> &[f64] {
        &self.gram_inv
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    pub fn gamma_sq(&self) -> f64 {
        self.gamma_sq
    }

    /// γ_t: root of the running sum of pre-update self-normalized norms.
    pub fn gamma(&self) -> f64 {
        self.gamma_sq.sqrt()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// ‖x‖_{V⁻¹}, with tiny negative quadratic forms clamped to zero.
    pub fn weighted_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.weighted_norm_sq_unchecked(x).sqrt())
    }

    pub(crate) fn weighted_norm_sq_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for (i, row) in self.gram_inv.chunks_exact(d).enumerate() {
            q += x[i] * dot(row, x);
        }
        q.max(0.0)
    }

    /// xᵀθ̂ without a dimension check.
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        dot(&self.estimate, x)
    }

    /// Absorb one observation `(x, y)`.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check_dim(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature entry"));
        }
        let d = self.dim;

        // v = V⁻¹x with the pre-update inverse
        for (i, row) in self.gram_inv.chunks_exact(d).enumerate() {
            self.scratch[i] = dot(row, x);
        }
        let quad = dot(x, &self.scratch).max(0.0);
        self.gamma_sq += quad;

        let denom = 1.0 + quad;
        for i in 0..d {
            for j in 0..d {
                self.gram[i * d + j] += x[i] * x[j];
                self.gram_inv[i * d + j] -= self.scratch[i] * self.scratch[j] / denom;
            }
        }
        for (m, &xi) in self.moment.iter_mut().zip(x) {
            *m += xi * y;
        }
        self.count += 1;

        if self.count.is_multiple_of(REFRESH_INTERVAL) {
            self.refresh_inverse()?;
        }
        self.recompute_estimate();
        Ok(())
    }

    /// Replace the maintained inverse with a fresh Cholesky inverse of the gram.
    pub fn refresh_inverse(&mut self) -> Result<()> {
        self.gram_inv = spd_inverse(&self.gram, self.dim).ok_or(Error::NotPositiveDefinite)?;
        self.recompute_estimate();
        Ok(())
    }

    fn recompute_estimate(&mut self) {
        let d = self.dim;
        for (i, row) in self.gram_inv.chunks_exact(d).enumerate() {
            self.estimate[i] = dot(row, &self.moment);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Lower Cholesky factor of a symmetric positive-definite row-major matrix.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum.is_nan() || sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub(crate) fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    // L⁻¹ by forward substitution, column by column
    let mut linv = vec![0.0; n * n];
    for col in 0..n {
        for i in col..n {
            let mut sum = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                sum -= l[i * n + k] * linv[k * n + col];
            }
            linv[i * n + col] = sum / l[i * n + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in i..n {
                sum += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = sum;
            inv[j * n + i] = sum;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_scaled_identity() {
        let s = RidgeState::new(0.1, 10).unwrap();
        assert!(s.estimate().iter().all(|&v| v == 0.0));
        for i in 0..10 {
            for j in 0..10 {
                let expected = if i == j { 0.1 } else { 0.0 };
                assert_eq!(s.gram()[i * 10 + j], expected);
            }
        }
        assert_eq!(s.gamma(), 0.0);
        assert_eq!(s.count(), 0);

        let one = RidgeState::new(1.0, 1).unwrap();
        assert_eq!(one.gram_inv(), &[1.0]);
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(RidgeState::new(0.0, 3).is_err());
        assert!(RidgeState::new(-1.0, 3).is_err());
        assert!(RidgeState::new(1.0, 0).is_err());
    }

    #[test]
    fn scalar_update() {
        let mut s = RidgeState::new(1.0, 1).unwrap();
        s.update(&[1.0], 1.0).unwrap();
        assert_eq!(s.gram(), &[2.0]);
        assert!((s.estimate()[0] - 0.5).abs() < 1e-15);
        // pre-update inverse was 1
        assert!((s.gamma() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_feature_changes_nothing_but_count() {
        let mut s = RidgeState::new(1.0, 2).unwrap();
        s.update(&[0.0, 0.0], 0.7).unwrap();
        assert_eq!(s.gram(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.estimate(), &[0.0, 0.0]);
        assert_eq!(s.gamma_sq(), 0.0);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn update_errors() {
        let mut s = RidgeState::new(1.0, 2).unwrap();
        assert!(matches!(
            s.update(&[1.0], 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(s.update(&[0.1, 0.1], f64::NAN), Err(Error::NonFinite("reward")));
        assert!(s.weighted_norm(&[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn weighted_norm_cases() {
        let s = RidgeState::new(4.0, 3).unwrap();
        assert!((s.weighted_norm(&[0.0, 1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.weighted_norm(&[0.0; 3]).unwrap(), 0.0);

        let mut s = RidgeState::new(1.0, 2).unwrap();
        s.update(&[1.0, 0.0], 0.3).unwrap();
        assert!((s.weighted_norm(&[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn beta_values() {
        let p = ExplorationParams::new(0.1, 0.01, 0.1, 10).unwrap();
        // 0.1·√(10·ln 1100) + √0.1
        assert!((beta(1, &p) - 1.153_070_968_700_977).abs() < 1e-12);

        let quiet = ExplorationParams::new(0.0, 0.01, 0.25, 4).unwrap();
        for t in [1, 10, 1000] {
            assert_eq!(beta(t, &quiet), 0.5);
        }
        let mut prev = 0.0;
        for t in 1..500 {
            let b = beta(t, &p);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn exploration_params_validation() {
        assert!(ExplorationParams::new(0.1, 1.0, 0.1, 2).is_err());
        assert!(ExplorationParams::new(0.1, 0.0, 0.1, 2).is_err());
        assert!(ExplorationParams::new(0.1, 0.5, 0.0, 2).is_err());
        assert!(ExplorationParams::new(0.1, 0.5, 0.1, 0).is_err());
        assert!(ExplorationParams::new(-0.1, 0.5, 0.1, 1).is_err());
    }

    #[test]
    fn gamma_bound_values() {
        assert_eq!(gamma_bound(1, 5, 1.0), 0.0);
        // √(20·ln 11)
        assert!((gamma_bound(101, 10, 1.0) - 6.925_164_651_903_044).abs() < 1e-12);
    }

    #[test]
    fn feature_vector_norm_check() {
        assert!(FeatureVector::new(vec![0.6, 0.8]).is_ok());
        assert!(matches!(
            FeatureVector::new(vec![0.8, 0.8]),
            Err(Error::NormExceeded { .. })
        ));
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn spd_inverse_small() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let inv = spd_inverse(&a, 2).unwrap();
        // det = 8
        let expected = [3.0 / 8.0, -2.0 / 8.0, -2.0 / 8.0, 4.0 / 8.0];
        for (x, y) in inv.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(spd_inverse(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn reset_restores_fresh_state() {
        let mut s = RidgeState::new(0.5, 2).unwrap();
        s.update(&[0.3, 0.4], 1.0).unwrap();
        s.reset();
        let fresh = RidgeState::new(0.5, 2).unwrap();
        assert_eq!(s.gram(), fresh.gram());
        assert_eq!(s.gram_inv(), fresh.gram_inv());
        assert_eq!(s.estimate(), fresh.estimate());
        assert_eq!(s.count(), 0);
        assert_eq!(s.gamma(), 0.0);
    }
}

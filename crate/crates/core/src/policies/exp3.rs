use rand::Rng;

use crate::error::{Error, Result};

/// `⌈log₂ n⌉` for `n ≥ 1`.
fn ceil_log2(n: u128) -> u32 {
    if n <= 1 {
        0
    } else {
        128 - (n - 1).leading_zeros()
    }
}

/// Candidate budgets `{0} ∪ {2⁰, …, 2^m}` for the meta layer.
///
/// `m = ⌈log₂ 2KT⌉` when the context may be attacked (the budget can reach
/// `2KT`), otherwise `m = ⌈log₂ T⌉`.
pub fn candidate_set(arms: usize, horizon: u64, context_attack_possible: bool) -> Vec<f64> {
    let arms = arms.max(1) as u128;
    let horizon = horizon.max(1) as u128;
    let max_budget = if context_attack_possible {
        2 * arms * horizon
    } else {
        horizon
    };
    let top = ceil_log2(max_budget);
    std::iter::once(0.0)
        .chain((0..=top).map(|j| 2f64.powi(j as i32)))
        .collect()
}

/// Exponential weights over the candidate set, stored as logs.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    alpha: f64,
    candidates: Vec<f64>,
}

impl Exp3State {
    /// Uniform weights and `α = min{1, √(|J| ln|J| / ((e−1)·epochs))}`.
    pub fn new(candidates: Vec<f64>, epochs: u64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::param("candidates", "must not be empty"));
        }
        if candidates.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::param("candidates", "must be finite and non-negative"));
        }
        if candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("candidates", "must be strictly increasing"));
        }
        if epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        let n = candidates.len() as f64;
        let e_minus_one = std::f64::consts::E - 1.0;
        let alpha = (n * n.ln() / (e_minus_one * epochs as f64)).sqrt().min(1.0);
        Ok(Self {
            log_weights: vec![0.0; candidates.len()],
            alpha,
            candidates,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Overwrite the log-weights; used to set up specific mixtures.
    pub fn set_log_weights(&mut self, log_weights: Vec<f64>) -> Result<()> {
        if log_weights.len() != self.candidates.len() {
            return Err(Error::DimensionMismatch {
                expected: self.candidates.len(),
                actual: log_weights.len(),
            });
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("log weight"));
        }
        self.log_weights = log_weights;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// `p_j = α/|J| + (1−α)·w_j/Σw`, softmax taken with max-subtraction.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = self.log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        shifted
            .into_iter()
            .map(|w| self.alpha / n + (1.0 - self.alpha) * w / total)
            .collect()
    }

    /// Sample an index by inverse CDF on one uniform draw. Returns the index
    /// and its probability.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let probs = self.probabilities();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return (j, p);
            }
        }
        // u landed in the rounding gap above the final partial sum
        let last = probs.len() - 1;
        (last, probs[last])
    }

    /// Importance-weighted gain for the chosen candidate; reward must be in [0, 1].
    pub fn update(&mut self, chosen: usize, reward: f64, prob: f64) -> Result<()> {
        if chosen >= self.len() {
            return Err(Error::ArmOutOfRange {
                index: chosen,
                arms: self.len(),
            });
        }
        if !(prob > 0.0 && prob <= 1.0 + 1e-12) {
            return Err(Error::param("prob", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::param("epoch_reward", "must lie in [0, 1]"));
        }
        let n = self.len() as f64;
        self.log_weights[chosen] += self.alpha / n * (reward / prob);
        Ok(())
    }
}

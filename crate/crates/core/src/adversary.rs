//! Budget-constrained attacks on rewards and context.
//!
//! Every attack is all-or-nothing: it is applied only when its full cost fits
//! in the remaining budget, so `spent ≤ budget` holds exactly after every
//! round. Attacked rewards stay in `[0, 1]` and attacked features keep norm at
//! most one, so the corruption is admissible to the player.
//!
//! Reward attacks see the pulled arm. The context attack runs before the pull
//! and has no pulled-arm parameter.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::l2_norm;
use crate::policies::ContextSet;

/// Standard deviation of the noise that replaces a Garcelon-attacked reward.
pub const GARCELON_NOISE_SD: f64 = 0.1;

/// Total budget and cumulative spend of one attacker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackLedger {
    budget: f64,
    spent: f64,
}

impl AttackLedger {
    pub fn new(budget: f64) -> Result<Self> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(Error::param("C", "must be finite and non-negative"));
        }
        Ok(Self { budget, spent: 0.0 })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.spent
    }

    /// Charge `cost` if the whole amount fits; returns whether it was charged.
    pub fn try_spend(&mut self, cost: f64) -> bool {
        let next = self.spent + cost;
        if cost >= 0.0 && next <= self.budget {
            self.spent = next;
            true
        } else {
            false
        }
    }
}

/// Result of one attack decision.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub applied: bool,
    pub cost: f64,
    pub attacked_reward: Option<f64>,
    pub attacked_context: Option<ContextSet>,
}

impl AttackOutcome {
    pub fn untouched() -> Self {
        Self {
            applied: false,
            cost: 0.0,
            attacked_reward: None,
            attacked_context: None,
        }
    }

    fn reward(value: f64, cost: f64) -> Self {
        Self {
            applied: true,
            cost,
            attacked_reward: Some(value),
            attacked_context: None,
        }
    }
}

/// Attack strategy selected by an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Garcelon,
    Oracle,
    ContextDilation {
        #[serde(default)]
        eta: f64,
    },
}

impl AttackKind {
    pub fn targets_context(&self) -> bool {
        matches!(self, AttackKind::ContextDilation { .. })
    }

    pub fn targets_reward(&self) -> bool {
        matches!(self, AttackKind::Garcelon | AttackKind::Oracle)
    }
}

/// Arms holding the `n` largest true means; ties go to the lower index.
/// Returned in ascending index order.
pub fn top_n_targets(true_means: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > true_means.len() {
        return Err(Error::param(
            "top_n",
            format!("must lie in 1..={}, got {n}", true_means.len()),
        ));
    }
    let mut order: Vec<usize> = (0..true_means.len()).collect();
    // stable sort keeps lower indices first among equal means
    order.sort_by(|&a, &b| true_means[b].total_cmp(&true_means[a]));
    let mut top = order[..n].to_vec();
    top.sort_unstable();
    Ok(top)
}

/// Garcelon reward attack with an explicit noise draw.
pub fn garcelon_with_draw(
    true_reward: f64,
    pulled_in_trigger_set: bool,
    ledger: &mut AttackLedger,
    noise: f64,
) -> AttackOutcome {
    if !pulled_in_trigger_set {
        return AttackOutcome::untouched();
    }
    let attacked = noise.clamp(0.0, 1.0);
    let cost = (attacked - true_reward).abs();
    if ledger.try_spend(cost) {
        AttackOutcome::reward(attacked, cost)
    } else {
        AttackOutcome::untouched()
    }
}

/// Replace a triggered pull's reward with clamped `N(0, 0.01)` noise.
pub fn garcelon_reward_attack<R: Rng + ?Sized>(
    true_reward: f64,
    pulled_in_trigger_set: bool,
    ledger: &mut AttackLedger,
    rng: &mut R,
) -> AttackOutcome {
    if !pulled_in_trigger_set {
        return AttackOutcome::untouched();
    }
    let noise = Normal::new(0.0, GARCELON_NOISE_SD)
        .expect("constant standard deviation")
        .sample(rng);
    garcelon_with_draw(true_reward, true, ledger, noise)
}

/// Push a triggered pull's reward to `ε₀` below the worst arm's mean.
pub fn oracle_reward_attack(
    true_means: &[f64],
    pulled: usize,
    true_reward: f64,
    eps0: f64,
    trigger_set: &[usize],
    ledger: &mut AttackLedger,
) -> Result<AttackOutcome> {
    if eps0.is_nan() || eps0 <= 0.0 {
        return Err(Error::param("eps0", "must be positive"));
    }
    if pulled >= true_means.len() {
        return Err(Error::ArmOutOfRange {
            index: pulled,
            arms: true_means.len(),
        });
    }
    if !trigger_set.contains(&pulled) {
        return Ok(AttackOutcome::untouched());
    }
    let worst = true_means.iter().copied().fold(f64::INFINITY, f64::min);
    let target = (worst - eps0).clamp(0.0, 1.0);
    if true_reward <= target {
        return Ok(AttackOutcome::untouched());
    }
    let cost = true_reward - target;
    if ledger.try_spend(cost) {
        Ok(AttackOutcome::reward(target, cost))
    } else {
        Ok(AttackOutcome::untouched())
    }
}

/// Shrink every trigger-set arm to `η·x`; costs `Σ (1−η)‖x‖`.
pub fn context_dilation_attack(
    true_ctx: &ContextSet,
    trigger_set: &[usize],
    eta: f64,
    ledger: &mut AttackLedger,
) -> Result<AttackOutcome> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::param("eta", "must lie in [0, 1)"));
    }
    if let Some(&bad) = trigger_set.iter().find(|&&a| a >= true_ctx.len()) {
        return Err(Error::ArmOutOfRange {
            index: bad,
            arms: true_ctx.len(),
        });
    }
    if trigger_set.is_empty() {
        return Ok(AttackOutcome::untouched());
    }
    let cost: f64 = trigger_set
        .iter()
        .map(|&a| (1.0 - eta) * l2_norm(true_ctx.arm(a)))
        .sum();
    if !ledger.try_spend(cost) {
        return Ok(AttackOutcome::untouched());
    }
    let mut attacked = true_ctx.clone();
    for &a in trigger_set {
        attacked.arm_mut(a).iter_mut().for_each(|v| *v *= eta);
    }
    Ok(AttackOutcome {
        applied: true,
        cost,
        attacked_reward: None,
        attacked_context: Some(attacked),
    })
}

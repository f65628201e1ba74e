use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    candidate_set, greedy_select, lints_select, linucb_select, robust_linucb_select,
    BobNoRestart, ContextSet, RobustBandit,
};
use crate::error::{Error, Result};
use crate::linalg::{beta, ExplorationParams, RidgeState};

/// A policy as named in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Linucb,
    Lints {
        #[serde(default)]
        scale: Option<f64>,
    },
    Greedy,
    RobustLinucb {
        c_prime: f64,
    },
    Robustbandit,
    BobNoRestart,
}

impl PolicyKind {
    /// Stable identifier used for file names and random sub-stream labels.
    pub fn label(&self) -> String {
        match self {
            PolicyKind::Linucb => "linucb".into(),
            PolicyKind::Lints { scale: None } => "lints".into(),
            PolicyKind::Lints { scale: Some(s) } => format!("lints_s{s}"),
            PolicyKind::Greedy => "greedy".into(),
            PolicyKind::RobustLinucb { c_prime } => format!("robust_linucb_c{c_prime}"),
            PolicyKind::Robustbandit => "robustbandit".into(),
            PolicyKind::BobNoRestart => "bob_no_restart".into(),
        }
    }
}

/// Default posterior scale for LinTS: `σ·√(d·ln(T/δ))`.
pub fn default_lints_scale(params: &ExplorationParams, horizon: u64) -> f64 {
    let ratio = (horizon.max(1) as f64 / params.delta).max(1.0);
    params.sigma * (params.dim as f64 * ratio.ln()).sqrt()
}

#[derive(Debug, Clone)]
enum Inner {
    LinUcb(RidgeState),
    LinTs { ridge: RidgeState, scale: f64 },
    Greedy(RidgeState),
    RobustLinUcb { ridge: RidgeState, c_prime: f64 },
    RobustBandit(Box<RobustBandit>),
    Bob(Box<BobNoRestart>),
}

/// Any decision rule, driven through a uniform select/absorb cycle.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    params: ExplorationParams,
    inner: Inner,
    round: u64,
}

impl Policy {
    /// `arms` and `horizon` size the candidate budget set of the two-layer
    /// policies; `epoch_length` is only read by RobustBandit.
    pub fn new(
        kind: PolicyKind,
        params: ExplorationParams,
        horizon: u64,
        arms: usize,
        epoch_length: u64,
    ) -> Result<Self> {
        let ridge = || RidgeState::new(params.lambda, params.dim);
        let inner = match &kind {
            PolicyKind::Linucb => Inner::LinUcb(ridge()?),
            PolicyKind::Lints { scale } => {
                let scale = scale.unwrap_or_else(|| default_lints_scale(&params, horizon));
                if !(scale >= 0.0 && scale.is_finite()) {
                    return Err(Error::param("scale", "must be finite and non-negative"));
                }
                Inner::LinTs {
                    ridge: ridge()?,
                    scale,
                }
            }
            PolicyKind::Greedy => Inner::Greedy(ridge()?),
            PolicyKind::RobustLinucb { c_prime } => {
                if !(*c_prime >= 0.0 && c_prime.is_finite()) {
                    return Err(Error::param("c_prime", "must be finite and non-negative"));
                }
                Inner::RobustLinUcb {
                    ridge: ridge()?,
                    c_prime: *c_prime,
                }
            }
            PolicyKind::Robustbandit => Inner::RobustBandit(Box::new(RobustBandit::new(
                params,
                horizon,
                epoch_length,
                candidate_set(arms, horizon, true),
            )?)),
            PolicyKind::BobNoRestart => Inner::Bob(Box::new(BobNoRestart::new(
                params,
                horizon,
                candidate_set(arms, horizon, true),
            )?)),
        };
        Ok(Self {
            kind,
            params,
            inner,
            round: 0,
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn select<R: Rng + ?Sized>(&mut self, ctx: &ContextSet, rng: &mut R) -> Result<usize> {
        let t = self.round + 1;
        match &mut self.inner {
            Inner::LinUcb(ridge) => linucb_select(ridge, ctx, beta(t, &self.params)),
            Inner::LinTs { ridge, scale } => lints_select(ridge, ctx, *scale, rng),
            Inner::Greedy(ridge) => greedy_select(ridge, ctx),
            Inner::RobustLinUcb { ridge, c_prime } => robust_linucb_select(
                ridge,
                ctx,
                beta(t, &self.params),
                ridge.gamma(),
                *c_prime,
            ),
            Inner::RobustBandit(rb) => rb.step(ctx, rng),
            Inner::Bob(bob) => bob.step(ctx, rng),
        }
    }

    /// Observed feature of the pulled arm and the observed reward.
    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<()> {
        match &mut self.inner {
            Inner::LinUcb(ridge)
            | Inner::LinTs { ridge, .. }
            | Inner::Greedy(ridge)
            | Inner::RobustLinUcb { ridge, .. } => ridge.update(x, y)?,
            Inner::RobustBandit(rb) => rb.absorb_reward(x, y)?,
            Inner::Bob(bob) => bob.absorb_reward(x, y)?,
        }
        self.round += 1;
        Ok(())
    }

    /// End-of-run bookkeeping (closes RobustBandit's final epoch).
    pub fn finish(&mut self) -> Result<()> {
        match &mut self.inner {
            Inner::RobustBandit(rb) => rb.finish(),
            _ => Ok(()),
        }
    }

    /// Budget guess used at the latest selection, for policies that have one.
    pub fn c_prime(&self) -> Option<f64> {
        match &self.inner {
            Inner::RobustLinUcb { c_prime, .. } => Some(*c_prime),
            Inner::RobustBandit(rb) => Some(rb.c_prime()),
            Inner::Bob(bob) => Some(bob.c_prime()),
            _ => None,
        }
    }

    pub fn ridge(&self) -> &RidgeState {
        match &self.inner {
            Inner::LinUcb(ridge)
            | Inner::LinTs { ridge, .. }
            | Inner::Greedy(ridge)
            | Inner::RobustLinUcb { ridge, .. } => ridge,
            Inner::RobustBandit(rb) => rb.ridge(),
            Inner::Bob(bob) => bob.ridge(),
        }
    }
}

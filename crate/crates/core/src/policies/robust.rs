//! Two-layer policies: an EXP3 layer picks the budget guess `C′`, an enlarged
//! LinUCB layer picks the arm.
//!
//! [`RobustBandit`] redraws `C′` once per epoch of `H` rounds and restarts the
//! ridge state at every epoch boundary. The EXP3 gain for an epoch is the sum
//! of observed rewards divided by the epoch's actual length, so the update
//! argument stays in `[0, 1]` whatever `H` is.
//!
//! [`BobNoRestart`] redraws `C′` every round, feeds the single observed reward
//! to EXP3 and never restarts the ridge state.
//!
//! Both expose `step` (choose an arm for the current round) and
//! `absorb_reward` (observed feature and reward of the pulled arm), which must
//! alternate.

use rand::Rng;

use super::{robust_linucb_select, ContextSet, Exp3State};
use crate::error::{Error, Result};
use crate::linalg::{beta, ExplorationParams, RidgeState};

/// EXP3 gains must lie in [0, 1]; observed rewards carry unclipped noise.
fn as_gain(reward: f64) -> f64 {
    reward.clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct RobustBandit {
    exp3: Exp3State,
    ridge: RidgeState,
    params: ExplorationParams,
    epoch_length: u64,
    epoch_index: u64,
    epoch_open: bool,
    chosen_index: usize,
    chosen_prob: f64,
    epoch_reward_sum: f64,
    round_in_epoch: u64,
    round: u64,
    awaiting_reward: bool,
}

impl RobustBandit {
    pub fn new(
        params: ExplorationParams,
        horizon: u64,
        epoch_length: u64,
        candidates: Vec<f64>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::param("T", "must be at least 1"));
        }
        if epoch_length == 0 {
            return Err(Error::param("epoch_length", "must be at least 1"));
        }
        let epochs = horizon.div_ceil(epoch_length);
        Ok(Self {
            exp3: Exp3State::new(candidates, epochs)?,
            ridge: RidgeState::new(params.lambda, params.dim)?,
            params,
            epoch_length,
            epoch_index: 0,
            epoch_open: false,
            chosen_index: 0,
            chosen_prob: 1.0,
            epoch_reward_sum: 0.0,
            round_in_epoch: 0,
            round: 0,
            awaiting_reward: false,
        })
    }

    pub fn exp3(&self) -> &Exp3State {
        &self.exp3
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn epoch_length(&self) -> u64 {
        self.epoch_length
    }

    /// 1-based index of the current epoch; 0 before the first step.
    pub fn epoch_index(&self) -> u64 {
        self.epoch_index
    }

    pub fn round_in_epoch(&self) -> u64 {
        self.round_in_epoch
    }

    pub fn chosen_index(&self) -> usize {
        self.chosen_index
    }

    pub fn chosen_prob(&self) -> f64 {
        self.chosen_prob
    }

    pub fn epoch_reward_sum(&self) -> f64 {
        self.epoch_reward_sum
    }

    /// Budget guess in force for the current (or most recent) epoch.
    pub fn c_prime(&self) -> f64 {
        self.exp3.candidates()[self.chosen_index]
    }

    fn close_epoch(&mut self) -> Result<()> {
        if self.epoch_open && self.round_in_epoch > 0 {
            let gain = as_gain(self.epoch_reward_sum / self.round_in_epoch as f64);
            self.exp3.update(self.chosen_index, gain, self.chosen_prob)?;
        }
        self.epoch_open = false;
        self.epoch_reward_sum = 0.0;
        self.round_in_epoch = 0;
        Ok(())
    }

    fn open_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (index, prob) = self.exp3.draw(rng);
        self.chosen_index = index;
        self.chosen_prob = prob;
        self.ridge.reset();
        self.epoch_index += 1;
        self.epoch_open = true;
    }

    pub fn step<R: Rng + ?Sized>(&mut self, ctx: &ContextSet, rng: &mut R) -> Result<usize> {
        if self.awaiting_reward {
            return Err(Error::Protocol("step called twice without absorb_reward"));
        }
        if self.epoch_open && self.round_in_epoch == self.epoch_length {
            self.close_epoch()?;
        }
        if !self.epoch_open {
            self.open_epoch(rng);
        }
        let t = self.round + 1;
        let arm = robust_linucb_select(
            &self.ridge,
            ctx,
            beta(t, &self.params),
            self.ridge.gamma(),
            self.c_prime(),
        )?;
        self.awaiting_reward = true;
        Ok(arm)
    }

    pub fn absorb_reward(&mut self, x: &[f64], y: f64) -> Result<()> {
        if !self.awaiting_reward {
            return Err(Error::Protocol("absorb_reward called before step"));
        }
        self.ridge.update(x, y)?;
        self.epoch_reward_sum += y;
        self.round_in_epoch += 1;
        self.round += 1;
        self.awaiting_reward = false;
        Ok(())
    }

    /// Feed the last (possibly short) epoch to EXP3 at the end of a run.
    pub fn finish(&mut self) -> Result<()> {
        if self.awaiting_reward {
            return Err(Error::Protocol("finish called with a pending pull"));
        }
        self.close_epoch()
    }
}

#[derive(Debug, Clone)]
pub struct BobNoRestart {
    exp3: Exp3State,
    ridge: RidgeState,
    params: ExplorationParams,
    chosen_index: usize,
    chosen_prob: f64,
    round: u64,
    awaiting_reward: bool,
}

impl BobNoRestart {
    pub fn new(params: ExplorationParams, horizon: u64, candidates: Vec<f64>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::param("T", "must be at least 1"));
        }
        Ok(Self {
            exp3: Exp3State::new(candidates, horizon)?,
            ridge: RidgeState::new(params.lambda, params.dim)?,
            params,
            chosen_index: 0,
            chosen_prob: 1.0,
            round: 0,
            awaiting_reward: false,
        })
    }

    pub fn exp3(&self) -> &Exp3State {
        &self.exp3
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn chosen_index(&self) -> usize {
        self.chosen_index
    }

    pub fn chosen_prob(&self) -> f64 {
        self.chosen_prob
    }

    pub fn c_prime(&self) -> f64 {
        self.exp3.candidates()[self.chosen_index]
    }

    pub fn step<R: Rng + ?Sized>(&mut self, ctx: &ContextSet, rng: &mut R) -> Result<usize> {
        if self.awaiting_reward {
            return Err(Error::Protocol("step called twice without absorb_reward"));
        }
        let (index, prob) = self.exp3.draw(rng);
        self.chosen_index = index;
        self.chosen_prob = prob;
        let t = self.round + 1;
        let arm = robust_linucb_select(
            &self.ridge,
            ctx,
            beta(t, &self.params),
            self.ridge.gamma(),
            self.c_prime(),
        )?;
        self.awaiting_reward = true;
        Ok(arm)
    }

    pub fn absorb_reward(&mut self, x: &[f64], y: f64) -> Result<()> {
        if !self.awaiting_reward {
            return Err(Error::Protocol("absorb_reward called before step"));
        }
        self.ridge.update(x, y)?;
        self.exp3
            .update(self.chosen_index, as_gain(y), self.chosen_prob)?;
        self.round += 1;
        self.awaiting_reward = false;
        Ok(())
    }
}

//! Seeded simulation of one (environment, attack, policy) triple.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{EnvironmentKind, ExperimentConfig};
use super::HarnessError;
use crate::adversary::{
    context_dilation_attack, garcelon_reward_attack, oracle_reward_attack, top_n_targets,
    AttackKind, AttackLedger, AttackOutcome,
};
use crate::environment::{dataset_env, load_factors, synthetic_env, EnvironmentModel, FactorMatrix};
use crate::policies::{ContextSet, Policy, PolicyKind};

/// Budget slack tolerated from floating-point accumulation.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// 64-bit FNV-1a, used to turn sub-stream labels into ChaCha stream ids.
fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent random stream for `label` under a repetition seed.
///
/// Labels in use: `env`, `context`, `noise/<policy>`, `attack/<policy>`,
/// `policy/<policy>`. Streams that do not depend on pulls are shared by
/// every policy of a repetition.
pub fn substream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(label));
    rng
}

/// Per-round records of one run, stored column-wise. Round `t` is at index
/// `t − 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTrace {
    pub cum_regret: Vec<f64>,
    pub budget_spent: Vec<f64>,
    pub chosen_c_prime: Vec<Option<f64>>,
    pub pulled_arm: Vec<usize>,
}

impl RegretTrace {
    pub fn with_capacity(rounds: usize) -> Self {
        Self {
            cum_regret: Vec::with_capacity(rounds),
            budget_spent: Vec::with_capacity(rounds),
            chosen_c_prime: Vec::with_capacity(rounds),
            pulled_arm: Vec::with_capacity(rounds),
        }
    }

    pub fn len(&self) -> usize {
        self.cum_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum_regret.is_empty()
    }

    pub fn push(&mut self, cum_regret: f64, budget_spent: f64, c_prime: Option<f64>, arm: usize) {
        self.cum_regret.push(cum_regret);
        self.budget_spent.push(budget_spent);
        self.chosen_c_prime.push(c_prime);
        self.pulled_arm.push(arm);
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_budget(&self) -> f64 {
        self.budget_spent.last().copied().unwrap_or(0.0)
    }
}

/// Everything that happened in one round, handed to run observers.
#[derive(Debug)]
pub struct RoundEvent<'a> {
    pub round: u64,
    pub true_context: &'a ContextSet,
    pub observed_context: &'a ContextSet,
    pub true_means: &'a [f64],
    pub pulled: usize,
    pub true_reward: f64,
    pub observed_reward: f64,
    pub attack: &'a AttackOutcome,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub budget_spent: f64,
    /// Policy state after absorbing this round's observation.
    pub policy: &'a Policy,
}

/// Results of every policy over every repetition, in config order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub labels: Vec<String>,
    /// `traces[p][r]`: policy `p`, repetition `r`.
    pub traces: Vec<Vec<RegretTrace>>,
}

/// A validated config plus any data files it references.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    epoch_length: u64,
    factors: Option<(FactorMatrix, FactorMatrix)>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let factors = match &config.environment {
            EnvironmentKind::Synthetic => None,
            EnvironmentKind::Dataset { items, users, .. } => Some((
                load_factors(items, Some(config.dim))?,
                load_factors(users, Some(config.dim))?,
            )),
        };
        Ok(Self {
            epoch_length: config.epoch_length(),
            config,
            factors,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Seed of repetition `r`.
    pub fn repetition_seed(&self, r: u64) -> u64 {
        self.config.base_seed.wrapping_add(r)
    }

    /// Ground truth for a repetition seed; identical for every policy.
    pub fn environment(&self, seed: u64) -> Result<EnvironmentModel, HarnessError> {
        let c = &self.config;
        let mut rng = substream(seed, "env");
        let env = match (&c.environment, &self.factors) {
            (EnvironmentKind::Dataset { n_users, .. }, Some((items, users))) => {
                dataset_env(items, users, c.arms, *n_users, c.sigma, &mut rng)?
            }
            _ => synthetic_env(c.dim, c.arms, c.sigma, &mut rng)?,
        };
        Ok(env)
    }

    pub fn run_single(&self, kind: &PolicyKind, seed: u64) -> Result<RegretTrace, HarnessError> {
        self.run_single_observed(kind, seed, |_| {})
    }

    /// Run one policy for `T` rounds. Per round: the environment emits the
    /// true context, a context attack may rewrite it, the policy selects from
    /// what it observes, the true reward is drawn, a reward attack that sees
    /// the pull may rewrite it, the policy absorbs the observation, and
    /// regret accrues on the true context.
    pub fn run_single_observed<F>(
        &self,
        kind: &PolicyKind,
        seed: u64,
        mut observe: F,
    ) -> Result<RegretTrace, HarnessError>
    where
        F: FnMut(&RoundEvent<'_>),
    {
        let c = &self.config;
        let label = kind.label();
        let env = self.environment(seed)?;
        let mut context_rng = substream(seed, "context");
        let mut noise_rng = substream(seed, &format!("noise/{label}"));
        let mut attack_rng = substream(seed, &format!("attack/{label}"));
        let mut policy_rng = substream(seed, &format!("policy/{label}"));

        let mut policy = Policy::new(kind.clone(), c.params(), c.horizon, c.arms, self.epoch_length)?;
        let mut ledger = AttackLedger::new(c.budget)?;
        let top_n = c.top_n();
        let mut trace = RegretTrace::with_capacity(c.horizon as usize);
        let mut cum_regret = 0.0;

        for round in 1..=c.horizon {
            let true_ctx = env.draw_context(&mut context_rng);
            let means = env.true_means(&true_ctx);
            let trigger = if c.attack == AttackKind::None {
                Vec::new()
            } else {
                top_n_targets(&means, top_n)?
            };

            let mut outcome = match c.attack {
                AttackKind::ContextDilation { eta } => {
                    context_dilation_attack(&true_ctx, &trigger, eta, &mut ledger)?
                }
                _ => AttackOutcome::untouched(),
            };
            let observed_ctx = outcome.attacked_context.take();
            let observed = observed_ctx.as_ref().unwrap_or(&true_ctx);

            let pulled = policy.select(observed, &mut policy_rng)?;
            let c_prime = policy.c_prime();
            let true_reward = env.sample_reward(true_ctx.arm(pulled), &mut noise_rng);

            let reward_outcome = match c.attack {
                AttackKind::Garcelon => garcelon_reward_attack(
                    true_reward,
                    trigger.contains(&pulled),
                    &mut ledger,
                    &mut attack_rng,
                ),
                AttackKind::Oracle => {
                    oracle_reward_attack(&means, pulled, true_reward, c.eps0, &trigger, &mut ledger)?
                }
                _ => AttackOutcome::untouched(),
            };
            let observed_reward = reward_outcome.attacked_reward.unwrap_or(true_reward);
            if reward_outcome.applied {
                outcome.applied = true;
                outcome.cost += reward_outcome.cost;
                outcome.attacked_reward = reward_outcome.attacked_reward;
            }
            debug_assert!(ledger.spent() <= ledger.budget() + BUDGET_TOLERANCE);

            policy.absorb(observed.arm(pulled), observed_reward)?;

            let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let regret = (best - means[pulled]).max(0.0);
            cum_regret += regret;
            trace.push(cum_regret, ledger.spent(), c_prime, pulled);

            outcome.attacked_context = observed_ctx.clone();
            observe(&RoundEvent {
                round,
                true_context: &true_ctx,
                observed_context: observed,
                true_means: &means,
                pulled,
                true_reward,
                observed_reward,
                attack: &outcome,
                instant_regret: regret,
                cum_regret,
                budget_spent: ledger.spent(),
                policy: &policy,
            });
        }
        policy.finish()?;
        Ok(trace)
    }

    /// Every (policy, repetition) pair, run independently and in parallel
    /// when a pool is active. Results are ordered, so output does not depend
    /// on scheduling.
    pub fn run_experiment(&self) -> Result<ExperimentResult, HarnessError> {
        let c = &self.config;
        let jobs: Vec<(usize, u64)> = (0..c.policies.len())
            .flat_map(|p| (0..c.repetitions).map(move |r| (p, r)))
            .collect();
        let runs: Vec<RegretTrace> = jobs
            .par_iter()
            .map(|&(p, r)| self.run_single(&c.policies[p], self.repetition_seed(r)))
            .collect::<Result<_, _>>()?;
        let mut runs = runs.into_iter();
        let traces = c
            .policies
            .iter()
            .map(|_| runs.by_ref().take(c.repetitions as usize).collect())
            .collect();
        Ok(ExperimentResult {
            labels: c.policies.iter().map(PolicyKind::label).collect(),
            traces,
        })
    }
}

/// Run `f` on a rayon pool with `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn with_policies(extra: &str) -> ExperimentConfig {
        let text = format!(
            "T = 200\nK = 4\nd = 3\nC = 5.0\nrepetitions = 2\npolicies = [\"linucb\", \"greedy\"]\n{extra}"
        );
        toml::from_str(&text).unwrap()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64("a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn substreams_differ_by_label() {
        let a: u64 = substream(1, "env").gen();
        let b: u64 = substream(1, "context").gen();
        let a2: u64 = substream(1, "env").gen();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn single_arm_has_no_regret() {
        let mut c = with_policies("");
        c.arms = 1;
        c.policies = vec![PolicyKind::Greedy];
        let e = Experiment::new(c).unwrap();
        let t = e.run_single(&PolicyKind::Greedy, 3).unwrap();
        assert!(t.cum_regret.iter().all(|&r| r == 0.0));
        assert!(t.pulled_arm.iter().all(|&a| a == 0));
    }

    #[test]
    fn zero_budget_matches_no_attack() {
        let mut clean = with_policies("");
        clean.budget = 0.0;
        let clean = Experiment::new(clean).unwrap();
        let mut attacked = with_policies("attack = \"garcelon\"");
        attacked.budget = 0.0;
        let attacked = Experiment::new(attacked).unwrap();
        for kind in [PolicyKind::Linucb, PolicyKind::Greedy] {
            assert_eq!(
                clean.run_single(&kind, 9).unwrap(),
                attacked.run_single(&kind, 9).unwrap()
            );
        }
    }

    #[test]
    fn budget_and_regret_monotone() {
        for attack in ["garcelon", "oracle", "context_dilation"] {
            let e = Experiment::new(with_policies(&format!("attack = \"{attack}\""))).unwrap();
            let t = e.run_single(&PolicyKind::Linucb, 0).unwrap();
            assert_eq!(t.len(), 200);
            assert!(t.cum_regret.windows(2).all(|w| w[0] <= w[1]));
            assert!(t.budget_spent.windows(2).all(|w| w[0] <= w[1]));
            assert!(t.final_budget() <= 5.0 + BUDGET_TOLERANCE);
            assert!(t.final_budget() > 0.0, "{attack} never fired");
        }
    }

    #[test]
    fn experiment_layout_and_determinism() {
        let e = Experiment::new(with_policies("attack = \"oracle\"")).unwrap();
        let a = e.run_experiment().unwrap();
        assert_eq!(a.labels, ["linucb", "greedy"]);
        assert_eq!(a.traces.len(), 2);
        assert!(a.traces.iter().all(|reps| reps.len() == 2));
        assert_ne!(a.traces[0][0], a.traces[0][1]);
        assert_eq!(a.traces[0][0], e.run_single(&PolicyKind::Linucb, 0).unwrap());
        let b = with_threads(2, || e.run_experiment().unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn contexts_shared_across_policies() {
        let e = Experiment::new(with_policies("")).unwrap();
        let collect = |kind| {
            let mut seen = Vec::new();
            e.run_single_observed(&kind, 4, |ev| seen.push(ev.true_context.clone()))
                .unwrap();
            seen
        };
        assert_eq!(collect(PolicyKind::Linucb), collect(PolicyKind::Greedy));
    }

    #[test]
    fn adding_a_policy_leaves_others_unchanged() {
        let small = Experiment::new(with_policies("")).unwrap();
        let mut c = with_policies("");
        c.policies.insert(0, PolicyKind::Lints { scale: None });
        let big = Experiment::new(c).unwrap();
        let a = small.run_experiment().unwrap();
        let b = big.run_experiment().unwrap();
        assert_eq!(a.traces[0], b.traces[1]);
        assert_eq!(a.traces[1], b.traces[2]);
    }

    #[test]
    fn missing_factor_file_is_reported() {
        let mut c = with_policies("");
        c.environment = EnvironmentKind::Dataset {
            items: "/nonexistent/items.txt".into(),
            users: "/nonexistent/users.txt".into(),
            n_users: 2,
        };
        assert!(matches!(Experiment::new(c), Err(HarnessError::Factor(_))));
    }
}

//! Reference policies: uniform random, and neural policies without graphs.
//!
//! The greedy exploitation-only ablation is [`GnbPolicy::greedy`].
//!
//! [`GnbPolicy::greedy`]: crate::bandit::GnbPolicy::greedy

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{check_pending, check_reward, derive_seeds, prepare_arms, should_train, Decision, Policy, PolicyConfig};
use crate::context::ArmContext;
use crate::error::{Error, Result};
use crate::user_models::{ServeEstimate, UserModel};

/// Uniformly random arm choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    round: usize,
    pending: Option<(usize, usize)>,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            round: 0,
            pending: None,
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn round(&self) -> usize {
        self.round
    }

    fn recommend(&mut self, user: usize, arms: &[ArmContext]) -> Result<Decision> {
        if arms.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let chosen_index = self.rng.random_range(0..arms.len());
        let round = self.round + 1;
        self.pending = Some((round, user));
        Ok(Decision {
            round,
            user,
            chosen_index,
            scores: vec![(0.0, 0.0); arms.len()],
            tie_broken: false,
        })
    }

    fn observe(&mut self, decision: &Decision, reward: f64) -> Result<()> {
        check_pending(self.pending, decision)?;
        check_reward(reward)?;
        self.pending = None;
        self.round += 1;
        Ok(())
    }

    fn maybe_train(&mut self) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NeuralPending {
    round: usize,
    user: usize,
    model: usize,
    arms: Vec<ArmContext>,
    estimates: Vec<ServeEstimate>,
}

/// Exploitation plus exploration networks scored as `f⁽¹⁾(x) + α f⁽²⁾(∇f⁽¹⁾)`.
///
/// `Ind` keeps one pair per user; `Pool` shares a single pair across users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralPolicy {
    config: PolicyConfig,
    shared: bool,
    dim: usize,
    models: Vec<UserModel>,
    rng: ChaCha8Rng,
    round: usize,
    n_users: usize,
    last_model: Option<usize>,
    pending: Option<NeuralPending>,
}

impl NeuralPolicy {
    /// One network pair per user.
    pub fn individual(config: PolicyConfig, n: usize, dim: usize) -> Result<Self> {
        Self::build(config, n, dim, false)
    }

    /// One network pair for everyone.
    pub fn pooled(config: PolicyConfig, n: usize, dim: usize) -> Result<Self> {
        Self::build(config, n, dim, true)
    }

    fn build(config: PolicyConfig, n: usize, dim: usize, shared: bool) -> Result<Self> {
        config.validate(n, dim)?;
        let count = if shared { 1 } else { n };
        let seeds = derive_seeds(config.seed, count + 1);
        let models = (0..count)
            .map(|u| UserModel::new(u, dim, config.width, config.depth, config.pool, seeds[u]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shared,
            dim,
            models,
            rng: ChaCha8Rng::seed_from_u64(seeds[count]),
            round: 0,
            n_users: n,
            last_model: None,
            pending: None,
            config,
        })
    }

    pub fn models(&self) -> &[UserModel] {
        &self.models
    }

    fn model_of(&self, user: usize) -> usize {
        if self.shared {
            0
        } else {
            user
        }
    }
}

impl Policy for NeuralPolicy {
    fn name(&self) -> &'static str {
        if self.shared {
            "neural-pool"
        } else {
            "neural-ind"
        }
    }

    fn round(&self) -> usize {
        self.round
    }

    fn recommend(&mut self, user: usize, arms: &[ArmContext]) -> Result<Decision> {
        if user >= self.n_users {
            return Err(Error::InvalidArgument(format!("user {user} out of range")));
        }
        let arms = prepare_arms(arms, self.dim)?;
        let model = self.model_of(user);
        let estimates = arms
            .iter()
            .map(|a| self.models[model].serve(&a.features))
            .collect::<Result<Vec<_>>>()?;
        let scores = estimates.iter().map(|e| (e.prediction, e.gain)).collect();
        let decision = Decision::select(self.round + 1, user, scores, self.config.alpha)?;
        self.pending = Some(NeuralPending {
            round: decision.round,
            user,
            model,
            arms,
            estimates,
        });
        Ok(decision)
    }

    fn observe(&mut self, decision: &Decision, reward: f64) -> Result<()> {
        check_pending(self.pending.as_ref().map(|p| (p.round, p.user)), decision)?;
        check_reward(reward)?;
        let p = self.pending.take().expect("checked above");
        let i = decision.chosen_index;
        let (arm, est) = match (p.arms.get(i), p.estimates.get(i)) {
            (Some(a), Some(e)) => (a, e),
            _ => return Err(Error::InvalidArgument(format!("chosen index {i} out of range"))),
        };
        self.models[p.model].record(&arm.features, reward, est)?;
        self.round += 1;
        self.last_model = Some(p.model);
        Ok(())
    }

    fn maybe_train(&mut self) -> Result<bool> {
        let Some(model) = self.last_model else {
            return Ok(false);
        };
        if !should_train(self.round, self.config.train_burnin, self.config.train_every) {
            return Ok(false);
        }
        let cfg = self.config.user_train(true);
        self.models[model].train(&cfg, &mut self.rng)?;
        Ok(true)
    }
}

//! Reward-generating environments.
//!
//! Every environment serves one round at a time: a target user, a set of
//! unit-norm candidate arms, and an [`OracleView`] with the expected reward
//! of each arm. The synthetic world knows its true expected rewards; the
//! file-backed world only knows logged rewards, so its regret is realized
//! rather than pseudo-regret.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::context::ArmContext;
use crate::error::{Error, Result};
use crate::graph::{Kernel, NormalizationMode, UserGraph};
use crate::numerics::{dot, l2_norm};

/// Per-round expected rewards of the candidate arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleView {
    pub expected_rewards: Vec<f64>,
    pub best_value: f64,
}

impl OracleView {
    pub fn new(expected_rewards: Vec<f64>) -> Self {
        let best_value = expected_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            expected_rewards,
            best_value,
        }
    }

    pub fn best_index(&self) -> usize {
        self.expected_rewards
            .iter()
            .position(|&v| v == self.best_value)
            .unwrap_or(0)
    }

    /// Instantaneous regret of choosing `index`.
    pub fn regret(&self, index: usize) -> f64 {
        self.best_value - self.expected_rewards[index]
    }
}

/// What the oracle values mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegretKind {
    /// True expected rewards: pseudo-regret.
    Pseudo,
    /// Logged rewards standing in for expectations.
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub user: usize,
    pub arms: Vec<ArmContext>,
    pub oracle: OracleView,
}

pub trait Environment {
    fn n_users(&self) -> usize;

    /// Arm context dimension.
    fn dim(&self) -> usize;

    fn regret_kind(&self) -> RegretKind;

    fn next_round(&mut self) -> Result<Round>;

    /// Draws the reward for `arm_index` of the current round.
    fn reward(&mut self, arm_index: usize) -> Result<f64>;

    /// Ground-truth exploitation graph for arm `x`, where available.
    fn true_exploitation_graph(&self, _x: &[f64], _gamma: f64, _kernel: Kernel, _mode: NormalizationMode) -> Result<UserGraph> {
        Err(Error::UnsupportedOracle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    /// `σ(s · θ_uᵀx)`
    #[default]
    SigmoidDot,
    /// `(1 + θ_uᵀx) / 2`
    CosineAffinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Noise {
    /// `r ~ Bernoulli(μ)`; zero-mean noise with `r ∈ {0, 1}`.
    #[default]
    Bernoulli,
    /// `r = clamp(μ + σε, 0, 1)`; biased towards the interior near 0 and 1.
    ClampedGaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub dim: usize,
    pub arms: usize,
    /// Number of latent user groups; users are assigned round-robin.
    pub groups: usize,
    /// Standard deviation of per-user jitter around the group centre.
    pub group_spread: f64,
    pub link: Link,
    /// Logit scale `s` for [`Link::SigmoidDot`].
    pub logit_scale: f64,
    pub noise: Noise,
    /// Minimum pairwise distance between arms in a round.
    pub rho: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 10,
            dim: 5,
            arms: 5,
            groups: 2,
            group_spread: 0.1,
            link: Link::SigmoidDot,
            logit_scale: 5.0,
            noise: Noise::Bernoulli,
            rho: 1e-3,
        }
    }
}

const MAX_SEPARATION_ATTEMPTS: usize = 1000;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = l2_norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Collaborative world with latent user vectors and known expected rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnv {
    config: SyntheticConfig,
    latents: Vec<Vec<f64>>,
    groups: Vec<usize>,
    arm_rng: ChaCha8Rng,
    reward_rng: ChaCha8Rng,
    current: Option<(usize, Vec<Vec<f64>>)>,
}

impl SyntheticEnv {
    pub fn new(config: SyntheticConfig, seed: u64) -> Result<Self> {
        if config.users == 0 || config.dim == 0 || config.arms == 0 {
            return Err(Error::Config("synthetic env needs users, dim and arms >= 1".into()));
        }
        if config.groups == 0 || config.groups > config.users {
            return Err(Error::Config(format!(
                "{} groups for {} users",
                config.groups, config.users
            )));
        }
        if !(config.rho >= 0.0) || !(config.group_spread >= 0.0) {
            return Err(Error::Config("rho and group_spread must be non-negative".into()));
        }
        if let Noise::ClampedGaussian { sigma } = config.noise {
            if !(sigma >= 0.0) {
                return Err(Error::Config(format!("noise sigma {sigma} must be non-negative")));
            }
        }
        let mut world = ChaCha8Rng::seed_from_u64(seed);
        let centres: Vec<Vec<f64>> = (0..config.groups).map(|_| random_unit(config.dim, &mut world)).collect();
        let groups: Vec<usize> = (0..config.users).map(|u| u % config.groups).collect();
        let latents = groups
            .iter()
            .map(|&g| {
                let v: Vec<f64> = centres[g]
                    .iter()
                    .map(|c| {
                        let e: f64 = StandardNormal.sample(&mut world);
                        c + config.group_spread * e
                    })
                    .collect();
                let n = l2_norm(&v);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Self::from_latents(config, latents, groups, seed)
    }

    /// Builds an environment around explicit unit-norm user latents.
    pub fn from_latents(config: SyntheticConfig, latents: Vec<Vec<f64>>, groups: Vec<usize>, seed: u64) -> Result<Self> {
        if latents.len() != config.users || groups.len() != config.users {
            return Err(Error::Config("latent count must equal user count".into()));
        }
        if latents.iter().any(|l| l.len() != config.dim) {
            return Err(Error::Config("latent dimension mismatch".into()));
        }
        let mut arm_rng = ChaCha8Rng::seed_from_u64(seed);
        arm_rng.set_stream(1);
        let mut reward_rng = ChaCha8Rng::seed_from_u64(seed);
        reward_rng.set_stream(2);
        Ok(Self {
            config,
            latents,
            groups,
            arm_rng,
            reward_rng,
            current: None,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn latents(&self) -> &[Vec<f64>] {
        &self.latents
    }

    pub fn group_of(&self, user: usize) -> usize {
        self.groups[user]
    }

    /// `μ(u, x) ∈ [0, 1]`.
    pub fn expected_reward(&self, user: usize, x: &[f64]) -> f64 {
        let affinity = dot(&self.latents[user], x);
        match self.config.link {
            Link::SigmoidDot => sigmoid(self.config.logit_scale * affinity),
            Link::CosineAffinity => ((1.0 + affinity) / 2.0).clamp(0.0, 1.0),
        }
    }

    /// One noisy reward for `(user, x)`; consumes exactly one draw.
    pub fn draw_reward(&mut self, user: usize, x: &[f64]) -> f64 {
        let mu = self.expected_reward(user, x);
        match self.config.noise {
            Noise::Bernoulli => {
                let u: f64 = self.reward_rng.random();
                if u < mu {
                    1.0
                } else {
                    0.0
                }
            }
            Noise::ClampedGaussian { sigma } => {
                let e: f64 = StandardNormal.sample(&mut self.reward_rng);
                (mu + sigma * e).clamp(0.0, 1.0)
            }
        }
    }

    fn sample_arms(&mut self) -> Result<Vec<Vec<f64>>> {
        let mut arms: Vec<Vec<f64>> = Vec::with_capacity(self.config.arms);
        while arms.len() < self.config.arms {
            let mut placed = false;
            for _ in 0..MAX_SEPARATION_ATTEMPTS {
                let cand = random_unit(self.config.dim, &mut self.arm_rng);
                if arms.iter().all(|a| distance(a, &cand) >= self.config.rho) {
                    arms.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Separation {
                    attempts: MAX_SEPARATION_ATTEMPTS,
                    rho: self.config.rho,
                });
            }
        }
        Ok(arms)
    }
}

impl Environment for SyntheticEnv {
    fn n_users(&self) -> usize {
        self.config.users
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn regret_kind(&self) -> RegretKind {
        RegretKind::Pseudo
    }

    fn next_round(&mut self) -> Result<Round> {
        let user = self.arm_rng.random_range(0..self.config.users);
        let arms = self.sample_arms()?;
        let oracle = OracleView::new(arms.iter().map(|x| self.expected_reward(user, x)).collect());
        let contexts = arms
            .iter()
            .enumerate()
            .map(|(i, x)| ArmContext::new(i, x.clone()))
            .collect();
        self.current = Some((user, arms));
        Ok(Round {
            user,
            arms: contexts,
            oracle,
        })
    }

    fn reward(&mut self, arm_index: usize) -> Result<f64> {
        let (user, x) = match &self.current {
            Some((u, arms)) => (
                *u,
                arms.get(arm_index)
                    .ok_or_else(|| Error::InvalidArgument(format!("arm {arm_index} not in round")))?
                    .clone(),
            ),
            None => return Err(Error::InvalidArgument("no round in progress".into())),
        };
        Ok(self.draw_reward(user, &x))
    }

    fn true_exploitation_graph(&self, x: &[f64], gamma: f64, kernel: Kernel, mode: NormalizationMode) -> Result<UserGraph> {
        let mus: Vec<f64> = (0..self.config.users).map(|u| self.expected_reward(u, x)).collect();
        UserGraph::from_node_values(&mus, gamma, kernel, mode)
    }
}

/// Classification data served as a `C`-armed bandit.
///
/// A sample `x ∈ R^d` becomes `C` arms of dimension `d + C − 1`: arm `c` is
/// `x` shifted right by `c` positions with zero padding. Each class is a
/// user node; the target user of a round is the sample's class and exactly
/// the arm of that class pays 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEnv {
    samples: Vec<(Vec<f64>, usize)>,
    classes: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    current: Option<usize>,
}

impl ClassificationEnv {
    pub fn new(samples: Vec<(Vec<f64>, usize)>, classes: usize, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("classification dataset is empty".into()));
        }
        if classes == 0 {
            return Err(Error::Config("classification needs at least one class".into()));
        }
        let d = samples[0].0.len();
        let mut normalized = Vec::with_capacity(samples.len());
        for (i, (x, label)) in samples.into_iter().enumerate() {
            if x.len() != d {
                return Err(Error::Config(format!("sample {i} has dimension {} (expected {d})", x.len())));
            }
            if label >= classes {
                return Err(Error::Config(format!("sample {i} has label {label} >= {classes}")));
            }
            let arm = ArmContext::unit(i, x)?;
            normalized.push((arm.features, label));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..normalized.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            samples: normalized,
            classes,
            order,
            cursor: 0,
            rng,
            current: None,
        })
    }

    /// Reads `label,f0,f1,…` rows (with a header line).
    pub fn from_csv(path: &Path, seed: u64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let width = reader.headers()?.len();
        if width < 2 {
            return Err(schema(path, 1, "expected a label column and at least one feature"));
        }
        let mut samples = Vec::new();
        let mut classes = 0;
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            if record.len() != width {
                return Err(schema(path, line, &format!("{} columns, header has {width}", record.len())));
            }
            let label: usize = parse_field(path, line, &record[0], "label")?;
            let x = record
                .iter()
                .skip(1)
                .map(|f| parse_field::<f64>(path, line, f, "feature"))
                .collect::<Result<Vec<_>>>()?;
            classes = classes.max(label + 1);
            samples.push((x, label));
        }
        Self::new(samples, classes, seed)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample_dim(&self) -> usize {
        self.samples[0].0.len()
    }

    /// Arm `c` for a (unit-norm) sample.
    pub fn embed(x: &[f64], c: usize, classes: usize) -> Vec<f64> {
        let mut v = vec![0.0; x.len() + classes - 1];
        v[c..c + x.len()].copy_from_slice(x);
        v
    }

    /// Inverse of [`ClassificationEnv::embed`].
    pub fn strip(arm: &[f64], c: usize, sample_dim: usize) -> Vec<f64> {
        arm[c..c + sample_dim].to_vec()
    }
}

impl Environment for ClassificationEnv {
    fn n_users(&self) -> usize {
        self.classes
    }

    fn dim(&self) -> usize {
        self.sample_dim() + self.classes - 1
    }

    fn regret_kind(&self) -> RegretKind {
        RegretKind::Pseudo
    }

    fn next_round(&mut self) -> Result<Round> {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let idx = self.order[self.cursor];
        self.cursor += 1;
        let (x, label) = &self.samples[idx];
        let arms = (0..self.classes)
            .map(|c| ArmContext::unit(c, Self::embed(x, c, self.classes)))
            .collect::<Result<Vec<_>>>()?;
        let oracle = OracleView::new((0..self.classes).map(|c| if c == *label { 1.0 } else { 0.0 }).collect());
        self.current = Some(*label);
        Ok(Round {
            user: *label,
            arms,
            oracle,
        })
    }

    fn reward(&mut self, arm_index: usize) -> Result<f64> {
        match self.current {
            Some(label) if arm_index < self.classes => Ok(if arm_index == label { 1.0 } else { 0.0 }),
            Some(_) => Err(Error::InvalidArgument(format!("arm {arm_index} not in round"))),
            None => Err(Error::InvalidArgument("no round in progress".into())),
        }
    }
}

/// Preprocessed user/arm features plus logged interactions.
///
/// Each round picks a logged positive interaction `(u, a⁺)` and pads it with
/// `arms − 1` arms that `u` never rewarded, in shuffled positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEnv {
    user_ids: Vec<i64>,
    user_features: Vec<Vec<f64>>,
    arm_ids: Vec<i64>,
    arm_features: Vec<Vec<f64>>,
    rewards: HashMap<usize, HashMap<usize, f64>>,
    positives: Vec<(usize, usize)>,
    arms_per_round: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    current: Option<(usize, Vec<usize>)>,
}

fn schema(path: &Path, line: usize, message: &str) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {what} {field:?}"),
    })
}

impl FeatureEnv {
    /// Loads the features file (`kind,id,f0,…`) and the interactions file
    /// (`user_id,arm_id,reward`).
    pub fn load(features: &Path, interactions: &Path, arms_per_round: usize, seed: u64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(features)?;
        let header = reader.headers()?.clone();
        if header.len() < 3 || header[0].trim() != "kind" || header[1].trim() != "id" {
            return Err(schema(features, 1, "header must be kind,id,<feature columns>"));
        }
        let d = header.len() - 2;
        let (mut user_ids, mut user_features, mut arm_ids, mut arm_features) = (vec![], vec![], vec![], vec![]);
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            if record.len() != header.len() {
                return Err(schema(
                    features,
                    line,
                    &format!("expected {d} feature columns, found {}", record.len().saturating_sub(2)),
                ));
            }
            let id: i64 = parse_field(features, line, &record[1], "id")?;
            let x = record
                .iter()
                .skip(2)
                .map(|f| parse_field::<f64>(features, line, f, "feature"))
                .collect::<Result<Vec<_>>>()?;
            match record[0].trim() {
                "user" => {
                    user_ids.push(id);
                    user_features.push(x);
                }
                "arm" => {
                    let arm = ArmContext::unit(arm_ids.len(), x).map_err(|e| Error::Parse {
                        path: features.to_path_buf(),
                        line,
                        message: e.to_string(),
                    })?;
                    arm_ids.push(id);
                    arm_features.push(arm.features);
                }
                other => {
                    return Err(Error::Parse {
                        path: features.to_path_buf(),
                        line,
                        message: format!("unknown kind {other:?} (expected user or arm)"),
                    })
                }
            }
        }
        if user_ids.is_empty() || arm_ids.is_empty() {
            return Err(schema(features, 1, "file must contain at least one user and one arm"));
        }
        let user_index: HashMap<i64, usize> = user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let arm_index: HashMap<i64, usize> = arm_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(interactions)?;
        let header = reader.headers()?.clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names != ["user_id", "arm_id", "reward"] {
            return Err(schema(interactions, 1, "header must be user_id,arm_id,reward"));
        }
        let mut rewards: HashMap<usize, HashMap<usize, f64>> = HashMap::new();
        let mut positives = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = line_of(&record);
            if record.len() != 3 {
                return Err(schema(interactions, line, &format!("{} columns, expected 3", record.len())));
            }
            let uid: i64 = parse_field(interactions, line, &record[0], "user_id")?;
            let aid: i64 = parse_field(interactions, line, &record[1], "arm_id")?;
            let reward: f64 = parse_field(interactions, line, &record[2], "reward")?;
            if !(0.0..=1.0).contains(&reward) {
                return Err(Error::Parse {
                    path: interactions.to_path_buf(),
                    line,
                    message: format!("reward {reward} outside [0, 1]"),
                });
            }
            let u = *user_index
                .get(&uid)
                .ok_or_else(|| schema(interactions, line, &format!("unknown user id {uid}")))?;
            let a = *arm_index
                .get(&aid)
                .ok_or_else(|| schema(interactions, line, &format!("unknown arm id {aid}")))?;
            rewards.entry(u).or_default().insert(a, reward);
            if reward > 0.0 {
                positives.push((u, a));
            }
        }
        if positives.is_empty() {
            return Err(schema(interactions, 1, "no positive interactions to serve"));
        }
        if arms_per_round == 0 || arms_per_round > arm_ids.len() {
            return Err(Error::Config(format!(
                "{arms_per_round} arms per round with {} arms available",
                arm_ids.len()
            )));
        }
        debug_assert!(user_features.iter().all(|f| f.len() == d));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            user_ids,
            user_features,
            arm_ids,
            arm_features,
            rewards,
            positives,
            arms_per_round,
            order,
            cursor: 0,
            rng,
            current: None,
        })
    }

    pub fn user_ids(&self) -> &[i64] {
        &self.user_ids
    }

    pub fn arm_ids(&self) -> &[i64] {
        &self.arm_ids
    }

    pub fn user_features(&self) -> &[Vec<f64>] {
        &self.user_features
    }

    fn logged(&self, user: usize, arm: usize) -> f64 {
        self.rewards
            .get(&user)
            .and_then(|m| m.get(&arm))
            .copied()
            .unwrap_or(0.0)
    }
}

impl Environment for FeatureEnv {
    fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    fn dim(&self) -> usize {
        self.arm_features[0].len()
    }

    fn regret_kind(&self) -> RegretKind {
        RegretKind::Realized
    }

    fn next_round(&mut self) -> Result<Round> {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let (user, positive) = self.positives[self.order[self.cursor]];
        self.cursor += 1;
        let rewarded: HashSet<usize> = self
            .rewards
            .get(&user)
            .map(|m| m.iter().filter(|(_, &r)| r > 0.0).map(|(&a, _)| a).collect())
            .unwrap_or_default();
        let negatives: Vec<usize> = (0..self.arm_ids.len()).filter(|a| !rewarded.contains(a)).collect();
        if negatives.len() < self.arms_per_round - 1 {
            return Err(Error::InvalidArgument(format!(
                "user {} has only {} negative arms for {} slots",
                self.user_ids[user],
                negatives.len(),
                self.arms_per_round - 1
            )));
        }
        let mut chosen: Vec<usize> = negatives
            .choose_multiple(&mut self.rng, self.arms_per_round - 1)
            .copied()
            .collect();
        chosen.push(positive);
        chosen.shuffle(&mut self.rng);
        let arms = chosen
            .iter()
            .map(|&a| ArmContext::new(a, self.arm_features[a].clone()))
            .collect();
        let oracle = OracleView::new(chosen.iter().map(|&a| self.logged(user, a)).collect());
        self.current = Some((user, chosen));
        Ok(Round { user, arms, oracle })
    }

    fn reward(&mut self, arm_index: usize) -> Result<f64> {
        match &self.current {
            Some((user, chosen)) => {
                let arm = *chosen
                    .get(arm_index)
                    .ok_or_else(|| Error::InvalidArgument(format!("arm {arm_index} not in round")))?;
                Ok(self.logged(*user, arm))
            }
            None => Err(Error::InvalidArgument("no round in progress".into())),
        }
    }
}

/// Convenience: the path a schema/parse error refers to.
pub fn error_path(e: &Error) -> Option<&PathBuf> {
    match e {
        Error::Parse { path, .. } | Error::Schema { path, .. } => Some(path),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn synth(seed: u64) -> SyntheticEnv {
        SyntheticEnv::new(SyntheticConfig::default(), seed).unwrap()
    }

    #[test]
    fn orthogonal_latent_gives_half() {
        let cfg = SyntheticConfig {
            users: 1,
            dim: 2,
            groups: 1,
            ..SyntheticConfig::default()
        };
        let env = SyntheticEnv::from_latents(cfg, vec![vec![1.0, 0.0]], vec![0], 0).unwrap();
        assert_eq!(env.expected_reward(0, &[0.0, 1.0]), 0.5);
    }

    #[test]
    fn arms_are_separated_and_unit() {
        let mut env = SyntheticEnv::new(
            SyntheticConfig {
                rho: 0.05,
                ..SyntheticConfig::default()
            },
            3,
        )
        .unwrap();
        for _ in 0..1000 {
            let round = env.next_round().unwrap();
            for (i, a) in round.arms.iter().enumerate() {
                assert!((a.norm() - 1.0).abs() < 1e-9);
                for b in &round.arms[..i] {
                    assert!(distance(&a.features, &b.features) >= 0.05);
                }
            }
            assert!(round.oracle.expected_rewards.iter().all(|&m| (0.0..=1.0).contains(&m)));
            env.reward(0).unwrap();
        }
    }

    #[test]
    fn impossible_separation_fails() {
        let mut env = SyntheticEnv::new(
            SyntheticConfig {
                dim: 1,
                arms: 3,
                rho: 0.5,
                ..SyntheticConfig::default()
            },
            0,
        )
        .unwrap();
        // in one dimension only ±1 exist, so three separated arms cannot be drawn
        assert!(matches!(env.next_round(), Err(Error::Separation { .. })));
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = synth(11);
        let mut b = synth(11);
        for _ in 0..50 {
            let ra = a.next_round().unwrap();
            let rb = b.next_round().unwrap();
            assert_eq!(ra, rb);
            assert_eq!(a.reward(1).unwrap(), b.reward(1).unwrap());
        }
    }

    #[test]
    fn degenerate_bernoulli_and_noiseless_gaussian() {
        let cfg = SyntheticConfig {
            users: 1,
            dim: 1,
            groups: 1,
            link: Link::CosineAffinity,
            ..SyntheticConfig::default()
        };
        let mut env = SyntheticEnv::from_latents(cfg.clone(), vec![vec![1.0]], vec![0], 0).unwrap();
        for _ in 0..100 {
            assert_eq!(env.draw_reward(0, &[1.0]), 1.0);
        }
        let cfg = SyntheticConfig {
            noise: Noise::ClampedGaussian { sigma: 0.0 },
            ..cfg
        };
        let mut env = SyntheticEnv::from_latents(cfg, vec![vec![1.0]], vec![0], 0).unwrap();
        let mu = env.expected_reward(0, &[0.6]);
        assert_eq!(env.draw_reward(0, &[0.6]), mu);
    }

    #[test]
    fn bernoulli_mean_matches_expectation() {
        let cfg = SyntheticConfig {
            users: 1,
            dim: 2,
            groups: 1,
            ..SyntheticConfig::default()
        };
        let mut env = SyntheticEnv::from_latents(cfg, vec![vec![1.0, 0.0]], vec![0], 4).unwrap();
        let draws = 100_000;
        let total: f64 = (0..draws).map(|_| env.draw_reward(0, &[0.0, 1.0])).sum();
        assert!((total / draws as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn true_graph_definitional_identity() {
        let env = synth(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let x = random_unit(5, &mut rng);
            let g = env
                .true_exploitation_graph(&x, 1.0, Kernel::ExpAbs, NormalizationMode::Symmetric)
                .unwrap();
            let u = rng.random_range(0..10);
            let v = rng.random_range(0..10);
            let expected = (-(env.expected_reward(u, &x) - env.expected_reward(v, &x)).abs()).exp();
            assert_eq!(g.adjacency().get(u, v), expected);
            assert_eq!(g.adjacency().get(u, u), 1.0);
        }
    }

    #[test]
    fn equal_latents_give_unit_edge() {
        let cfg = SyntheticConfig {
            users: 2,
            dim: 2,
            groups: 1,
            ..SyntheticConfig::default()
        };
        let env = SyntheticEnv::from_latents(cfg, vec![vec![0.6, 0.8], vec![0.6, 0.8]], vec![0, 0], 0).unwrap();
        let g = env
            .true_exploitation_graph(&[1.0, 0.0], 1.0, Kernel::Rbf, NormalizationMode::Symmetric)
            .unwrap();
        assert_eq!(g.adjacency().get(0, 1), 1.0);
    }

    #[test]
    fn classification_padding() {
        assert_eq!(ClassificationEnv::embed(&[1.0, 0.0], 0, 3), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ClassificationEnv::embed(&[1.0, 0.0], 1, 3), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(ClassificationEnv::embed(&[1.0, 0.0], 2, 3), vec![0.0, 0.0, 1.0, 0.0]);
        let mut env = ClassificationEnv::new(vec![(vec![0.6, 0.8], 1), (vec![1.0, 0.0], 2)], 3, 0).unwrap();
        assert_eq!(env.dim(), 4);
        assert!(env.true_exploitation_graph(&[1.0; 4], 1.0, Kernel::Rbf, NormalizationMode::Symmetric).is_err());
        for _ in 0..5 {
            let round = env.next_round().unwrap();
            assert_eq!(round.oracle.expected_rewards.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(round.oracle.best_index(), round.user);
            for (c, arm) in round.arms.iter().enumerate() {
                assert!((arm.norm() - 1.0).abs() < 1e-9);
                let x = ClassificationEnv::strip(&arm.features, c, 2);
                let expected = if round.user == 1 { vec![0.6, 0.8] } else { vec![1.0, 0.0] };
                assert_eq!(x, expected);
            }
            assert_eq!(env.reward(round.user).unwrap(), 1.0);
        }
        assert!(ClassificationEnv::new(vec![], 3, 0).is_err());
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const FEATURES: &str = "kind,id,f0,f1\nuser,10,1,0\nuser,11,0,1\narm,1,1,0\narm,2,0,1\narm,3,1,1\n";

    #[test]
    fn feature_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "features.csv", FEATURES);
        let i = write(dir.path(), "inter.csv", "user_id,arm_id,reward\n10,1,1\n11,2,0.5\n11,3,0\n");
        let mut env = FeatureEnv::load(&f, &i, 2, 0).unwrap();
        assert_eq!(env.n_users(), 2);
        assert_eq!(env.dim(), 2);
        assert_eq!(env.regret_kind(), RegretKind::Realized);
        for _ in 0..6 {
            let round = env.next_round().unwrap();
            assert_eq!(round.arms.len(), 2);
            let best = round.oracle.best_index();
            assert!(round.oracle.best_value > 0.0);
            assert_eq!(env.reward(best).unwrap(), round.oracle.best_value);
            for a in &round.arms {
                assert!((a.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn feature_file_validation() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "features.csv", FEATURES);
        let bad = write(dir.path(), "bad.csv", "user_id,arm_id,reward\n10,1,1\n11,2,1.5\n");
        match FeatureEnv::load(&f, &bad, 2, 0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let missing = write(dir.path(), "missing.csv", "kind,id,f0,f1\nuser,1,1,0\narm,2,1\n");
        let ok = write(dir.path(), "ok.csv", "user_id,arm_id,reward\n1,2,1\n");
        match FeatureEnv::load(&missing, &ok, 1, 0) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected schema error, got {other:?}"),
        }
        let garbage = write(dir.path(), "garbage.csv", "kind,id,f0,f1\nuser,1,1,zero\n");
        assert!(matches!(FeatureEnv::load(&garbage, &ok, 1, 0), Err(Error::Parse { line: 2, .. })));
    }
}

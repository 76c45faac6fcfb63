//! Per-user exploitation and exploration networks.
//!
//! Each user owns two small ReLU networks: `exploit` maps an arm context to a
//! reward estimate, and `explore` maps the average-pooled, unit-normalized
//! gradient of `exploit` to the expected residual `r − f_exploit(x)`. The
//! residual is signed, so the exploration score can push an arm up or down.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, mlp_dims, FcParams};

/// Average-pooled gradient, scaled to unit norm (or exactly zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledGradient {
    values: Vec<f64>,
    /// Norm of the bucket means before normalization.
    raw_norm: f64,
}

impl PooledGradient {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn raw_norm(&self) -> f64 {
        self.raw_norm
    }

    pub fn is_zero(&self) -> bool {
        self.raw_norm == 0.0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Splits `raw` into `pool` contiguous buckets (the last one absorbs the
/// remainder), averages each bucket and L2-normalizes the result.
pub fn pool_gradient(raw: &[f64], pool: usize) -> Result<PooledGradient> {
    if pool == 0 || pool > raw.len() {
        return Err(Error::InvalidArgument(format!(
            "pool size {pool} for a gradient of length {}",
            raw.len()
        )));
    }
    let width = raw.len() / pool;
    let mut values: Vec<f64> = (0..pool)
        .map(|b| {
            let end = if b + 1 == pool { raw.len() } else { (b + 1) * width };
            let bucket = &raw[b * width..end];
            bucket.iter().sum::<f64>() / bucket.len() as f64
        })
        .collect();
    let raw_norm = l2_norm(&values);
    if !raw_norm.is_finite() {
        return Err(Error::Numeric("pooled gradient is not finite".into()));
    }
    if raw_norm > 0.0 {
        for v in &mut values {
            *v /= raw_norm;
        }
    }
    Ok(PooledGradient { values, raw_norm })
}

/// Where each training call starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    /// Continue from the active parameters.
    #[default]
    Warm,
    /// Restart from the initial parameters and refit the whole history.
    Cold,
}

/// Which parameters become active after training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotPolicy {
    /// The freshly trained parameters.
    #[default]
    Latest,
    /// A uniform draw from all retained post-training snapshots.
    UniformSnapshot,
}

/// How per-sample squared errors are combined into the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossReduction {
    #[default]
    Sum,
    Mean,
}

impl LossReduction {
    pub(crate) fn scale(self, samples: usize) -> f64 {
        match self {
            LossReduction::Sum => 1.0,
            LossReduction::Mean => 1.0 / samples.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: usize,
    pub start: StartMode,
    pub snapshot: SnapshotPolicy,
    pub snapshot_cap: usize,
    pub reduction: LossReduction,
    /// When false the exploration network is left untouched.
    pub explore: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            steps: 10,
            start: StartMode::Warm,
            snapshot: SnapshotPolicy::Latest,
            snapshot_cap: 32,
            reduction: LossReduction::Sum,
            explore: true,
        }
    }
}

/// Losses before and after one training call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub exploit_before: f64,
    pub exploit_after: f64,
    pub explore_before: f64,
    pub explore_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainStatus {
    Trained(TrainReport),
    /// Nothing to fit; parameters are untouched.
    EmptyHistory,
}

/// Quantities computed for an arm with the parameters in effect when it was served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeEstimate {
    pub prediction: f64,
    pub gradient: PooledGradient,
    pub gain: f64,
}

/// One interaction in a user's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub context: Vec<f64>,
    pub reward: f64,
    /// Exploitation prediction at serve time.
    pub served_prediction: f64,
    /// Pooled exploitation gradient at serve time; the exploration input.
    pub served_gradient: PooledGradient,
}

impl UserRecord {
    /// Exploration label: the serve-time residual.
    pub fn gain_label(&self) -> f64 {
        self.reward - self.served_prediction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    user_id: usize,
    pool_size: usize,
    exploit: FcParams,
    explore: FcParams,
    initial: (FcParams, FcParams),
    history: Vec<UserRecord>,
    snapshots: VecDeque<(FcParams, FcParams)>,
}

impl UserModel {
    /// Creates a user with `depth`-layer networks of hidden width `width`.
    pub fn new(user_id: usize, dim: usize, width: usize, depth: usize, pool_size: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exploit = FcParams::init_with_rng(&mlp_dims(dim, width, depth), &mut rng)?;
        if pool_size == 0 || pool_size > exploit.total_len() {
            return Err(Error::InvalidArgument(format!(
                "pool size {pool_size} exceeds the {} exploitation parameters",
                exploit.total_len()
            )));
        }
        let explore = FcParams::init_with_rng(&mlp_dims(pool_size, width, depth), &mut rng)?;
        Self::from_params(user_id, exploit, explore)
    }

    pub fn from_params(user_id: usize, exploit: FcParams, explore: FcParams) -> Result<Self> {
        let pool_size = explore.input_dim();
        if pool_size > exploit.total_len() {
            return Err(Error::InvalidShape(format!(
                "exploration input {pool_size} larger than exploitation gradient {}",
                exploit.total_len()
            )));
        }
        Ok(Self {
            user_id,
            pool_size,
            initial: (exploit.clone(), explore.clone()),
            exploit,
            explore,
            history: Vec::new(),
            snapshots: VecDeque::new(),
        })
    }

    pub fn user_id(&self) -> usize {
        self.user_id
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn exploit(&self) -> &FcParams {
        &self.exploit
    }

    pub fn explore(&self) -> &FcParams {
        &self.explore
    }

    pub fn history(&self) -> &[UserRecord] {
        &self.history
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &(FcParams, FcParams)> {
        self.snapshots.iter()
    }

    pub fn predict_reward(&self, x: &[f64]) -> Result<f64> {
        self.exploit.predict(x)
    }

    pub fn pooled_gradient(&self, x: &[f64], pool: usize) -> Result<PooledGradient> {
        let (_, cache) = self.exploit.forward(x)?;
        let grad = self.exploit.backward(&cache)?;
        pool_gradient(grad.values(), pool)
    }

    pub fn predict_gain(&self, g: &PooledGradient) -> Result<f64> {
        self.explore.predict(g.values())
    }

    /// Prediction, pooled gradient and gain from a single forward pass.
    pub fn serve(&self, x: &[f64]) -> Result<ServeEstimate> {
        let (prediction, cache) = self.exploit.forward(x)?;
        let grad = self.exploit.backward(&cache)?;
        let gradient = pool_gradient(grad.values(), self.pool_size)?;
        let gain = self.explore.predict(gradient.values())?;
        Ok(ServeEstimate {
            prediction,
            gradient,
            gain,
        })
    }

    /// Appends an observed reward together with its serve-time estimate.
    pub fn record(&mut self, x: &[f64], reward: f64, served: &ServeEstimate) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Validation(format!("reward {reward} outside [0, 1]")));
        }
        if x.len() != self.exploit.input_dim() {
            return Err(Error::InvalidShape(format!(
                "context of length {} for user {}",
                x.len(),
                self.user_id
            )));
        }
        self.history.push(UserRecord {
            context: x.to_vec(),
            reward,
            served_prediction: served.prediction,
            served_gradient: served.gradient.clone(),
        });
        Ok(())
    }

    pub fn exploit_loss(&self) -> Result<f64> {
        self.exploit
            .squared_loss(self.history.iter().map(|r| (r.context.as_slice(), r.reward)))
    }

    pub fn explore_loss(&self) -> Result<f64> {
        self.explore.squared_loss(
            self.history
                .iter()
                .map(|r| (r.served_gradient.values(), r.gain_label())),
        )
    }

    /// Fits both networks on the full history, `cfg.steps` GD steps each.
    pub fn train<R: Rng + ?Sized>(&mut self, cfg: &TrainConfig, rng: &mut R) -> Result<TrainStatus> {
        if self.history.is_empty() {
            log::warn!("user {} has no history; skipping training", self.user_id);
            return Ok(TrainStatus::EmptyHistory);
        }
        if cfg.start == StartMode::Cold {
            self.exploit = self.initial.0.clone();
            self.explore = self.initial.1.clone();
        }
        let scale = cfg.reduction.scale(self.history.len());
        let exploit_before = self.exploit_loss()?;
        fit(&mut self.exploit, cfg, scale, || {
            self.history.iter().map(|r| (r.context.as_slice(), r.reward))
        })?;
        let exploit_after = self.exploit_loss()?;

        let explore_before = self.explore_loss()?;
        if cfg.explore {
            fit(&mut self.explore, cfg, scale, || {
                self.history
                    .iter()
                    .map(|r| (r.served_gradient.values(), r.gain_label()))
            })?;
        }
        let explore_after = self.explore_loss()?;

        self.snapshots.push_back((self.exploit.clone(), self.explore.clone()));
        while self.snapshots.len() > cfg.snapshot_cap.max(1) {
            self.snapshots.pop_front();
        }
        if cfg.snapshot == SnapshotPolicy::UniformSnapshot {
            let pick = rng.random_range(0..self.snapshots.len());
            let (e, x) = self.snapshots[pick].clone();
            self.exploit = e;
            self.explore = x;
        }
        Ok(TrainStatus::Trained(TrainReport {
            exploit_before,
            exploit_after,
            explore_before,
            explore_after,
        }))
    }
}

fn fit<'a, F, I>(params: &mut FcParams, cfg: &TrainConfig, scale: f64, samples: F) -> Result<()>
where
    F: Fn() -> I,
    I: Iterator<Item = (&'a [f64], f64)>,
{
    for _ in 0..cfg.steps {
        let (_, grad) = params.squared_loss_gradient(samples())?;
        params.apply_update(&grad, cfg.eta * scale)?;
    }
    Ok(())
}

//! The graph neural bandit policy.
//!
//! Each round, for every candidate arm:
//!
//! 1. every user in the (possibly restricted) neighborhood scores the arm
//!    with its own exploitation and exploration networks;
//! 2. those scalars define the arm's exploitation and exploration graphs;
//! 3. the exploitation GNN scores the target user through the first graph,
//!    and the exploration GNN scores the pooled GNN gradient through the
//!    second.
//!
//! The arm with the largest `r̂ + α·b̂` is played. Everything computed at
//! serve time is stored and reused verbatim as training data.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::ArmContext;
use crate::error::{Error, Result};
use crate::gnn::{target_mix, GnnParams, GnnSample, Mix};
use crate::graph::{approx_neighborhood, Kernel, Neighborhood, NeighborhoodStrategy, NormalizationMode, UserGraph};
use crate::numerics::{fingerprint, mlp_dims, Matrix};
use crate::user_models::{LossReduction, ServeEstimate, SnapshotPolicy, StartMode, TrainConfig, UserModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Exploration coefficient in `[0, 1]`.
    pub alpha: f64,
    /// Propagation hops.
    pub k: usize,
    /// Kernel bandwidth.
    pub gamma: f64,
    pub kernel: Kernel,
    pub normalization: NormalizationMode,
    /// Hidden width `m`.
    pub width: usize,
    /// Layer count `L`.
    pub depth: usize,
    /// User-network learning rate and GD steps.
    pub eta1: f64,
    pub j1: usize,
    /// GNN learning rate and GD steps.
    pub eta2: f64,
    pub j2: usize,
    /// Pooled size of user-network gradients.
    pub pool: usize,
    /// Pooled size of exploitation-GNN gradients.
    pub gnn_pool: usize,
    /// Neighborhood size; `None` uses every user.
    pub n_tilde: Option<usize>,
    pub neighborhood: NeighborhoodStrategy,
    pub train_every: usize,
    pub train_burnin: usize,
    pub start: StartMode,
    pub snapshot: SnapshotPolicy,
    pub snapshot_cap: usize,
    pub reduction: LossReduction,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            k: 1,
            gamma: 1.0,
            kernel: Kernel::Rbf,
            normalization: NormalizationMode::Symmetric,
            width: 100,
            depth: 2,
            eta1: 1e-3,
            j1: 10,
            eta2: 1e-3,
            j2: 10,
            pool: 64,
            gnn_pool: 64,
            n_tilde: None,
            neighborhood: NeighborhoodStrategy::UniformRandom,
            train_every: 100,
            train_burnin: 1000,
            start: StartMode::Warm,
            snapshot: SnapshotPolicy::Latest,
            snapshot_cap: 32,
            reduction: LossReduction::Sum,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    /// Checks the configuration against a population of `n` users with
    /// `dim`-dimensional arms.
    pub fn validate(&self, n: usize, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be positive", self.gamma));
        }
        if self.width == 0 || self.depth < 2 {
            return bad("width must be >= 1 and depth >= 2".into());
        }
        for (name, eta) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("{name} {eta} must be positive"));
            }
        }
        if self.j1 == 0 || self.j2 == 0 || self.train_every == 0 || self.snapshot_cap == 0 {
            return bad("j1, j2, train_every and snapshot_cap must be positive".into());
        }
        if n == 0 || dim == 0 {
            return bad("policy needs at least one user and one feature".into());
        }
        let user_len: usize = mlp_dims(dim, self.width, self.depth).iter().map(|(i, o)| i * o).sum();
        if self.pool == 0 || self.pool > user_len {
            return bad(format!("pool {} must be in 1..={user_len}", self.pool));
        }
        let gnn_len = n * dim * self.width
            + mlp_dims(self.width, self.width, self.depth)
                .iter()
                .map(|(i, o)| i * o)
                .sum::<usize>();
        if self.gnn_pool == 0 || self.gnn_pool > gnn_len {
            return bad(format!("gnn_pool {} must be in 1..={gnn_len}", self.gnn_pool));
        }
        if let Some(nt) = self.n_tilde {
            if nt == 0 || nt > n {
                return bad(format!("n_tilde {nt} must be in 1..={n}"));
            }
        }
        Ok(())
    }

    pub(crate) fn user_train(&self, explore: bool) -> TrainConfig {
        TrainConfig {
            eta: self.eta1,
            steps: self.j1,
            start: self.start,
            snapshot: self.snapshot,
            snapshot_cap: self.snapshot_cap,
            reduction: self.reduction,
            explore,
        }
    }
}

/// Whether training runs after `round` observations.
pub fn should_train(round: usize, burnin: usize, every: usize) -> bool {
    round >= 1 && (round <= burnin || round % every.max(1) == 0)
}

/// Seeds for `count` independent components, drawn from one master stream.
pub(crate) fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| master.next_u64()).collect()
}

/// The outcome of `recommend`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub round: usize,
    pub user: usize,
    pub chosen_index: usize,
    /// Per-arm `(r̂, b̂)`.
    pub scores: Vec<(f64, f64)>,
    pub tie_broken: bool,
}

impl Decision {
    /// Arg-max of `r̂ + α·b̂`, lowest index on ties.
    pub fn select(round: usize, user: usize, scores: Vec<(f64, f64)>, alpha: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let combined: Vec<f64> = scores.iter().map(|&(r, b)| r + alpha * b).collect();
        if combined.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite arm score".into()));
        }
        let mut chosen = 0;
        for (i, &v) in combined.iter().enumerate() {
            if v > combined[chosen] {
                chosen = i;
            }
        }
        let best = combined[chosen];
        let tie_broken = combined.iter().filter(|&&v| v == best).count() > 1;
        Ok(Self {
            round,
            user,
            chosen_index: chosen,
            scores,
            tie_broken,
        })
    }
}

/// The interface shared by every policy the harness can drive.
pub trait Policy {
    fn name(&self) -> &'static str;

    /// Completed rounds.
    fn round(&self) -> usize;

    fn recommend(&mut self, user: usize, arms: &[ArmContext]) -> Result<Decision>;

    fn observe(&mut self, decision: &Decision, reward: f64) -> Result<()>;

    /// Trains if the schedule says so; returns whether it did.
    fn maybe_train(&mut self) -> Result<bool>;
}

/// Rejects empty or mis-sized candidate sets and rescales non-unit arms.
pub fn prepare_arms(arms: &[ArmContext], dim: usize) -> Result<Vec<ArmContext>> {
    if arms.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    arms.iter()
        .map(|a| {
            if a.dim() != dim {
                return Err(Error::InvalidShape(format!(
                    "arm {} has dimension {} (expected {dim})",
                    a.id,
                    a.dim()
                )));
            }
            let mut a = a.clone();
            if a.normalize()? {
                log::warn!("arm {} was not unit norm; normalized", a.id);
            }
            Ok(a)
        })
        .collect()
}

pub(crate) fn check_reward(reward: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::Validation(format!("reward {reward} outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_pending(expected: Option<(usize, usize)>, decision: &Decision) -> Result<()> {
    match expected {
        Some((round, user)) if round == decision.round && user == decision.user => Ok(()),
        _ => Err(Error::InvalidArgument(format!(
            "decision for round {} was not produced by this policy's last recommend",
            decision.round
        ))),
    }
}

/// One interaction in the global log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub user: usize,
    pub arm_id: usize,
    pub context: Vec<f64>,
    /// Serve-time exploitation-GNN output.
    pub served_reward: f64,
    /// Serve-time exploration-GNN output.
    pub served_gain: f64,
    pub reward: f64,
    /// Fingerprints of the chosen arm's two adjacency matrices.
    pub exploit_graph: u64,
    pub explore_graph: u64,
    /// Fingerprint of the exploitation GNN parameters used to serve.
    pub params: u64,
    /// Element standard deviation of the chosen arm's propagated adjacency.
    pub adjacency_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArmEval {
    r_hat: f64,
    b_hat: f64,
    target: ServeEstimate,
    exploit_mix: Mix,
    explore_mix: Mix,
    gnn_gradient: Vec<f64>,
    exploit_s: Matrix,
    exploit_graph: u64,
    explore_graph: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    round: usize,
    user: usize,
    arms: Vec<ArmContext>,
    evals: Vec<ArmEval>,
    params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbPolicy {
    config: PolicyConfig,
    dim: usize,
    exploration: bool,
    users: Vec<UserModel>,
    gnn_exploit: GnnParams,
    gnn_explore: GnnParams,
    gnn_initial: (GnnParams, GnnParams),
    gnn_snapshots: VecDeque<(GnnParams, GnnParams)>,
    exploit_samples: Vec<GnnSample>,
    explore_samples: Vec<GnnSample>,
    log: Vec<LogEntry>,
    rng: ChaCha8Rng,
    round: usize,
    last_user: Option<usize>,
    pending: Option<Pending>,
}

impl GnbPolicy {
    pub fn new(config: PolicyConfig, n: usize, dim: usize) -> Result<Self> {
        Self::build(config, n, dim, true)
    }

    /// The exploitation-only ablation: `α = 0`, no exploration graph, no
    /// exploration GNN, exploration networks never trained. Decisions
    /// coincide with [`GnbPolicy::new`] at `α = 0` under the same seed.
    pub fn greedy(mut config: PolicyConfig, n: usize, dim: usize) -> Result<Self> {
        config.alpha = 0.0;
        Self::build(config, n, dim, false)
    }

    fn build(config: PolicyConfig, n: usize, dim: usize, exploration: bool) -> Result<Self> {
        config.validate(n, dim)?;
        let seeds = derive_seeds(config.seed, n + 3);
        let users = (0..n)
            .map(|u| UserModel::new(u, dim, config.width, config.depth, config.pool, seeds[u]))
            .collect::<Result<Vec<_>>>()?;
        let gnn_exploit = GnnParams::init(n, dim, config.width, config.depth, seeds[n])?;
        let gnn_explore = GnnParams::init(n, config.gnn_pool, config.width, config.depth, seeds[n + 1])?;
        Ok(Self {
            dim,
            exploration,
            users,
            gnn_initial: (gnn_exploit.clone(), gnn_explore.clone()),
            gnn_exploit,
            gnn_explore,
            gnn_snapshots: VecDeque::new(),
            exploit_samples: Vec::new(),
            explore_samples: Vec::new(),
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seeds[n + 2]),
            round: 0,
            last_user: None,
            pending: None,
            config,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserModel] {
        &self.users
    }

    pub fn gnn_exploit(&self) -> &GnnParams {
        &self.gnn_exploit
    }

    pub fn gnn_explore(&self) -> &GnnParams {
        &self.gnn_explore
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Training data of the exploitation GNN, one per logged round.
    pub fn exploit_samples(&self) -> &[GnnSample] {
        &self.exploit_samples
    }

    /// Training data of the exploration GNN, one per logged round.
    pub fn explore_samples(&self) -> &[GnnSample] {
        &self.explore_samples
    }

    fn neighborhood(&mut self, user: usize) -> Result<Neighborhood> {
        let n = self.users.len();
        match self.config.n_tilde {
            Some(nt) if nt < n => approx_neighborhood(user, n, nt, &self.config.neighborhood, &mut self.rng),
            _ => Ok(Neighborhood::full(n, user)),
        }
    }

    fn evaluate_arm(&self, x: &[f64], hood: &Neighborhood) -> Result<ArmEval> {
        let cfg = &self.config;
        let members = hood.members();
        let ti = hood.target_index();
        let mut preds = Vec::with_capacity(members.len());
        let mut gains = Vec::with_capacity(members.len());
        let mut target = None;
        for (i, &u) in members.iter().enumerate() {
            if self.exploration || i == ti {
                let est = self.users[u].serve(x)?;
                preds.push(est.prediction);
                gains.push(est.gain);
                if i == ti {
                    target = Some(est);
                }
            } else {
                preds.push(self.users[u].predict_reward(x)?);
            }
        }
        let target = target.expect("target is a member");
        let g1 = UserGraph::from_node_values(&preds, cfg.gamma, cfg.kernel, cfg.normalization)?;
        let exploit_mix = target_mix(g1.normalized(), members, ti, cfg.k)?;
        let (r_hat, cache) = self.gnn_exploit.score(x, &exploit_mix)?;
        let exploit_graph = fingerprint(g1.adjacency().data());
        let exploit_s = g1.normalized().clone();
        if !self.exploration {
            return Ok(ArmEval {
                r_hat,
                b_hat: 0.0,
                target,
                exploit_mix,
                explore_mix: Vec::new(),
                gnn_gradient: Vec::new(),
                exploit_s,
                exploit_graph,
                explore_graph: 0,
            });
        }
        let g2 = UserGraph::from_node_values(&gains, cfg.gamma, cfg.kernel, cfg.normalization)?;
        let explore_mix = target_mix(g2.normalized(), members, ti, cfg.k)?;
        let gradient = self.gnn_exploit.pooled_gradient(&cache, cfg.gnn_pool)?;
        let (b_hat, _) = self.gnn_explore.score(gradient.values(), &explore_mix)?;
        Ok(ArmEval {
            r_hat,
            b_hat,
            target,
            exploit_mix,
            explore_mix,
            gnn_gradient: gradient.values().to_vec(),
            exploit_s,
            exploit_graph,
            explore_graph: fingerprint(g2.adjacency().data()),
        })
    }

    fn train_gnns(&mut self) -> Result<()> {
        let cfg = &self.config;
        if cfg.start == StartMode::Cold {
            self.gnn_exploit = self.gnn_initial.0.clone();
            self.gnn_explore = self.gnn_initial.1.clone();
        }
        let (before, after) = self
            .gnn_exploit
            .train(&self.exploit_samples, cfg.eta2, cfg.j2, cfg.reduction)?;
        log::debug!("round {}: exploitation gnn loss {before:.4} -> {after:.4}", self.round);
        if self.exploration {
            let (before, after) = self
                .gnn_explore
                .train(&self.explore_samples, cfg.eta2, cfg.j2, cfg.reduction)?;
            log::debug!("round {}: exploration gnn loss {before:.4} -> {after:.4}", self.round);
        }
        self.gnn_snapshots
            .push_back((self.gnn_exploit.clone(), self.gnn_explore.clone()));
        while self.gnn_snapshots.len() > cfg.snapshot_cap {
            self.gnn_snapshots.pop_front();
        }
        if cfg.snapshot == SnapshotPolicy::UniformSnapshot {
            let pick = self.rng.random_range(0..self.gnn_snapshots.len());
            let (a, b) = self.gnn_snapshots[pick].clone();
            self.gnn_exploit = a;
            self.gnn_explore = b;
        }
        Ok(())
    }
}

impl Policy for GnbPolicy {
    fn name(&self) -> &'static str {
        if self.exploration {
            "gnb"
        } else {
            "greedy-gnb"
        }
    }

    fn round(&self) -> usize {
        self.round
    }

    fn recommend(&mut self, user: usize, arms: &[ArmContext]) -> Result<Decision> {
        if user >= self.users.len() {
            return Err(Error::InvalidArgument(format!("user {user} out of range")));
        }
        let arms = prepare_arms(arms, self.dim)?;
        let hood = self.neighborhood(user)?;
        let evals = arms
            .par_iter()
            .map(|a| self.evaluate_arm(&a.features, &hood))
            .collect::<Result<Vec<_>>>()?;
        let scores = evals.iter().map(|e| (e.r_hat, e.b_hat)).collect();
        let decision = Decision::select(self.round + 1, user, scores, self.config.alpha)?;
        self.pending = Some(Pending {
            round: decision.round,
            user,
            arms,
            evals,
            params: fingerprint(&self.gnn_exploit.flatten()),
        });
        Ok(decision)
    }

    fn observe(&mut self, decision: &Decision, reward: f64) -> Result<()> {
        check_pending(self.pending.as_ref().map(|p| (p.round, p.user)), decision)?;
        check_reward(reward)?;
        let pending = self.pending.take().expect("checked above");
        let i = decision.chosen_index;
        let (arm, eval) = match (pending.arms.get(i), pending.evals.get(i)) {
            (Some(a), Some(e)) => (a, e),
            _ => return Err(Error::InvalidArgument(format!("chosen index {i} out of range"))),
        };
        let x = &arm.features;
        self.users[pending.user].record(x, reward, &eval.target)?;
        let adjacency_std = eval.exploit_s.power(self.config.k)?.element_std();
        self.exploit_samples.push(GnnSample {
            input: x.clone(),
            mix: eval.exploit_mix.clone(),
            label: reward,
        });
        if self.exploration {
            self.explore_samples.push(GnnSample {
                input: eval.gnn_gradient.clone(),
                mix: eval.explore_mix.clone(),
                label: reward - eval.r_hat,
            });
        }
        self.log.push(LogEntry {
            round: pending.round,
            user: pending.user,
            arm_id: arm.id,
            context: x.clone(),
            served_reward: eval.r_hat,
            served_gain: eval.b_hat,
            reward,
            exploit_graph: eval.exploit_graph,
            explore_graph: eval.explore_graph,
            params: pending.params,
            adjacency_std,
        });
        self.round += 1;
        self.last_user = Some(pending.user);
        Ok(())
    }

    fn maybe_train(&mut self) -> Result<bool> {
        let Some(user) = self.last_user else {
            return Ok(false);
        };
        if !should_train(self.round, self.config.train_burnin, self.config.train_every) {
            return Ok(false);
        }
        let cfg = self.config.user_train(self.exploration);
        self.users[user].train(&cfg, &mut self.rng)?;
        self.train_gnns()?;
        Ok(true)
    }
}

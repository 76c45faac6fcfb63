//! Experiment runner: seeds × rounds, regret traces, summaries and sweeps.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{Decision, GnbPolicy, Policy, PolicyConfig};
use crate::baselines::{NeuralPolicy, RandomPolicy};
use crate::config::{EnvConfig, PolicyKind, RunConfig, SweepAxis};
use crate::context::ArmContext;
use crate::env::{ClassificationEnv, Environment, FeatureEnv, RegretKind, Round, SyntheticEnv};
use crate::error::{Error, Result};
use crate::graph::{Kernel, NormalizationMode, UserGraph};

/// Any environment the harness can build from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnyEnv {
    Synthetic(SyntheticEnv),
    Classification(ClassificationEnv),
    Features(FeatureEnv),
}

impl AnyEnv {
    pub fn build(cfg: &EnvConfig, seed: u64) -> Result<Self> {
        Ok(match cfg {
            EnvConfig::Synthetic(c) => AnyEnv::Synthetic(SyntheticEnv::new(c.clone(), seed)?),
            EnvConfig::Classification { path } => AnyEnv::Classification(ClassificationEnv::from_csv(path, seed)?),
            EnvConfig::Features {
                features,
                interactions,
                arms_per_round,
            } => AnyEnv::Features(FeatureEnv::load(features, interactions, *arms_per_round, seed)?),
        })
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            AnyEnv::Synthetic(e) => e,
            AnyEnv::Classification(e) => e,
            AnyEnv::Features(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::Synthetic(e) => e,
            AnyEnv::Classification(e) => e,
            AnyEnv::Features(e) => e,
        }
    }
}

impl Environment for AnyEnv {
    fn n_users(&self) -> usize {
        self.inner().n_users()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn regret_kind(&self) -> RegretKind {
        self.inner().regret_kind()
    }

    fn next_round(&mut self) -> Result<Round> {
        self.inner_mut().next_round()
    }

    fn reward(&mut self, arm_index: usize) -> Result<f64> {
        self.inner_mut().reward(arm_index)
    }

    fn true_exploitation_graph(&self, x: &[f64], gamma: f64, kernel: Kernel, mode: NormalizationMode) -> Result<UserGraph> {
        self.inner().true_exploitation_graph(x, gamma, kernel, mode)
    }
}

/// Any policy the harness can build from a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnyPolicy {
    Gnb(GnbPolicy),
    Neural(NeuralPolicy),
    Random(RandomPolicy),
}

impl AnyPolicy {
    pub fn build(kind: PolicyKind, params: &PolicyConfig, n: usize, dim: usize) -> Result<Self> {
        Ok(match kind {
            PolicyKind::Gnb => AnyPolicy::Gnb(GnbPolicy::new(params.clone(), n, dim)?),
            PolicyKind::GreedyGnb => AnyPolicy::Gnb(GnbPolicy::greedy(params.clone(), n, dim)?),
            PolicyKind::NeuralInd => AnyPolicy::Neural(NeuralPolicy::individual(params.clone(), n, dim)?),
            PolicyKind::NeuralPool => AnyPolicy::Neural(NeuralPolicy::pooled(params.clone(), n, dim)?),
            PolicyKind::Random => AnyPolicy::Random(RandomPolicy::new(params.seed)),
        })
    }

    pub fn as_gnb(&self) -> Option<&GnbPolicy> {
        match self {
            AnyPolicy::Gnb(p) => Some(p),
            _ => None,
        }
    }

    /// Mean element standard deviation of the propagated exploitation
    /// adjacency over all served rounds (graph policies only).
    pub fn mean_adjacency_std(&self) -> Option<f64> {
        let log = self.as_gnb()?.log();
        if log.is_empty() {
            return None;
        }
        Some(log.iter().map(|e| e.adjacency_std).sum::<f64>() / log.len() as f64)
    }

    fn inner(&self) -> &dyn Policy {
        match self {
            AnyPolicy::Gnb(p) => p,
            AnyPolicy::Neural(p) => p,
            AnyPolicy::Random(p) => p,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Policy {
        match self {
            AnyPolicy::Gnb(p) => p,
            AnyPolicy::Neural(p) => p,
            AnyPolicy::Random(p) => p,
        }
    }
}

impl Policy for AnyPolicy {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn round(&self) -> usize {
        self.inner().round()
    }

    fn recommend(&mut self, user: usize, arms: &[ArmContext]) -> Result<Decision> {
        self.inner_mut().recommend(user, arms)
    }

    fn observe(&mut self, decision: &Decision, reward: f64) -> Result<()> {
        self.inner_mut().observe(decision, reward)
    }

    fn maybe_train(&mut self) -> Result<bool> {
        self.inner_mut().maybe_train()
    }
}

/// One row of a regret trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub user: usize,
    pub chosen_index: usize,
    pub arm_id: usize,
    pub reward: f64,
    pub oracle_best: f64,
    pub oracle_chosen: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub r_hat: f64,
    pub b_hat: f64,
    pub tie_broken: bool,
}

/// Plays one round: recommend, reward, observe, maybe train.
pub fn play_round<E, P>(env: &mut E, policy: &mut P, prev_cum: f64) -> Result<TraceRow>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let round = env.next_round()?;
    let decision = policy.recommend(round.user, &round.arms)?;
    let i = decision.chosen_index;
    let reward = env.reward(i)?;
    policy.observe(&decision, reward)?;
    policy.maybe_train()?;
    let inst = round.oracle.regret(i);
    let (r_hat, b_hat) = decision.scores[i];
    Ok(TraceRow {
        round: decision.round,
        user: round.user,
        chosen_index: i,
        arm_id: round.arms[i].id,
        reward,
        oracle_best: round.oracle.best_value,
        oracle_chosen: round.oracle.expected_rewards[i],
        inst_regret: inst,
        cum_regret: prev_cum + inst,
        r_hat,
        b_hat,
        tie_broken: decision.tie_broken,
    })
}

const CHECKPOINT_VERSION: u32 = 1;

/// A single-seed run that can be stepped, checkpointed and resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    version: u32,
    pub seed: u64,
    pub rounds: usize,
    env: AnyEnv,
    policy: AnyPolicy,
    trace: Vec<TraceRow>,
}

impl SeedRun {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let env = AnyEnv::build(&cfg.environment, seed)?;
        let params = PolicyConfig {
            seed,
            ..cfg.params.clone()
        };
        let policy = AnyPolicy::build(cfg.policy, &params, env.n_users(), env.dim())?;
        Ok(Self::from_parts(env, policy, seed, cfg.rounds))
    }

    pub fn from_parts(env: AnyEnv, policy: AnyPolicy, seed: u64, rounds: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            rounds,
            env,
            policy,
            trace: Vec::new(),
        }
    }

    pub fn env(&self) -> &AnyEnv {
        &self.env
    }

    pub fn policy(&self) -> &AnyPolicy {
        &self.policy
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.trace.len() >= self.rounds
    }

    pub fn step(&mut self) -> Result<&TraceRow> {
        let prev = self.trace.last().map_or(0.0, |r| r.cum_regret);
        let row = play_round(&mut self.env, &mut self.policy, prev)?;
        self.trace.push(row);
        Ok(self.trace.last().expect("just pushed"))
    }

    /// Steps until `rounds`, checkpointing every `every` rounds into `checkpoint`.
    pub fn run(&mut self, every: usize, checkpoint: Option<&Path>) -> Result<()> {
        while !self.is_done() {
            self.step()?;
            if let Some(path) = checkpoint {
                if every > 0 && self.trace.len() % every == 0 && !self.is_done() {
                    self.save(path)?;
                }
            }
        }
        Ok(())
    }

    /// Writes the full state as JSON (floats round-trip exactly).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let out = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer(out, self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let run: SeedRun = serde_json::from_reader(reader).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if run.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                run.version
            )));
        }
        Ok(run)
    }
}

fn regret_columns(kind: RegretKind) -> (&'static str, &'static str) {
    match kind {
        RegretKind::Pseudo => ("inst_regret", "cum_regret"),
        RegretKind::Realized => ("realized_inst_regret", "realized_cum_regret"),
    }
}

const TRACE_HEADER: [&str; 12] = [
    "round",
    "user",
    "chosen_index",
    "arm_id",
    "reward",
    "oracle_best",
    "oracle_chosen",
    "",
    "",
    "r_hat",
    "b_hat",
    "tie_broken",
];

pub fn write_trace(path: &Path, kind: RegretKind, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let (inst, cum) = regret_columns(kind);
    let mut header = TRACE_HEADER;
    header[7] = inst;
    header[8] = cum;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace back and checks that the cumulative column is the exact
/// running sum of the instantaneous one.
pub fn read_trace(path: &Path) -> Result<(RegretKind, Vec<TraceRow>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            line: 1,
            message: "empty trace".into(),
        })??;
    let kind = match header.get(7) {
        Some("inst_regret") => RegretKind::Pseudo,
        Some("realized_inst_regret") => RegretKind::Realized,
        _ => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                line: 1,
                message: "unrecognized trace header".into(),
            })
        }
    };
    let mut rows = Vec::new();
    let mut cum = 0.0;
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: TraceRow = record.deserialize(None).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        cum += row.inst_regret;
        if cum != row.cum_regret {
            return Err(Error::Validation(format!(
                "{}:{line}: cumulative regret {} differs from running sum {cum}",
                path.display(),
                row.cum_regret
            )));
        }
        rows.push(row);
    }
    Ok((kind, rows))
}

/// Rounds at which the summary reports cumulative regret: `T/5, 2T/5, …, T`.
pub fn checkpoints(rounds: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=5).map(|i| ((i * rounds) as f64 / 5.0).round().max(1.0) as usize).collect();
    out.dedup();
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// What one seed produced.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: std::result::Result<SeedRun, String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub regret_kind: RegretKind,
    pub checkpoints: Vec<usize>,
    /// Per checkpoint: mean and std of cumulative regret over successful seeds.
    pub stats: Vec<(f64, f64)>,
    pub final_regrets: Vec<f64>,
    pub adjacency_std: Option<f64>,
    pub failures: Vec<(u64, String)>,
}

impl RunSummary {
    pub fn final_mean(&self) -> f64 {
        self.stats.last().map_or(f64::NAN, |s| s.0)
    }

    pub fn final_std(&self) -> f64 {
        self.stats.last().map_or(f64::NAN, |s| s.1)
    }
}

fn run_seed(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<SeedRun> {
    let mut run = SeedRun::new(cfg, seed)?;
    let ckpt = out.map(|d| d.join(format!("checkpoint_seed{seed}.json")));
    run.run(cfg.checkpoint_every, ckpt.as_deref())?;
    if let Some(dir) = out {
        write_trace(&dir.join(format!("trace_seed{seed}.csv")), run.env.regret_kind(), &run.trace)?;
    }
    Ok(run)
}

/// Runs every seed (in parallel) and returns the outcomes in seed order.
pub fn run_seeds(cfg: &RunConfig, out: Option<&Path>) -> Vec<SeedOutcome> {
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let result = run_seed(cfg, seed, out).map_err(|e| {
                log::error!("seed {seed} failed: {e}");
                e.to_string()
            });
            SeedOutcome { seed, result }
        })
        .collect()
}

/// Aggregates outcomes into checkpoint statistics.
pub fn summarize(cfg: &RunConfig, outcomes: &[SeedOutcome]) -> RunSummary {
    let cps = checkpoints(cfg.rounds);
    let runs: Vec<&SeedRun> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let stats = cps
        .iter()
        .map(|&t| {
            let v: Vec<f64> = runs.iter().map(|r| r.trace[t - 1].cum_regret).collect();
            mean_std(&v)
        })
        .collect();
    let adj: Vec<f64> = runs.iter().filter_map(|r| r.policy.mean_adjacency_std()).collect();
    let regret_kind = runs
        .first()
        .map_or(RegretKind::Pseudo, |r| r.env.regret_kind());
    RunSummary {
        policy: cfg.policy,
        regret_kind,
        checkpoints: cps,
        stats,
        final_regrets: runs.iter().map(|r| r.trace.last().map_or(0.0, |x| x.cum_regret)).collect(),
        adjacency_std: if adj.is_empty() { None } else { Some(mean_std(&adj).0) },
        failures: outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.seed, e.clone())))
            .collect(),
    }
}

fn write_summary(dir: &Path, s: &RunSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    let (_, cum) = regret_columns(s.regret_kind);
    w.write_record(["policy", "round", &format!("mean_{cum}"), &format!("std_{cum}"), "seeds"])?;
    let ok = s.final_regrets.len().to_string();
    for (&t, &(m, sd)) in s.checkpoints.iter().zip(&s.stats) {
        w.write_record([s.policy.as_str(), &t.to_string(), &m.to_string(), &sd.to_string(), &ok])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("failures.csv"))?;
    w.write_record(["seed", "error"])?;
    for (seed, e) in &s.failures {
        w.write_record([seed.to_string(), e.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Full `run`: all seeds, traces, `summary.csv` and `failures.csv` in `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    let outcomes = run_seeds(cfg, Some(out));
    let summary = summarize(cfg, &outcomes);
    write_summary(out, &summary)?;
    Ok(summary)
}

/// Resumes a checkpoint to completion and writes its trace next to it.
pub fn resume(checkpoint: &Path, out: &Path) -> Result<SeedRun> {
    let mut run = SeedRun::load(checkpoint)?;
    std::fs::create_dir_all(out)?;
    run.run(0, None)?;
    write_trace(&out.join(format!("trace_seed{}.csv", run.seed)), run.env.regret_kind(), &run.trace)?;
    Ok(run)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
}

/// One full run per axis value, consolidated into `sweep_{axis}.csv`.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64], out: &Path) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    axis.check_policy(cfg.policy)?;
    let configs = values
        .iter()
        .map(|&v| {
            let params = axis.apply(&cfg.params, v)?;
            let c = RunConfig { params, ..cfg.clone() };
            validate(&c)?;
            Ok((v, c))
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for (v, c) in configs {
        let dir = out.join(format!("{}_{v}", axis.as_str()));
        let summary = run(&c, &dir)?;
        rows.push(SweepRow { value: v, summary });
    }
    let mut w = csv::Writer::from_path(out.join(format!("sweep_{}.csv", axis.as_str())))?;
    w.write_record([
        axis.as_str(),
        "policy",
        "rounds",
        "mean_final_regret",
        "std_final_regret",
        "adjacency_std",
        "failed_seeds",
    ])?;
    for r in &rows {
        w.write_record([
            r.value.to_string(),
            r.summary.policy.as_str().to_string(),
            cfg.rounds.to_string(),
            r.summary.final_mean().to_string(),
            r.summary.final_std().to_string(),
            r.summary.adjacency_std.map_or(String::new(), |v| v.to_string()),
            r.summary.failures.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Full validation: shape, referenced files, and the policy against the
/// environment it will face.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    cfg.check_shape()?;
    let env = AnyEnv::build(&cfg.environment, cfg.seeds[0]).map_err(|e| match e {
        e if e.is_config() => e,
        Error::Io(io) => Error::Config(io.to_string()),
        Error::Csv(c) => Error::Config(c.to_string()),
        other => Error::Config(other.to_string()),
    })?;
    cfg.params.validate(env.n_users(), env.dim())
}

/// Default output directory for a run, honouring an override.
pub fn output_dir(cfg: &RunConfig, over: Option<PathBuf>) -> PathBuf {
    over.unwrap_or_else(|| cfg.output_dir.clone())
}

//! Run configuration files.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! policy = "gnb"          # gnb | greedy-gnb | neural-ind | neural-pool | random
//! rounds = 2000
//! seeds = [0, 1, 2]
//! output_dir = "out"
//!
//! [params]                # policy hyperparameters, see PolicyConfig
//! alpha = 1.0
//! width = 32
//!
//! [environment]
//! kind = "synthetic"      # synthetic | classification | features
//! users = 10
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandit::PolicyConfig;
use crate::env::SyntheticConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Gnb,
    GreedyGnb,
    NeuralInd,
    NeuralPool,
    Random,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Gnb => "gnb",
            PolicyKind::GreedyGnb => "greedy-gnb",
            PolicyKind::NeuralInd => "neural-ind",
            PolicyKind::NeuralPool => "neural-pool",
            PolicyKind::Random => "random",
        }
    }

    pub fn uses_graphs(self) -> bool {
        matches!(self, PolicyKind::Gnb | PolicyKind::GreedyGnb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    Synthetic(SyntheticConfig),
    /// `label,f0,f1,…` rows.
    Classification { path: PathBuf },
    /// A `kind,id,f…` features file and a `user_id,arm_id,reward` file.
    Features {
        features: PathBuf,
        interactions: PathBuf,
        arms_per_round: usize,
    },
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Write a resumable checkpoint every this many rounds (0 disables).
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub params: PolicyConfig,
    #[serde(default)]
    pub environment: EnvConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Sweepable hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Gamma,
    Alpha,
    NTilde,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "k" => Ok(SweepAxis::K),
            "gamma" => Ok(SweepAxis::Gamma),
            "alpha" => Ok(SweepAxis::Alpha),
            "n_tilde" | "n-tilde" => Ok(SweepAxis::NTilde),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected k, gamma, alpha or n_tilde)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Alpha => "alpha",
            SweepAxis::NTilde => "n_tilde",
        }
    }

    pub fn check_policy(self, policy: PolicyKind) -> Result<()> {
        let ok = match self {
            SweepAxis::Alpha => policy != PolicyKind::Random,
            _ => policy.uses_graphs(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "axis {} has no effect on policy {}",
                self.as_str(),
                policy.as_str()
            )))
        }
    }

    /// Returns a copy of `params` with the axis set to `value`.
    pub fn apply(self, params: &PolicyConfig, value: f64) -> Result<PolicyConfig> {
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} needs a positive integer, got {v}", self.as_str())))
            }
        };
        let mut p = params.clone();
        match self {
            SweepAxis::K => p.k = as_count(value)?,
            SweepAxis::Gamma => p.gamma = value,
            SweepAxis::Alpha => p.alpha = value,
            SweepAxis::NTilde => p.n_tilde = Some(as_count(value)?),
        }
        Ok(p)
    }
}

/// Parses a comma-separated list of sweep values.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("sweep value {s:?} is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    Ok(values)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        match &mut self.environment {
            EnvConfig::Synthetic(_) => {}
            EnvConfig::Classification { path } => fix(path),
            EnvConfig::Features {
                features, interactions, ..
            } => {
                fix(features);
                fix(interactions);
            }
        }
    }

    /// Structural checks that need no environment.
    pub fn check_shape(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let missing = |p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("file {} does not exist", p.display())))
            }
        };
        match &self.environment {
            EnvConfig::Synthetic(_) => Ok(()),
            EnvConfig::Classification { path } => missing(path),
            EnvConfig::Features {
                features, interactions, ..
            } => {
                missing(features)?;
                missing(interactions)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
policy = "gnb"
rounds = 50
seeds = [1, 2]

[params]
alpha = 0.5
width = 16
kernel = "exp-abs"
n_tilde = 4

[environment]
kind = "synthetic"
users = 6
noise = { kind = "clamped-gaussian", sigma = 0.1 }
"#;

    #[test]
    fn parses_sample() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.policy, PolicyKind::Gnb);
        assert_eq!(cfg.params.alpha, 0.5);
        assert_eq!(cfg.params.n_tilde, Some(4));
        assert_eq!(cfg.params.depth, 2);
        match &cfg.environment {
            EnvConfig::Synthetic(s) => {
                assert_eq!(s.users, 6);
                assert_eq!(s.dim, 5);
            }
            other => panic!("{other:?}"),
        }
        cfg.check_shape().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("alpha = 0.5", "alpah = 0.5");
        assert!(RunConfig::from_toml(&text).unwrap_err().is_config());
        let text = SAMPLE.replace("rounds = 50", "rounds = 50\nround = 3");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = SAMPLE.replace("users = 6", "userz = 6");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn shape_checks() {
        let mut cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.seeds.clear();
        assert!(cfg.check_shape().is_err());
        let mut cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.rounds = 0;
        assert!(cfg.check_shape().is_err());
        cfg.rounds = 1;
        cfg.environment = EnvConfig::Classification {
            path: "/nonexistent/data.csv".into(),
        };
        assert!(cfg.check_shape().is_err());
    }

    #[test]
    fn sweep_axes() {
        assert!(parse_values("").is_err());
        assert_eq!(parse_values("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        let axis = SweepAxis::parse("k").unwrap();
        assert_eq!(axis.apply(&PolicyConfig::default(), 3.0).unwrap().k, 3);
        assert!(axis.apply(&PolicyConfig::default(), 1.5).is_err());
        assert!(SweepAxis::parse("width").is_err());
        assert!(axis.check_policy(PolicyKind::NeuralInd).is_err());
        assert!(SweepAxis::Alpha.check_policy(PolicyKind::NeuralInd).is_ok());
    }
}

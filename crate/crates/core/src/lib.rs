//! Graph neural bandits: contextual arm selection with per-arm user graphs
//! estimated from per-user networks and scored by a pair of graph neural
//! models.

pub mod bandit;
pub mod baselines;
pub mod config;
pub mod context;
pub mod env;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod numerics;
pub mod user_models;

pub use bandit::{Decision, GnbPolicy, Policy, PolicyConfig};
pub use error::{Error, Result};

//! Arm-specific user graphs.
//!
//! For a candidate arm every user contributes one scalar (its exploitation
//! prediction, or its predicted gain); edge weights are a kernel of the two
//! scalars. The exploitation graph and the exploration graph differ only in
//! which scalar is fed in.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::user_models::UserModel;

/// Edge-weight mapping between two per-user scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `exp(−γ (a − b)²)`
    #[default]
    Rbf,
    /// `exp(−γ |a − b|)`
    ExpAbs,
}

pub fn psi(a: f64, b: f64, gamma: f64, kernel: Kernel) -> f64 {
    let diff = a - b;
    match kernel {
        Kernel::Rbf => (-gamma * diff * diff).exp(),
        Kernel::ExpAbs => (-gamma * diff.abs()).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// `D^{-1/2} A D^{-1/2}`
    #[default]
    Symmetric,
    /// `A / n`
    UniformScale,
}

impl NormalizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationMode::Symmetric => "symmetric",
            NormalizationMode::UniformScale => "uniform-scale",
        }
    }
}

pub fn normalize_adjacency(a: &Matrix, mode: NormalizationMode) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidShape(format!("adjacency is {}x{}", a.rows(), a.cols())));
    }
    match mode {
        NormalizationMode::Symmetric => {
            let inv_sqrt: Vec<f64> = (0..n)
                .map(|r| {
                    let deg: f64 = a.row(r).iter().sum();
                    if deg > 0.0 && deg.is_finite() {
                        Ok(1.0 / deg.sqrt())
                    } else {
                        Err(Error::DegenerateGraph(format!("row {r} has degree {deg}")))
                    }
                })
                .collect::<Result<_>>()?;
            let mut s = Matrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    s.set(r, c, a.get(r, c) * (inv_sqrt[r] * inv_sqrt[c]));
                }
            }
            Ok(s)
        }
        NormalizationMode::UniformScale => {
            if n == 0 {
                return Err(Error::DegenerateGraph("empty graph".into()));
            }
            let mut s = a.clone();
            for v in s.data_mut() {
                *v /= n as f64;
            }
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGraph {
    adjacency: Matrix,
    normalized: Matrix,
    mode: NormalizationMode,
}

impl UserGraph {
    /// Builds the graph whose edge `(u, v)` is `Ψ(values[u], values[v])`.
    ///
    /// Each unordered pair is evaluated once and mirrored, so the adjacency is
    /// exactly symmetric.
    pub fn from_node_values(values: &[f64], gamma: f64, kernel: Kernel, mode: NormalizationMode) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateGraph("graph without users".into()));
        }
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel bandwidth {gamma} must be positive")));
        }
        let n = values.len();
        let mut adjacency = Matrix::identity(n);
        for u in 0..n {
            for v in 0..u {
                let w = psi(values[u], values[v], gamma, kernel);
                adjacency.set(u, v, w);
                adjacency.set(v, u, w);
            }
        }
        Self::from_adjacency(adjacency, mode)
    }

    pub fn from_adjacency(adjacency: Matrix, mode: NormalizationMode) -> Result<Self> {
        let normalized = normalize_adjacency(&adjacency, mode)?;
        Ok(Self {
            adjacency,
            normalized,
            mode,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    /// Debug dump: a `n,mode` header line, then one CSV row per adjacency row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},{}", self.n(), self.mode.as_str())?;
        for r in 0..self.n() {
            let row: Vec<String> = self.adjacency.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Shared graph-construction knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub gamma: f64,
    pub kernel: Kernel,
    pub mode: NormalizationMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            kernel: Kernel::Rbf,
            mode: NormalizationMode::Symmetric,
        }
    }
}

/// Exploitation graph: one forward pass per user, then the kernel fill.
pub fn build_exploitation_graph(x: &[f64], users: &[&UserModel], cfg: &GraphConfig) -> Result<UserGraph> {
    let preds = users
        .iter()
        .map(|u| u.predict_reward(x))
        .collect::<Result<Vec<_>>>()?;
    UserGraph::from_node_values(&preds, cfg.gamma, cfg.kernel, cfg.mode)
}

/// Exploration graph over each user's predicted gain on its own pooled gradient.
pub fn build_exploration_graph(x: &[f64], users: &[&UserModel], cfg: &GraphConfig, pool: usize) -> Result<UserGraph> {
    let gains = users
        .iter()
        .map(|u| u.pooled_gradient(x, pool).and_then(|g| u.predict_gain(&g)))
        .collect::<Result<Vec<_>>>()?;
    UserGraph::from_node_values(&gains, cfg.gamma, cfg.kernel, cfg.mode)
}

/// How approximated neighborhoods are drawn.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborhoodStrategy {
    /// Fresh uniform sample of the other users every call.
    #[default]
    UniformRandom,
    /// A fixed, ordered list of representative users.
    FixedRepresentatives(Vec<usize>),
}

/// A user subset containing the target, sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    members: Vec<usize>,
    target: usize,
}

impl Neighborhood {
    pub fn full(n: usize, target: usize) -> Self {
        Self {
            members: (0..n).collect(),
            target,
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Position of the target inside `members`.
    pub fn target_index(&self) -> usize {
        self.members
            .binary_search(&self.target)
            .expect("target is always a member")
    }

    pub fn includes_target(&self) -> bool {
        self.members.binary_search(&self.target).is_ok()
    }
}

pub fn approx_neighborhood<R: Rng + ?Sized>(
    target: usize,
    n: usize,
    n_tilde: usize,
    strategy: &NeighborhoodStrategy,
    rng: &mut R,
) -> Result<Neighborhood> {
    if n_tilde == 0 || n_tilde > n || target >= n {
        return Err(Error::InvalidArgument(format!(
            "neighborhood of size {n_tilde} around user {target} among {n}"
        )));
    }
    if n_tilde == n {
        return Ok(Neighborhood::full(n, target));
    }
    let mut members = vec![target];
    match strategy {
        NeighborhoodStrategy::UniformRandom => {
            // sample from the n − 1 other users, then skip over the target
            members.extend(
                sample(rng, n - 1, n_tilde - 1)
                    .into_iter()
                    .map(|i| if i >= target { i + 1 } else { i }),
            );
        }
        NeighborhoodStrategy::FixedRepresentatives(reps) => {
            for &r in reps {
                if members.len() == n_tilde {
                    break;
                }
                if r >= n {
                    return Err(Error::InvalidArgument(format!("representative {r} out of range")));
                }
                if !members.contains(&r) {
                    members.push(r);
                }
            }
            if members.len() < n_tilde {
                return Err(Error::InvalidArgument(format!(
                    "only {} representatives available for a neighborhood of {n_tilde}",
                    members.len()
                )));
            }
        }
    }
    members.sort_unstable();
    Ok(Neighborhood { members, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::FcParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const E1: f64 = 0.36787944117144233;

    fn linear_user(id: usize, weights: Vec<f64>) -> UserModel {
        let exploit = FcParams::from_layers(vec![Matrix::from_vec(1, weights.len(), weights).unwrap()]).unwrap();
        let explore = FcParams::init(&[(1, 4), (4, 1)], id as u64).unwrap();
        UserModel::from_params(id, exploit, explore).unwrap()
    }

    /// `D^{-1/2} A D^{-1/2}` by explicit loops over degrees.
    fn brute_force_symmetric(a: &Matrix) -> Matrix {
        let n = a.rows();
        let mut deg = vec![0.0; n];
        for r in 0..n {
            for c in 0..n {
                deg[r] += a.get(r, c);
            }
        }
        let mut s = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                s.set(r, c, a.get(r, c) / (deg[r] * deg[c]).sqrt());
            }
        }
        s
    }

    #[test]
    fn psi_closed_forms() {
        assert_eq!(psi(0.5, 0.5, 1.0, Kernel::Rbf), 1.0);
        assert!((psi(0.0, 1.0, 1.0, Kernel::Rbf) - E1).abs() < 1e-15);
        assert!((psi(0.0, 2.0, 1.0, Kernel::ExpAbs) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn psi_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            assert_eq!(psi(a, b, 1.7, Kernel::Rbf), psi(b, a, 1.7, Kernel::Rbf));
            assert_eq!(psi(a, b, 0.3, Kernel::ExpAbs), psi(b, a, 0.3, Kernel::ExpAbs));
        }
    }

    #[test]
    fn exploitation_graph_from_hand_set_predictions() {
        // predictions 0, 1, 1 on x = [1]
        let users = [linear_user(0, vec![0.0]), linear_user(1, vec![1.0]), linear_user(2, vec![1.0])];
        let refs: Vec<&UserModel> = users.iter().collect();
        let g = build_exploitation_graph(&[1.0], &refs, &GraphConfig::default()).unwrap();
        let expected = Matrix::from_rows(&[vec![1.0, E1, E1], vec![E1, 1.0, 1.0], vec![E1, 1.0, 1.0]]).unwrap();
        assert!(g.adjacency().max_abs_diff(&expected) < 1e-15);
        assert_eq!(g.adjacency().row(1), g.adjacency().row(2));
    }

    #[test]
    fn identical_pipelines_give_complete_graph() {
        let u = UserModel::new(0, 3, 8, 2, 4, 42).unwrap();
        let users = [u.clone(), u.clone(), u];
        let refs: Vec<&UserModel> = users.iter().collect();
        let x = [0.6, 0.0, 0.8];
        let cfg = GraphConfig::default();
        let g1 = build_exploitation_graph(&x, &refs, &cfg).unwrap();
        let g2 = build_exploration_graph(&x, &refs, &cfg, 4).unwrap();
        assert!(g1.adjacency().data().iter().all(|&w| w == 1.0));
        assert!(g2.adjacency().data().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn exploration_graph_from_hand_set_gains() {
        // exploit nets are 1x1 identity-scaled so the pooled gradient is [1];
        // explore nets are 1x1 scalars producing the gain directly.
        let make = |id, gain: f64| {
            let exploit = FcParams::from_layers(vec![Matrix::from_vec(1, 1, vec![0.5]).unwrap()]).unwrap();
            let explore = FcParams::from_layers(vec![Matrix::from_vec(1, 1, vec![gain]).unwrap()]).unwrap();
            UserModel::from_params(id, exploit, explore).unwrap()
        };
        let users = [make(0, 0.2), make(1, 0.7)];
        let refs: Vec<&UserModel> = users.iter().collect();
        let g = build_exploration_graph(&[1.0], &refs, &GraphConfig::default(), 1).unwrap();
        assert!((g.adjacency().get(0, 1) - (-0.25f64).exp()).abs() < 1e-15);
        assert_eq!(g.adjacency().get(0, 0), 1.0);
        assert_eq!(g.adjacency().get(1, 1), 1.0);
    }

    #[test]
    fn tiny_bandwidth_approaches_complete_graph() {
        let g = UserGraph::from_node_values(&[0.0, 0.5, 1.0], 1e-12, Kernel::Rbf, NormalizationMode::Symmetric).unwrap();
        assert!(g.adjacency().data().iter().all(|&w| (w - 1.0).abs() < 1e-11));
    }

    #[test]
    fn symmetric_normalization_examples() {
        let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let s = normalize_adjacency(&ones, NormalizationMode::Symmetric).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let eye = Matrix::identity(3);
        assert_eq!(normalize_adjacency(&eye, NormalizationMode::Symmetric).unwrap(), eye);
        let zero_row = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            normalize_adjacency(&zero_row, NormalizationMode::Symmetric),
            Err(Error::DegenerateGraph(_))
        ));
    }

    #[test]
    fn symmetric_normalization_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let vals: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = UserGraph::from_node_values(&vals, 2.0, Kernel::Rbf, NormalizationMode::Symmetric).unwrap();
        assert!(g.normalized().max_abs_diff(&brute_force_symmetric(g.adjacency())) < 1e-12);
    }

    #[test]
    fn two_groups_give_block_constant_adjacency() {
        let vals = [0.1, 0.1, 0.1, 0.9, 0.9];
        let g = UserGraph::from_node_values(&vals, 1.0, Kernel::Rbf, NormalizationMode::Symmetric).unwrap();
        let a = g.adjacency();
        let across = a.get(0, 3);
        for u in 0..5 {
            for v in 0..5 {
                let same = (u < 3) == (v < 3);
                assert_eq!(a.get(u, v), if same { 1.0 } else { across });
            }
        }
    }

    #[test]
    fn csv_dump_layout() {
        let g = UserGraph::from_node_values(&[0.0, 1.0], 1.0, Kernel::Rbf, NormalizationMode::UniformScale).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "2,uniform-scale");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn neighborhood_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = NeighborhoodStrategy::UniformRandom;
        assert_eq!(approx_neighborhood(3, 6, 6, &s, &mut rng).unwrap().members(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(approx_neighborhood(3, 6, 1, &s, &mut rng).unwrap().members(), &[3]);
        assert!(approx_neighborhood(3, 6, 0, &s, &mut rng).is_err());
        let reps = NeighborhoodStrategy::FixedRepresentatives(vec![0, 1, 2, 4]);
        assert_eq!(approx_neighborhood(1, 6, 3, &reps, &mut rng).unwrap().members(), &[0, 1, 2]);
        assert_eq!(approx_neighborhood(5, 6, 3, &reps, &mut rng).unwrap().members(), &[0, 1, 5]);
    }

    #[test]
    fn seeded_neighborhood_is_repeatable() {
        let s = NeighborhoodStrategy::UniformRandom;
        let a = approx_neighborhood(2, 10, 4, &s, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = approx_neighborhood(2, 10, 4, &s, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.includes_target());
    }

    proptest! {
        #[test]
        fn graph_invariants(vals in proptest::collection::vec(-2.0f64..2.0, 1..12), gamma in 0.05f64..5.0) {
            let n = vals.len();
            for kernel in [Kernel::Rbf, Kernel::ExpAbs] {
                let g = UserGraph::from_node_values(&vals, gamma, kernel, NormalizationMode::Symmetric).unwrap();
                let a = g.adjacency();
                prop_assert_eq!(a.max_abs_diff(&a.transpose()), 0.0);
                for u in 0..n {
                    prop_assert_eq!(a.get(u, u), 1.0);
                }
                prop_assert!(a.data().iter().all(|&w| w > 0.0 && w <= 1.0));
                prop_assert!(g.normalized().is_symmetric());
                let scaled = normalize_adjacency(a, NormalizationMode::UniformScale).unwrap();
                prop_assert!(scaled.data().iter().all(|&w| w > 0.0 && w <= 1.0 / n as f64));
            }
        }

        #[test]
        fn neighborhood_contains_target(n in 1usize..30, seed in 0u64..1000, frac in 0.0f64..1.0) {
            let target = (seed as usize) % n;
            let k = 1 + ((n - 1) as f64 * frac) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nb = approx_neighborhood(target, n, k, &NeighborhoodStrategy::UniformRandom, &mut rng).unwrap();
            prop_assert_eq!(nb.len(), k);
            prop_assert!(nb.includes_target());
            prop_assert!(nb.members().windows(2).all(|w| w[0] < w[1]));
        }
    }
}

//! Graph neural scoring models.
//!
//! A model is a block-partitioned aggregation matrix `Θ_agg` (one `q × m`
//! block per user) followed by a bias-free ReLU head. For an input `x` and a
//! normalized adjacency `S`, the per-user outputs are
//!
//! ```text
//! H_agg = σ(S^k · (X Θ_agg)),  X = blockdiag(xᵀ, …, xᵀ)
//! out   = head(H_agg)           (row by row)
//! ```
//!
//! Training and scoring only ever need the target user's row, which depends
//! on `S^k` through a single row of weights. That row is kept as a sparse
//! [`Mix`] of `(user, weight)` pairs so that restricted neighborhoods and
//! the full user set share one code path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, mlp_dims, FcCache, FcParams, Matrix};
use crate::user_models::{pool_gradient, LossReduction, PooledGradient};

/// Row of `S^k` for the target user, indexed by global user id.
pub type Mix = Vec<(usize, f64)>;

/// `n × nq` block-diagonal embedding with `xᵀ` on every diagonal block.
pub fn build_embedding_matrix(x: &[f64], n: usize) -> Matrix {
    let q = x.len();
    let mut out = Matrix::zeros(n, n * q);
    for u in 0..n {
        out.row_mut(u)[u * q..(u + 1) * q].copy_from_slice(x);
    }
    out
}

/// `S^k` for `k ≥ 1`.
pub fn propagation_matrix(s: &Matrix, k: usize) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("propagation hops must be at least 1".into()));
    }
    s.power(k)
}

/// Extracts the target row of a propagated matrix over `members`.
pub fn mix_row(sk: &Matrix, members: &[usize], target_index: usize) -> Result<Mix> {
    if sk.rows() != members.len() || sk.cols() != members.len() || target_index >= members.len() {
        return Err(Error::InvalidShape(format!(
            "propagation {}x{} for {} members",
            sk.rows(),
            sk.cols(),
            members.len()
        )));
    }
    Ok(members
        .iter()
        .zip(sk.row(target_index))
        .map(|(&u, &w)| (u, w))
        .collect())
}

/// Target row of `S^k` over `members`, by repeated row-vector products.
///
/// Cheaper than forming `S^k` when only one row is needed.
pub fn target_mix(s: &Matrix, members: &[usize], target_index: usize, k: usize) -> Result<Mix> {
    let n = members.len();
    if k == 0 {
        return Err(Error::InvalidArgument("propagation hops must be at least 1".into()));
    }
    if s.rows() != n || s.cols() != n || target_index >= n {
        return Err(Error::InvalidShape(format!(
            "adjacency {}x{} for {n} members",
            s.rows(),
            s.cols()
        )));
    }
    let mut row = s.row(target_index).to_vec();
    for _ in 1..k {
        let mut next = vec![0.0; n];
        for (j, &r) in row.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for (o, &v) in next.iter_mut().zip(s.row(j)) {
                *o += r * v;
            }
        }
        row = next;
    }
    Ok(members.iter().copied().zip(row).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    n: usize,
    q: usize,
    theta_agg: Matrix,
    head: FcParams,
}

impl GnnParams {
    /// Aggregation and hidden head layers draw from `N(0, 2/m)`, the output
    /// layer from `N(0, 1/m)`.
    pub fn init(n: usize, q: usize, width: usize, depth: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(n, q, width, depth, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(n: usize, q: usize, width: usize, depth: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || q == 0 || width == 0 || depth < 2 {
            return Err(Error::InvalidShape(format!(
                "gnn with n={n}, q={q}, m={width}, L={depth}"
            )));
        }
        let theta_agg = gaussian_matrix(n * q, width, 2.0 / width as f64, rng);
        let head = FcParams::init_with_rng(&mlp_dims(width, width, depth), rng)?;
        Ok(Self { n, q, theta_agg, head })
    }

    pub fn from_parts(n: usize, q: usize, theta_agg: Matrix, head: FcParams) -> Result<Self> {
        if theta_agg.rows() != n * q || theta_agg.cols() != head.input_dim() {
            return Err(Error::InvalidShape(format!(
                "theta_agg {}x{} for n={n}, q={q}, head input {}",
                theta_agg.rows(),
                theta_agg.cols(),
                head.input_dim()
            )));
        }
        Ok(Self { n, q, theta_agg, head })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.q
    }

    pub fn width(&self) -> usize {
        self.theta_agg.cols()
    }

    pub fn theta_agg(&self) -> &Matrix {
        &self.theta_agg
    }

    pub fn theta_agg_mut(&mut self) -> &mut Matrix {
        &mut self.theta_agg
    }

    pub fn head(&self) -> &FcParams {
        &self.head
    }

    fn agg_len(&self) -> usize {
        self.theta_agg.data().len()
    }

    pub fn total_len(&self) -> usize {
        self.agg_len() + self.head.total_len()
    }

    /// `Θ_agg` row-major, then the head in its own flattened order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.theta_agg.data().to_vec();
        v.extend(self.head.flatten());
        v
    }

    pub fn with_flat(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.total_len() {
            return Err(Error::InvalidShape(format!(
                "{} values for {} gnn parameters",
                values.len(),
                self.total_len()
            )));
        }
        let split = self.agg_len();
        let theta_agg = Matrix::from_vec(self.n * self.q, self.width(), values[..split].to_vec())?;
        let head = FcParams::unflatten(self.head.layer_dims(), &values[split..])?;
        Ok(Self {
            n: self.n,
            q: self.q,
            theta_agg,
            head,
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.q {
            return Err(Error::InvalidShape(format!(
                "gnn input of length {} (expected {})",
                x.len(),
                self.q
            )));
        }
        Ok(())
    }

    /// `xᵀ Θ_agg[block u]`, the user's row of `X Θ_agg`.
    fn user_embedding(&self, x: &[f64], u: usize, out: &mut [f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.theta_agg.row(u * self.q + i)) {
                *o += xi * w;
            }
        }
    }

    /// Output at the target user whose propagation row is `mix`.
    pub fn score(&self, x: &[f64], mix: &[(usize, f64)]) -> Result<(f64, TargetCache)> {
        self.check_input(x)?;
        let m = self.width();
        let mut z = vec![0.0; m];
        let mut y = vec![0.0; m];
        for &(u, w) in mix {
            if u >= self.n {
                return Err(Error::InvalidShape(format!("user {u} outside a {}-user gnn", self.n)));
            }
            if w == 0.0 {
                continue;
            }
            y.iter_mut().for_each(|v| *v = 0.0);
            self.user_embedding(x, u, &mut y);
            for (zv, yv) in z.iter_mut().zip(&y) {
                *zv += w * yv;
            }
        }
        let h: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        let (out, head_cache) = self.head.forward(&h)?;
        Ok((
            out,
            TargetCache {
                x: x.to_vec(),
                mix: mix.to_vec(),
                head: head_cache,
            },
        ))
    }

    /// Adds `scale · ∂out/∂Θ` into `grad` (flattened layout).
    pub fn accumulate_gradient(&self, cache: &TargetCache, scale: f64, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.total_len() {
            return Err(Error::InvalidShape("gnn gradient buffer length mismatch".into()));
        }
        let split = self.agg_len();
        let (agg_grad, head_grad) = grad.split_at_mut(split);
        let dh = self.head.accumulate_gradient(&cache.head, scale, head_grad)?;
        // ReLU mask: h = max(z, 0) is positive exactly where z is.
        let delta: Vec<f64> = dh
            .iter()
            .zip(cache.head.input())
            .map(|(&d, &h)| if h > 0.0 { d } else { 0.0 })
            .collect();
        if delta.iter().all(|&d| d == 0.0) {
            return Ok(());
        }
        let m = self.width();
        for &(u, w) in &cache.mix {
            for (i, &xi) in cache.x.iter().enumerate() {
                let coef = w * xi;
                if coef == 0.0 {
                    continue;
                }
                let row = (u * self.q + i) * m;
                for (g, &d) in agg_grad[row..row + m].iter_mut().zip(&delta) {
                    *g += coef * d;
                }
            }
        }
        Ok(())
    }

    /// Unpooled `∂out/∂Θ` at the target.
    pub fn raw_gradient(&self, cache: &TargetCache) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.total_len()];
        self.accumulate_gradient(cache, 1.0, &mut g)?;
        Ok(g)
    }

    pub fn pooled_gradient(&self, cache: &TargetCache, pool: usize) -> Result<PooledGradient> {
        pool_gradient(&self.raw_gradient(cache)?, pool)
    }

    /// Outputs for every member of a (possibly restricted) user set.
    ///
    /// `sk` is the propagated adjacency over `members`, in member order.
    pub fn forward_members(&self, x: &[f64], sk: &Matrix, members: &[usize]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let k = members.len();
        if sk.rows() != k || sk.cols() != k {
            return Err(Error::InvalidShape(format!(
                "propagation {}x{} for {k} members",
                sk.rows(),
                sk.cols()
            )));
        }
        let m = self.width();
        let mut y = Matrix::zeros(k, m);
        for (r, &u) in members.iter().enumerate() {
            if u >= self.n {
                return Err(Error::InvalidShape(format!("user {u} outside a {}-user gnn", self.n)));
            }
            self.user_embedding(x, u, y.row_mut(r));
        }
        let z = sk.matmul(&y)?;
        (0..k)
            .map(|r| {
                let h: Vec<f64> = z.row(r).iter().map(|&v| v.max(0.0)).collect();
                self.head.predict(&h)
            })
            .collect()
    }

    /// Sum-form squared loss over `samples`.
    pub fn loss(&self, samples: &[GnnSample]) -> Result<f64> {
        let mut loss = 0.0;
        for s in samples {
            let r = self.score(&s.input, &s.mix)?.0 - s.label;
            loss += r * r;
        }
        Ok(loss)
    }

    /// `steps` GD steps on `Σ (f(input, mix) − label)²`; returns the losses
    /// before and after.
    pub fn train(&mut self, samples: &[GnnSample], eta: f64, steps: usize, reduction: LossReduction) -> Result<(f64, f64)> {
        if samples.is_empty() {
            log::warn!("gnn training called without samples");
            return Ok((0.0, 0.0));
        }
        let scale = reduction.scale(samples.len());
        let mut grad = vec![0.0; self.total_len()];
        let mut before = None;
        for _ in 0..steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for s in samples {
                let (out, cache) = self.score(&s.input, &s.mix)?;
                let r = out - s.label;
                loss += r * r;
                self.accumulate_gradient(&cache, 2.0 * r, &mut grad)?;
            }
            before.get_or_insert(loss);
            self.apply_update(&grad, eta * scale)?;
        }
        let after = self.loss(samples)?;
        Ok((before.unwrap_or(after), after))
    }

    pub fn apply_update(&mut self, grad: &[f64], eta: f64) -> Result<()> {
        if grad.len() != self.total_len() {
            return Err(Error::InvalidShape("gnn gradient length mismatch".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("gnn gradient has non-finite entries".into()));
        }
        let split = self.agg_len();
        for (p, g) in self.theta_agg.data_mut().iter_mut().zip(&grad[..split]) {
            *p -= eta * g;
        }
        self.head.apply_update(&grad[split..], eta)
    }
}

/// Forward-pass state at the target user, for backprop.
#[derive(Debug, Clone)]
pub struct TargetCache {
    x: Vec<f64>,
    mix: Mix,
    head: FcCache,
}

/// Result of a full forward pass.
#[derive(Debug, Clone)]
pub struct GnnOutput {
    pub per_user: Vec<f64>,
    pub target: usize,
    pub target_value: f64,
    pub cache: TargetCache,
}

/// Full forward pass over all `n` users with normalized adjacency `s`.
pub fn gnn_forward(params: &GnnParams, x: &[f64], s: &Matrix, k: usize, target: usize) -> Result<GnnOutput> {
    let n = params.n();
    if s.rows() != n || s.cols() != n || target >= n {
        return Err(Error::InvalidShape(format!(
            "adjacency {}x{} / target {target} for {n} users",
            s.rows(),
            s.cols()
        )));
    }
    let sk = propagation_matrix(s, k)?;
    let members: Vec<usize> = (0..n).collect();
    let per_user = params.forward_members(x, &sk, &members)?;
    let mix = mix_row(&sk, &members, target)?;
    let (_, cache) = params.score(x, &mix)?;
    Ok(GnnOutput {
        target_value: per_user[target],
        per_user,
        target,
        cache,
    })
}

/// Pooled, normalized gradient of the target output.
pub fn gnn_gradient(params: &GnnParams, x: &[f64], s: &Matrix, k: usize, target: usize, pool: usize) -> Result<PooledGradient> {
    let out = gnn_forward(params, x, s, k, target)?;
    params.pooled_gradient(&out.cache, pool)
}

/// One training record for a graph model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnSample {
    pub input: Vec<f64>,
    pub mix: Mix,
    pub label: f64,
}

impl GnnSample {
    /// Builds a sample from a normalized adjacency over all users.
    pub fn from_graph(input: Vec<f64>, s: &Matrix, k: usize, target: usize, label: f64) -> Result<Self> {
        let sk = propagation_matrix(s, k)?;
        let members: Vec<usize> = (0..s.rows()).collect();
        Ok(Self {
            input,
            mix: mix_row(&sk, &members, target)?,
            label,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Kernel, NormalizationMode, UserGraph};

    fn random_graph(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        UserGraph::from_node_values(&vals, 1.0, Kernel::Rbf, NormalizationMode::Symmetric)
            .unwrap()
            .normalized()
            .clone()
    }

    fn unit(seed: u64, q: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = crate::numerics::l2_norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    /// Straight-line evaluation with the dense block-diagonal embedding.
    fn reference(params: &GnnParams, x: &[f64], s: &Matrix, k: usize) -> Vec<f64> {
        let n = params.n();
        let xe = build_embedding_matrix(x, n);
        let mut sk = Matrix::identity(n);
        for _ in 0..k {
            sk = sk.matmul(s).unwrap();
        }
        let agg = sk.matmul(&xe.matmul(params.theta_agg()).unwrap()).unwrap();
        (0..n)
            .map(|u| {
                let mut h: Vec<f64> = agg.row(u).iter().map(|v| v.max(0.0)).collect();
                let layers = params.head().layers();
                for (l, w) in layers.iter().enumerate() {
                    let mut next = vec![0.0; w.rows()];
                    for r in 0..w.rows() {
                        let mut acc = 0.0;
                        for c in 0..w.cols() {
                            acc += w.get(r, c) * h[c];
                        }
                        next[r] = if l + 1 < layers.len() { acc.max(0.0) } else { acc };
                    }
                    h = next;
                }
                h[0]
            })
            .collect()
    }

    #[test]
    fn target_mix_matches_matrix_power() {
        let s = Matrix::from_rows(&[
            vec![0.5, 0.3, 0.2],
            vec![0.3, 0.4, 0.3],
            vec![0.2, 0.3, 0.5],
        ])
        .unwrap();
        let members = [2, 5, 9];
        for k in 1..=3 {
            let sk = propagation_matrix(&s, k).unwrap();
            for t in 0..3 {
                let fast = target_mix(&s, &members, t, k).unwrap();
                let slow = mix_row(&sk, &members, t).unwrap();
                for ((u1, w1), (u2, w2)) in fast.iter().zip(&slow) {
                    assert_eq!(u1, u2);
                    assert!((w1 - w2).abs() < 1e-12);
                }
            }
        }
        assert!(target_mix(&s, &members, 0, 0).is_err());
    }

    #[test]
    fn embedding_matrix_by_hand() {
        let x = build_embedding_matrix(&[1.0, 2.0], 2);
        assert_eq!(x, Matrix::from_rows(&[vec![1.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 2.0]]).unwrap());
        assert_eq!(build_embedding_matrix(&[3.0, 4.0], 1), Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap());
    }

    #[test]
    fn embedding_rows_select_user_blocks() {
        let p = GnnParams::init(3, 4, 5, 2, 1).unwrap();
        let x = unit(2, 4);
        let prod = build_embedding_matrix(&x, 3).matmul(p.theta_agg()).unwrap();
        for u in 0..3 {
            let mut row = vec![0.0; 5];
            p.user_embedding(&x, u, &mut row);
            for j in 0..5 {
                let mut brute = 0.0;
                for i in 0..4 {
                    brute += x[i] * p.theta_agg().get(u * 4 + i, j);
                }
                assert!((prod.get(u, j) - brute).abs() < 1e-12);
                assert!((row[j] - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_matches_reference() {
        let p = GnnParams::init(3, 4, 8, 2, 17).unwrap();
        let s = random_graph(3, 3);
        let x = unit(5, 4);
        let out = gnn_forward(&p, &x, &s, 2, 1).unwrap();
        let expected = reference(&p, &x, &s, 2);
        for (a, b) in out.per_user.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.target_value, out.per_user[1]);
        let (target, _) = p.score(&x, &out.cache.mix).unwrap();
        assert!((target - out.target_value).abs() < 1e-12);
    }

    #[test]
    fn identity_graph_with_identical_blocks_decouples_users() {
        let mut p = GnnParams::init(2, 3, 6, 2, 4).unwrap();
        let block: Vec<f64> = p.theta_agg().data()[..18].to_vec();
        p.theta_agg_mut().data_mut()[18..].copy_from_slice(&block);
        let out = gnn_forward(&p, &unit(1, 3), &Matrix::identity(2), 1, 0).unwrap();
        assert_eq!(out.per_user[0], out.per_user[1]);
    }

    #[test]
    fn identical_rows_of_s_give_identical_outputs() {
        let p = GnnParams::init(3, 2, 6, 2, 8).unwrap();
        let s = Matrix::from_vec(3, 3, vec![1.0 / 3.0; 9]).unwrap();
        let out = gnn_forward(&p, &unit(3, 2), &s, 2, 0).unwrap();
        assert_eq!(out.per_user[0], out.per_user[1]);
        assert_eq!(out.per_user[1], out.per_user[2]);
    }

    #[test]
    fn zero_hops_rejected() {
        let p = GnnParams::init(2, 2, 4, 2, 0).unwrap();
        assert!(matches!(
            gnn_forward(&p, &[1.0, 0.0], &Matrix::identity(2), 0, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(gnn_forward(&p, &[1.0, 0.0, 0.0], &Matrix::identity(2), 1, 0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = GnnParams::init(3, 3, 6, 2, 21).unwrap();
        let s = random_graph(3, 9);
        let x = unit(4, 3);
        let out = gnn_forward(&p, &x, &s, 2, 2).unwrap();
        let analytic = p.raw_gradient(&out.cache).unwrap();
        let base = p.flatten();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = gnn_forward(&p.with_flat(&plus).unwrap(), &x, &s, 2, 2).unwrap().target_value;
            let fm = gnn_forward(&p.with_flat(&minus).unwrap(), &x, &s, 2, 2).unwrap().target_value;
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-4);
            assert!(err < 1e-4, "coordinate {i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn zero_input_has_no_aggregation_gradient() {
        let p = GnnParams::init(2, 3, 4, 2, 2).unwrap();
        let out = gnn_forward(&p, &[0.0; 3], &Matrix::identity(2), 1, 0).unwrap();
        let g = p.raw_gradient(&out.cache).unwrap();
        assert!(g[..p.agg_len()].iter().all(|&v| v == 0.0));
        let pooled = gnn_gradient(&p, &[0.0; 3], &Matrix::identity(2), 1, 0, 4).unwrap();
        assert!(pooled.is_zero());
    }

    #[test]
    fn gradient_is_pure() {
        let p = GnnParams::init(3, 2, 4, 2, 6).unwrap();
        let s = random_graph(3, 1);
        let a = gnn_gradient(&p, &[0.6, 0.8], &s, 1, 0, 5).unwrap();
        let b = gnn_gradient(&p, &[0.6, 0.8], &s, 1, 0, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn memorizes_single_sample() {
        let mut p = GnnParams::init(3, 3, 8, 2, 3).unwrap();
        let s = random_graph(3, 2);
        let sample = GnnSample::from_graph(unit(1, 3), &s, 1, 0, 0.7).unwrap();
        let (_, after) = p.train(&[sample], 0.02, 3000, LossReduction::Sum).unwrap();
        assert!(after < 1e-4, "loss {after}");
    }

    #[test]
    fn training_reduces_loss() {
        let mut p = GnnParams::init(4, 5, 32, 2, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let samples: Vec<GnnSample> = (0..30)
            .map(|i| {
                let s = random_graph(4, 100 + i);
                let label = rng.random_range(0.0..1.0);
                GnnSample::from_graph(unit(200 + i, 5), &s, 1, (i % 4) as usize, label).unwrap()
            })
            .collect();
        let initial = p.loss(&samples).unwrap();
        let (before, after) = p.train(&samples, 1e-3, 2000, LossReduction::Sum).unwrap();
        assert_eq!(before, initial);
        assert!(after < initial);
    }

    #[test]
    fn block_isolation_under_block_diagonal_graph() {
        // users {0,1} and {2,3} form disconnected components
        let mut s = Matrix::zeros(4, 4);
        for (u, v) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            s.set(u, v, 0.5);
        }
        let p = GnnParams::init(4, 2, 5, 2, 7).unwrap();
        let x = [0.6, 0.8];
        let before = gnn_forward(&p, &x, &s, 2, 0).unwrap().per_user;
        let mut q = p.clone();
        for v in &mut q.theta_agg_mut().data_mut()[2 * 2 * 5..] {
            *v += 3.0;
        }
        let after = gnn_forward(&q, &x, &s, 2, 0).unwrap().per_user;
        assert_eq!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
    }
}

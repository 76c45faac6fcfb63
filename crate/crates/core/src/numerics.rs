//! Dense linear algebra and bias-free ReLU networks.
//!
//! Everything the bandit needs numerically lives here: a row-major [`Matrix`],
//! the fully-connected network [`FcParams`] with hand-written forward and
//! backward passes, and plain gradient descent. Networks compute
//! `Θ_L σ(Θ_{L-1} … σ(Θ_1 x))` with σ = ReLU and no bias terms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidShape("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::InvalidShape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::InvalidShape(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `self^k` by repeated multiplication; `k = 0` yields the identity.
    pub fn power(&self, k: usize) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::InvalidShape(format!(
                "power of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let mut out = Matrix::identity(self.rows);
        for _ in 0..k {
            out = out.matmul(self)?;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Population standard deviation over all entries.
    pub fn element_std(&self) -> f64 {
        let n = self.data.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.data.iter().sum::<f64>() / n;
        (self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Hash of the exact bit patterns of `values`.
pub fn fingerprint(values: &[f64]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    values.len().hash(&mut h);
    for v in values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Parameters of a bias-free fully-connected network.
///
/// Layer `l` is stored as an `out_dim × in_dim` matrix so that it maps
/// `h ↦ Θ_l h`. The flattened layout concatenates layers in order, each
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcParams {
    layer_dims: Vec<(usize, usize)>,
    layers: Vec<Matrix>,
}

fn check_dims(layer_dims: &[(usize, usize)]) -> Result<()> {
    if layer_dims.is_empty() {
        return Err(Error::InvalidShape("network needs at least one layer".into()));
    }
    for (l, &(i, o)) in layer_dims.iter().enumerate() {
        if i == 0 || o == 0 {
            return Err(Error::InvalidShape(format!("layer {l} has dims ({i}, {o})")));
        }
    }
    for w in layer_dims.windows(2) {
        if w[0].1 != w[1].0 {
            return Err(Error::InvalidShape(format!(
                "layer dims do not chain: {:?} -> {:?}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Dims of an `L`-layer scalar-output network with hidden width `width`.
pub fn mlp_dims(input: usize, width: usize, depth: usize) -> Vec<(usize, usize)> {
    assert!(depth >= 1);
    if depth == 1 {
        return vec![(input, 1)];
    }
    let mut dims = vec![(input, width)];
    dims.extend(std::iter::repeat_n((width, width), depth - 2));
    dims.push((width, 1));
    dims
}

impl FcParams {
    /// Gaussian initialization: every layer but the last draws from
    /// `N(0, 2/fan_in)`, the last from `N(0, 1/fan_in)`.
    pub fn init(layer_dims: &[(usize, usize)], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(layer_dims, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(layer_dims: &[(usize, usize)], rng: &mut R) -> Result<Self> {
        check_dims(layer_dims)?;
        let last = layer_dims.len() - 1;
        let layers = layer_dims
            .iter()
            .enumerate()
            .map(|(l, &(i, o))| {
                let var = if l == last { 1.0 } else { 2.0 } / i as f64;
                gaussian_matrix(o, i, var, rng)
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    /// Builds a network from explicit `out × in` layer matrices.
    pub fn from_layers(layers: Vec<Matrix>) -> Result<Self> {
        let layer_dims: Vec<_> = layers.iter().map(|m| (m.cols(), m.rows())).collect();
        check_dims(&layer_dims)?;
        Ok(Self { layer_dims, layers })
    }

    pub fn layer_dims(&self) -> &[(usize, usize)] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0].0
    }

    pub fn total_len(&self) -> usize {
        self.layer_dims.iter().map(|(i, o)| i * o).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    pub fn unflatten(layer_dims: &[(usize, usize)], values: &[f64]) -> Result<Self> {
        check_dims(layer_dims)?;
        let total: usize = layer_dims.iter().map(|(i, o)| i * o).sum();
        if values.len() != total {
            return Err(Error::InvalidShape(format!(
                "expected {total} parameters, got {}",
                values.len()
            )));
        }
        let mut offset = 0;
        let layers = layer_dims
            .iter()
            .map(|&(i, o)| {
                let m = Matrix::from_vec(o, i, values[offset..offset + i * o].to_vec());
                offset += i * o;
                m
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, FcCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidShape(format!(
                "input of length {} for network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut h = x.to_vec();
        for layer in &self.layers[..last] {
            let z = layer.matvec(&h)?;
            h = z.iter().map(|&v| relu(v)).collect();
            hidden.push(z);
        }
        let out = dot(self.layers[last].row(0), &h);
        if !out.is_finite() {
            return Err(Error::Numeric("network output is not finite".into()));
        }
        Ok((
            out,
            FcCache {
                dims: self.layer_dims.clone(),
                input: x.to_vec(),
                pre_activations: hidden,
            },
        ))
    }

    /// Scalar output only.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(|(y, _)| y)
    }

    /// `∂output/∂Θ`, flattened in [`FcParams::flatten`] order.
    pub fn backward(&self, cache: &FcCache) -> Result<Gradient> {
        let mut values = vec![0.0; self.total_len()];
        self.accumulate_gradient(cache, 1.0, &mut values)?;
        Ok(Gradient {
            layer_dims: self.layer_dims.clone(),
            values,
        })
    }

    /// Adds `scale · ∂output/∂Θ` into `grad` and returns `scale · ∂output/∂x`.
    pub fn accumulate_gradient(&self, cache: &FcCache, scale: f64, grad: &mut [f64]) -> Result<Vec<f64>> {
        if cache.dims != self.layer_dims || cache.input.len() != self.input_dim() {
            return Err(Error::InvalidShape("cache was produced by a different network".into()));
        }
        if grad.len() != self.total_len() {
            return Err(Error::InvalidShape("gradient buffer length mismatch".into()));
        }
        let last = self.layers.len() - 1;
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for &(i, o) in &self.layer_dims {
            offsets.push(off);
            off += i * o;
        }

        // delta holds ∂out/∂z for the current layer's outputs.
        let mut delta = vec![scale];
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let (in_dim, out_dim) = self.layer_dims[l];
            let pre_input: Option<&Vec<f64>> = if l == 0 { None } else { Some(&cache.pre_activations[l - 1]) };
            let block = &mut grad[offsets[l]..offsets[l] + in_dim * out_dim];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut block[r * in_dim..(r + 1) * in_dim];
                match pre_input {
                    None => {
                        for (g, &xv) in row.iter_mut().zip(&cache.input) {
                            *g += d * xv;
                        }
                    }
                    Some(z) => {
                        for (g, &zv) in row.iter_mut().zip(z) {
                            *g += d * relu(zv);
                        }
                    }
                }
            }
            let mut back = vec![0.0; in_dim];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (b, &w) in back.iter_mut().zip(layer.row(r)) {
                    *b += d * w;
                }
            }
            if let Some(z) = pre_input {
                for (b, &zv) in back.iter_mut().zip(z) {
                    if zv <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
        Ok(delta)
    }

    /// One gradient-descent step, returning the updated parameters.
    pub fn gd_step(&self, grad: &Gradient, eta: f64) -> Result<FcParams> {
        if grad.layer_dims != self.layer_dims {
            return Err(Error::InvalidShape("gradient shape does not match parameters".into()));
        }
        let mut next = self.clone();
        next.apply_update(&grad.values, eta)?;
        Ok(next)
    }

    /// In-place `Θ ← Θ − η·g` over the flattened layout.
    pub fn apply_update(&mut self, grad: &[f64], eta: f64) -> Result<()> {
        if grad.len() != self.total_len() {
            return Err(Error::InvalidShape("gradient length mismatch".into()));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {eta} must be positive")));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("gradient has non-finite entries".into()));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let len = layer.data().len();
            for (p, g) in layer.data_mut().iter_mut().zip(&grad[off..off + len]) {
                *p -= eta * g;
            }
            off += len;
        }
        Ok(())
    }

    /// Sum-form squared loss `Σ (f(x) − y)²` and its gradient.
    pub fn squared_loss_gradient<'a, I>(&self, samples: I) -> Result<(f64, Vec<f64>)>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut grad = vec![0.0; self.total_len()];
        let mut loss = 0.0;
        for (x, y) in samples {
            let (out, cache) = self.forward(x)?;
            let residual = out - y;
            loss += residual * residual;
            self.accumulate_gradient(&cache, 2.0 * residual, &mut grad)?;
        }
        Ok((loss, grad))
    }

    pub fn squared_loss<'a, I>(&self, samples: I) -> Result<f64>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut loss = 0.0;
        for (x, y) in samples {
            let r = self.predict(x)? - y;
            loss += r * r;
        }
        Ok(loss)
    }
}

/// Activations kept by [`FcParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct FcCache {
    dims: Vec<(usize, usize)>,
    input: Vec<f64>,
    pre_activations: Vec<Vec<f64>>,
}

impl FcCache {
    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    layer_dims: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl Gradient {
    pub fn new(layer_dims: &[(usize, usize)], values: Vec<f64>) -> Result<Self> {
        let total: usize = layer_dims.iter().map(|(i, o)| i * o).sum();
        if values.len() != total {
            return Err(Error::InvalidShape(format!(
                "gradient of length {} for {total} parameters",
                values.len()
            )));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layer_dims(&self) -> &[(usize, usize)] {
        &self.layer_dims
    }
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> Matrix {
    let normal = Normal::new(0.0, var.sqrt()).expect("variance is positive");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix { rows, cols, data }
}

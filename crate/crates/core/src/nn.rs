//! Dense feed-forward networks with explicit backpropagation and Adam.
//!
//! Parameters of a [`FeedForwardNet`] live in a single flat vector. Each layer
//! contributes a weight block of shape `(fan_in, fan_out)` in row-major order
//! followed by a bias block of length `fan_out`. Keeping the layout flat lets a
//! hypernetwork emit parameters for a net directly: every forward/backward
//! routine has a `*_with` variant that takes an external parameter slice.
//!
//! All arithmetic is `f64`. Batches are row-major [`DenseMatrix`] values with
//! one sample per row.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("invalid state: {0}")]
    State(String),
    #[error("non-finite gradient at parameter index {index}")]
    NonFinite { index: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Dimension {
            expected,
            got,
            context,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        check_dim(rows * cols, data.len(), "matrix data length")?;
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.as_ref().len(), "row length")?;
            data.extend_from_slice(r.as_ref());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu if x < 0.0 => LEAKY_SLOPE * x,
            _ => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::LeakyRelu if pre < 0.0 => LEAKY_SLOPE,
            _ => 1.0,
        }
    }
}

/// Layer shapes and activations of a multilayer perceptron. Parameters are
/// stored alongside in [`FeedForwardNet`] or supplied externally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl NetShape {
    pub fn new(sizes: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least one layer");
        Self {
            sizes,
            hidden,
            output,
        }
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Σ (nᵢ·nᵢ₊₁ + nᵢ₊₁)
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight_offset, bias_offset, fan_in, fan_out)` for layer `l`.
    pub fn layer_span(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
        (off, off + fi * fo, fi, fo)
    }

    /// Length of the parameter block (weights and bias) of layer `l`.
    pub fn layer_len(&self, l: usize) -> usize {
        self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1]
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.layers() {
            self.output
        } else {
            self.hidden
        }
    }

    /// He-uniform weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        for l in 0..self.layers() {
            let (w_off, _, fi, fo) = self.layer_span(l);
            let bound = (6.0 / fi as f64).sqrt();
            for p in &mut params[w_off..w_off + fi * fo] {
                *p = rng.random_range(-bound..bound);
            }
        }
        params
    }

    pub fn forward_with(
        &self,
        params: &[f64],
        input: &DenseMatrix,
    ) -> Result<ForwardCache, NnError> {
        self.forward_impl(params, input, None)
    }

    /// Training-mode forward pass with inverted dropout on hidden activations.
    pub fn forward_dropout_with(
        &self,
        params: &[f64],
        input: &DenseMatrix,
        rng: &mut dyn RngCore,
        rate: f64,
    ) -> Result<ForwardCache, NnError> {
        if rate <= 0.0 {
            return self.forward_with(params, input);
        }
        self.forward_impl(params, input, Some((rng, rate)))
    }

    fn forward_impl(
        &self,
        params: &[f64],
        input: &DenseMatrix,
        mut dropout: Option<(&mut dyn RngCore, f64)>,
    ) -> Result<ForwardCache, NnError> {
        check_dim(self.param_count(), params.len(), "parameter count")?;
        check_dim(self.input_len(), input.cols(), "input width")?;
        let n = input.rows();
        let mut inputs = Vec::with_capacity(self.layers());
        let mut pre_acts = Vec::with_capacity(self.layers());
        let mut masks = Vec::with_capacity(self.layers());
        let mut current = input.clone();
        for l in 0..self.layers() {
            let (w_off, b_off, fi, fo) = self.layer_span(l);
            let weights = &params[w_off..w_off + fi * fo];
            let bias = &params[b_off..b_off + fo];
            let mut pre = DenseMatrix::zeros(n, fo);
            for i in 0..n {
                let x = current.row(i);
                let out = pre.row_mut(i);
                out.copy_from_slice(bias);
                for (k, &xk) in x.iter().enumerate() {
                    if xk == 0.0 {
                        continue;
                    }
                    let wrow = &weights[k * fo..(k + 1) * fo];
                    for (o, &w) in out.iter_mut().zip(wrow) {
                        *o += xk * w;
                    }
                }
            }
            let act = self.activation(l);
            let mut post = pre.clone();
            for v in post.data_mut() {
                *v = act.apply(*v);
            }
            let last = l + 1 == self.layers();
            let mask = match dropout.as_mut() {
                Some((rng, rate)) if !last => {
                    let keep = 1.0 - *rate;
                    let m: Vec<f64> = (0..post.data().len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for (v, s) in post.data_mut().iter_mut().zip(&m) {
                        *v *= s;
                    }
                    Some(m)
                }
                _ => None,
            };
            inputs.push(current);
            pre_acts.push(pre);
            masks.push(mask);
            current = post;
        }
        Ok(ForwardCache {
            param_count: self.param_count(),
            inputs,
            pre_acts,
            masks,
            output: current,
        })
    }

    /// Backpropagates `upstream = dL/d(output)` through a cached pass.
    /// Parameter gradients are accumulated into `grad`; the input gradient is
    /// returned.
    pub fn backward_with(
        &self,
        params: &[f64],
        cache: &ForwardCache,
        upstream: &DenseMatrix,
        grad: &mut [f64],
    ) -> Result<DenseMatrix, NnError> {
        check_dim(self.param_count(), params.len(), "parameter count")?;
        check_dim(self.param_count(), grad.len(), "gradient length")?;
        if cache.param_count != self.param_count() || cache.inputs.len() != self.layers() {
            return Err(NnError::State(
                "forward cache was produced by a different network".into(),
            ));
        }
        check_dim(cache.output.rows(), upstream.rows(), "upstream rows")?;
        check_dim(self.output_len(), upstream.cols(), "upstream width")?;
        let mut delta = upstream.clone();
        for l in (0..self.layers()).rev() {
            let (w_off, b_off, fi, fo) = self.layer_span(l);
            let act = self.activation(l);
            if let Some(mask) = &cache.masks[l] {
                for (d, m) in delta.data_mut().iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            for (d, &p) in delta.data_mut().iter_mut().zip(cache.pre_acts[l].data()) {
                *d *= act.derivative(p);
            }
            let x = &cache.inputs[l];
            let n = x.rows();
            {
                let (gw, gb) = grad[w_off..b_off + fo].split_at_mut(fi * fo);
                for i in 0..n {
                    let d = delta.row(i);
                    for (b, &dv) in gb.iter_mut().zip(d) {
                        *b += dv;
                    }
                    for (k, &xk) in x.row(i).iter().enumerate() {
                        if xk == 0.0 {
                            continue;
                        }
                        for (g, &dv) in gw[k * fo..(k + 1) * fo].iter_mut().zip(d) {
                            *g += xk * dv;
                        }
                    }
                }
            }
            let weights = &params[w_off..w_off + fi * fo];
            let mut next = DenseMatrix::zeros(n, fi);
            for i in 0..n {
                let d = delta.row(i);
                let out = next.row_mut(i);
                for (k, o) in out.iter_mut().enumerate() {
                    let wrow = &weights[k * fo..(k + 1) * fo];
                    *o = wrow.iter().zip(d).map(|(w, dv)| w * dv).sum();
                }
            }
            delta = next;
        }
        Ok(delta)
    }
}

/// Activations recorded by a forward pass, consumed by backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    param_count: usize,
    inputs: Vec<DenseMatrix>,
    pre_acts: Vec<DenseMatrix>,
    masks: Vec<Option<Vec<f64>>>,
    output: DenseMatrix,
}

impl ForwardCache {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }
}

/// A multilayer perceptron owning its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    pub shape: NetShape,
    pub params: Vec<f64>,
}

impl FeedForwardNet {
    /// LeakyReLU hidden layers, identity output, He-uniform init.
    pub fn new<R: Rng + ?Sized>(sizes: Vec<usize>, rng: &mut R) -> Self {
        Self::with_shape(
            NetShape::new(sizes, Activation::LeakyRelu, Activation::Identity),
            rng,
        )
    }

    pub fn with_shape<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let params = shape.init_params(rng);
        Self { shape, params }
    }

    pub fn zeros(shape: NetShape) -> Self {
        let params = vec![0.0; shape.param_count()];
        Self { shape, params }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = DenseMatrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward_batch(&x)?.output.into_data())
    }

    pub fn forward_batch(&self, input: &DenseMatrix) -> Result<ForwardCache, NnError> {
        self.shape.forward_with(&self.params, input)
    }

    /// Returns `(parameter gradient, input gradient)`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &DenseMatrix,
    ) -> Result<(Vec<f64>, DenseMatrix), NnError> {
        let mut grad = vec![0.0; self.param_count()];
        let dx = self
            .shape
            .backward_with(&self.params, cache, upstream, &mut grad)?;
        Ok((grad, dx))
    }
}

/// Adam with bias correction and optional L2 weight decay folded into the
/// gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        check_dim(self.len(), params.len(), "adam parameters")?;
        check_dim(self.len(), grads.len(), "adam gradients")?;
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { index });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales all gradient groups jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(groups: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = groups
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for v in groups.iter_mut().flat_map(|g| g.iter_mut()) {
            *v *= scale;
        }
    }
    norm
}

/// One named parameter tensor in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// A flat list of named tensors plus free-form string tags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tags: BTreeMap<String, String>,
    pub tensors: Vec<ParamTensor>,
}

impl Checkpoint {
    /// Appends one tensor per layer weight and bias of `net`, named
    /// `{prefix}.{layer}.weight` / `{prefix}.{layer}.bias`.
    pub fn push_net(&mut self, prefix: &str, shape: &NetShape, params: &[f64]) {
        for l in 0..shape.layers() {
            let (w_off, b_off, fi, fo) = shape.layer_span(l);
            self.tensors.push(ParamTensor {
                name: format!("{prefix}.{l}.weight"),
                shape: vec![fi, fo],
                values: params[w_off..b_off].to_vec(),
            });
            self.tensors.push(ParamTensor {
                name: format!("{prefix}.{l}.bias"),
                shape: vec![fo],
                values: params[b_off..b_off + fo].to_vec(),
            });
        }
    }

    /// Reassembles the flat parameter vector written by [`Checkpoint::push_net`].
    pub fn read_net(&self, prefix: &str, shape: &NetShape) -> Result<Vec<f64>, NnError> {
        let mut params = Vec::with_capacity(shape.param_count());
        for l in 0..shape.layers() {
            for (suffix, expected) in [
                ("weight", vec![shape.sizes[l], shape.sizes[l + 1]]),
                ("bias", vec![shape.sizes[l + 1]]),
            ] {
                let name = format!("{prefix}.{l}.{suffix}");
                let t = self
                    .tensors
                    .iter()
                    .find(|t| t.name == name)
                    .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))?;
                if t.shape != expected || t.values.len() != expected.iter().product::<usize>() {
                    return Err(NnError::Checkpoint(format!("shape mismatch for {name}")));
                }
                params.extend_from_slice(&t.values);
            }
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        if let Some(t) = self
            .tensors
            .iter()
            .find(|t| t.values.iter().any(|v| !v.is_finite()))
        {
            return Err(NnError::Checkpoint(format!("non-finite value in {}", t.name)));
        }
        serde_json::to_string(self).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}

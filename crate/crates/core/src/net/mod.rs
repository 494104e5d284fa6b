//! The quantizer network `x ↦ (y_1, …, y_Q)`.
//!
//! A plain multilayer perceptron: `hidden_layers` affine maps of width
//! `width`, each followed by the activation, then a final affine map to
//! `n_y · Q` outputs that are read row-wise as `Q` points of `R^{n_y}`.
//!
//! All weights and biases live in one flat vector. Layer `l` occupies a
//! contiguous block: its `out × in` weight matrix (row-major) followed by its
//! `out` biases.

mod checkpoint;

pub use checkpoint::{CheckpointDocument, OptimizerSnapshot, FORMAT_VERSION};

use crate::error::{check_dim, Error, Result};
use crate::rng::{tag, StreamRng};

pub const DEFAULT_HIDDEN_LAYERS: usize = 5;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)
    }
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    z
                } else {
                    s * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at `z`; for leaky-ReLU the slope `s` is used at `z = 0`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if z > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    /// Points where the activation is not differentiable.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Activation::LeakyRelu(_) => &[0.0],
            Activation::Tanh => &[],
        }
    }

    /// Text form used in checkpoints and experiment files:
    /// `leaky_relu(0.01)` or `tanh`.
    pub fn name(self) -> String {
        match self {
            Activation::LeakyRelu(s) => format!("leaky_relu({s:?})"),
            Activation::Tanh => "tanh".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter {
            field: "activation",
            reason: format!("unknown activation `{s}` (expected `leaky_relu`, `leaky_relu(<slope>)` or `tanh`)"),
        };
        match s {
            "tanh" => Ok(Activation::Tanh),
            "leaky_relu" => Ok(Activation::default()),
            _ => {
                let slope = s
                    .strip_prefix("leaky_relu(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(bad)?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad())?;
                if !slope.is_finite() {
                    return Err(bad());
                }
                Ok(Activation::LeakyRelu(slope))
            }
        }
    }
}

/// Layer sizes of the quantizer network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetArchitecture {
    input_dim: usize,
    hidden_layers: usize,
    width: usize,
    activation: Activation,
    n_y: usize,
    q: usize,
}

impl NetArchitecture {
    /// Default layout: five hidden layers of width `n_y · Q`, leaky-ReLU.
    pub fn new(input_dim: usize, n_y: usize, q: usize) -> Result<Self> {
        Self::with_layers(input_dim, n_y, q, DEFAULT_HIDDEN_LAYERS, n_y * q, Activation::default())
    }

    pub fn with_layers(
        input_dim: usize,
        n_y: usize,
        q: usize,
        hidden_layers: usize,
        width: usize,
        activation: Activation,
    ) -> Result<Self> {
        for (field, v) in [("input_dim", input_dim), ("n_y", n_y), ("q", q), ("width", width)] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    field,
                    reason: "must be >= 1".into(),
                });
            }
        }
        Ok(Self {
            input_dim,
            hidden_layers,
            width,
            activation,
            n_y,
            q,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_layers(&self) -> usize {
        self.hidden_layers
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn output_dim(&self) -> usize {
        self.n_y * self.q
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            shapes.push((fan_in, self.width));
            fan_in = self.width;
        }
        shapes.push((fan_in, self.output_dim()));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| o * (i + 1)).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerView {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl LayerView {
    fn weights(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn biases(self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

fn layer_views(arch: &NetArchitecture) -> Vec<LayerView> {
    let mut offset = 0;
    arch.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let v = LayerView {
                fan_in,
                fan_out,
                offset,
            };
            offset += fan_out * (fan_in + 1);
            v
        })
        .collect()
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `inputs[0]` is `x`, `inputs[l]` the post-activation of hidden layer `l−1`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last one is the network output.
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Flat output of length `n_y · Q`.
    pub fn output(&self) -> &[f64] {
        self.pre_activations.last().expect("at least one layer")
    }

    /// Pre-activations of the hidden layers only.
    pub fn hidden_pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations[..self.pre_activations.len() - 1]
    }
}

/// Network parameters plus the architecture that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerNet {
    arch: NetArchitecture,
    params: Vec<f64>,
}

impl QuantizerNet {
    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init(arch: NetArchitecture, seed: u64) -> Self {
        let mut params = vec![0.0; arch.param_count()];
        for (l, view) in layer_views(&arch).into_iter().enumerate() {
            let limit = (6.0 / (view.fan_in + view.fan_out) as f64).sqrt();
            let mut rng = StreamRng::substream(seed, &[tag::NET_INIT, l as u64]);
            for w in &mut params[view.weights()] {
                *w = (2.0 * rng.uniform() - 1.0) * limit;
            }
        }
        Self { arch, params }
    }

    /// Wraps an explicit parameter vector; length and finiteness are checked.
    pub fn from_params(arch: NetArchitecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        check_finite(&params)?;
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &NetArchitecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access for optimizers; callers re-check finiteness after updates.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.params)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        check_dim(self.arch.input_dim, x.len())?;
        let views = layer_views(&self.arch);
        let last = views.len() - 1;
        let mut inputs = Vec::with_capacity(views.len());
        let mut pre_activations = Vec::with_capacity(views.len());
        let mut current = x.to_vec();
        for (l, view) in views.into_iter().enumerate() {
            let w = &self.params[view.weights()];
            let b = &self.params[view.biases()];
            let z: Vec<f64> = w
                .chunks_exact(view.fan_in)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(&current).fold(*bias, |acc, (wi, xi)| acc + wi * xi))
                .collect();
            let next = if l == last {
                Vec::new()
            } else {
                z.iter().map(|&v| self.arch.activation.apply(v)).collect()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre_activations.push(z);
        }
        Ok(ForwardCache {
            inputs,
            pre_activations,
        })
    }

    /// Flat output of length `n_y · Q`.
    pub fn forward_flat(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.pre_activations.pop().expect("at least one layer"))
    }

    /// The `Q` quantization points for condition `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .forward_flat(x)?
            .chunks_exact(self.arch.n_y)
            .map(<[f64]>::to_vec)
            .collect())
    }

    /// Adds `d loss / d params` into `grad`, given `upstream = d loss / d output`
    /// (flat, length `n_y · Q`) and the cache of the matching forward pass.
    pub fn backward_into(&self, cache: &ForwardCache, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        check_dim(self.arch.output_dim(), upstream.len())?;
        check_dim(self.params.len(), grad.len())?;
        let views = layer_views(&self.arch);
        let mut delta = upstream.to_vec();
        for l in (0..views.len()).rev() {
            let view = views[l];
            let input = &cache.inputs[l];
            {
                let gw = &mut grad[view.weights()];
                for (row, d) in gw.chunks_exact_mut(view.fan_in).zip(&delta) {
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            for (g, d) in grad[view.biases()].iter_mut().zip(&delta) {
                *g += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[view.weights()];
            let mut prev = vec![0.0; view.fan_in];
            for (row, d) in w.chunks_exact(view.fan_in).zip(&delta) {
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            for (p, z) in prev.iter_mut().zip(&cache.pre_activations[l - 1]) {
                *p *= self.arch.activation.derivative(*z);
            }
            delta = prev;
        }
        Ok(())
    }

    /// Parameter gradient of `⟨upstream, forward(x)⟩`, with `upstream` given as
    /// one gradient per output point.
    pub fn backward(&self, x: &[f64], upstream: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_dim(self.arch.q, upstream.len())?;
        let mut flat = Vec::with_capacity(self.arch.output_dim());
        for g in upstream {
            check_dim(self.arch.n_y, g.len())?;
            flat.extend_from_slice(g);
        }
        let cache = self.forward_cached(x)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(&cache, &flat, &mut grad)?;
        Ok(grad)
    }

    /// Checkpoint document for this net (no optimizer state).
    pub fn to_document(&self, seed: Option<u64>, iterations_trained: Option<u64>) -> CheckpointDocument {
        CheckpointDocument {
            arch: self.arch,
            params: self.params.clone(),
            seed,
            iterations_trained,
            optimizer: None,
        }
    }

    /// Serialized checkpoint text.
    pub fn save(&self, seed: Option<u64>, iterations_trained: Option<u64>) -> Result<String> {
        self.check_finite()?;
        Ok(self.to_document(seed, iterations_trained).to_text())
    }

    pub fn load(text: &str) -> Result<Self> {
        let doc = CheckpointDocument::parse(text)?;
        Self::from_params(doc.arch, doc.params)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteParameter { index }),
        None => Ok(()),
    }
}

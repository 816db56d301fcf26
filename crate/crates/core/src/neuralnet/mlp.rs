use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MLP_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl LayerSpec {
    pub fn new(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            input,
            output,
            activation,
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    fn param_count(&self) -> usize {
        self.input * self.output + if self.bias { self.output } else { 0 }
    }
}

/// Multilayer perceptron with all parameters in one flat buffer.
///
/// Layer `k` stores its `output × input` weight matrix row-major, followed by
/// its bias vector when enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    version: u64,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    /// Input to each layer, plus the final output.
    activations: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least one layer")
    }
}

impl Mlp {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(layers: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        for (k, spec) in net.layers.clone().iter().enumerate() {
            let limit = (6.0 / (spec.input + spec.output) as f64).sqrt();
            let start = net.offsets[k];
            for w in &mut net.params[start..start + spec.input * spec.output] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output != pair[1].input {
                return Err(Error::DimensionMismatch {
                    context: "consecutive layers",
                    expected: pair[0].output,
                    actual: pair[1].input,
                });
            }
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for spec in &layers {
            offsets.push(total);
            total += spec.param_count();
        }
        Ok(Self {
            layers,
            offsets,
            params: vec![0.0; total],
            version: 0,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").output
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params_mut().copy_from_slice(params);
        Ok(())
    }

    /// Weight matrix and optional bias of layer `k`.
    pub fn layer_params(&self, k: usize) -> (&[f64], Option<&[f64]>) {
        let spec = &self.layers[k];
        let start = self.offsets[k];
        let w_end = start + spec.input * spec.output;
        let weights = &self.params[start..w_end];
        let bias = spec.bias.then(|| &self.params[w_end..w_end + spec.output]);
        (weights, bias)
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, k: usize, input: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        let spec = self.layers[k];
        let (weights, bias) = self.layer_params(k);
        pre.clear();
        out.clear();
        for row in 0..spec.output {
            let w = &weights[row * spec.input..(row + 1) * spec.input];
            let mut z: f64 = w.iter().zip(input).map(|(a, b)| a * b).sum();
            if let Some(b) = bias {
                z += b[row];
            }
            pre.push(z);
            out.push(spec.activation.apply(z));
        }
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let mut pre = Vec::new();
        let mut out = Vec::new();
        for k in 0..self.layers.len() {
            self.layer_forward(k, &current, &mut pre, &mut out);
            std::mem::swap(&mut current, &mut out);
        }
        Ok(current)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        for k in 0..self.layers.len() {
            let mut pre = Vec::new();
            let mut out = Vec::new();
            self.layer_forward(k, &activations[k], &mut pre, &mut out);
            pres.push(pre);
            activations.push(out);
        }
        let cache = ForwardCache {
            version: self.version,
            activations,
            pre: pres,
        };
        Ok((cache.output().to_vec(), cache))
    }

    /// Adds the parameter gradient for `output_grad` into `param_grads` and
    /// returns the gradient with respect to the network input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        param_grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                current: self.version,
            });
        }
        if cache.pre.len() != self.layers.len() {
            return Err(Error::invalid("forward cache from a different network"));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient buffer",
                expected: self.params.len(),
                actual: param_grads.len(),
            });
        }
        let mut delta_out = output_grad.to_vec();
        for k in (0..self.layers.len()).rev() {
            let spec = self.layers[k];
            let input = &cache.activations[k];
            let output = &cache.activations[k + 1];
            let pre = &cache.pre[k];
            let delta: Vec<f64> = (0..spec.output)
                .map(|i| delta_out[i] * spec.activation.derivative(pre[i], output[i]))
                .collect();
            let start = self.offsets[k];
            let w_len = spec.input * spec.output;
            let (weights, _) = self.layer_params(k);
            let mut delta_in = vec![0.0; spec.input];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let grad_row = &mut param_grads[start + row * spec.input..start + (row + 1) * spec.input];
                for (g, &x) in grad_row.iter_mut().zip(input) {
                    *g += d * x;
                }
                let w_row = &weights[row * spec.input..(row + 1) * spec.input];
                for (di, &w) in delta_in.iter_mut().zip(w_row) {
                    *di += d * w;
                }
            }
            if spec.bias {
                for (g, &d) in param_grads[start + w_len..start + w_len + spec.output]
                    .iter_mut()
                    .zip(&delta)
                {
                    *g += d;
                }
            }
            delta_out = delta_in;
        }
        Ok(delta_out)
    }

    /// Parameter gradients and input gradient for one cached pass.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            format_version: MLP_FORMAT_VERSION,
            layers: self.layers.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &MlpCheckpoint) -> Result<Self> {
        if ckpt.format_version != MLP_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported network format version {}",
                ckpt.format_version
            )));
        }
        let mut net = Self::zeros(ckpt.layers.clone())?;
        net.set_params(&ckpt.params)?;
        net.version = 0;
        Ok(net)
    }
}

/// Serialized network: layer shapes plus the flat parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format_version: u32,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
}

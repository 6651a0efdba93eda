//! Dense tanh networks with hand-written reverse mode and Adam.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamConfig, AdamState, Parameters};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's own output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer. `weights` is row-major with `outputs` rows and `inputs`
/// columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.inputs..(r + 1) * self.inputs]
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, b)| b + dot(self.row(r), x)));
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multilayer perceptron: tanh on hidden layers, a configurable output head
/// (identity by default).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Per-layer outputs recorded during a forward pass; `outputs[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace {
    pub outputs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("trace holds at least the input")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Mlp,
    pub input: Vec<f64>,
}

impl Mlp {
    /// `sizes` lists every layer width including input and output, so
    /// `[4, 64, 64, 2]` builds three affine layers.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let mlp = Self {
            layers,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    /// Checks layer compatibility and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(Error::Shape(format!(
                    "layer {i}: {}x{} weights with {} entries and bias of {}",
                    layer.outputs,
                    layer.inputs,
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if i > 0 && self.layers[i - 1].outputs != layer.inputs {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layer.inputs,
                    i - 1,
                    self.layers[i - 1].outputs
                )));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameters of layer {i}")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(&self.sizes());
        z.hidden_activation = self.hidden_activation;
        z.output_activation = self.output_activation;
        z
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut y);
            let act = if i == last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            y.iter_mut().for_each(|v| *v = act.apply(*v));
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.affine(&outputs[i], &mut y);
            let act = if i == last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            y.iter_mut().for_each(|v| *v = act.apply(*v));
            outputs.push(y);
        }
        Ok(Trace { outputs })
    }

    /// Adds the gradient of `output · output_grad` into `grad` and returns the
    /// gradient with respect to the input.
    pub fn accumulate_gradient(&self, trace: &Trace, output_grad: &[f64], grad: &mut Mlp) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has {} entries, network produces {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if trace.outputs.len() != self.layers.len() + 1 || grad.layers.len() != self.layers.len() {
            return Err(Error::Shape("trace or gradient does not match network depth".into()));
        }
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = output_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = if i == last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            let out = &trace.outputs[i + 1];
            for (d, y) in delta.iter_mut().zip(out) {
                *d *= act.derivative_from_output(*y);
            }
            let input = &trace.outputs[i];
            let g = &mut grad.layers[i];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] += d;
                if *d != 0.0 {
                    let row = &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs];
                    for (w, x) in row.iter_mut().zip(input) {
                        *w += d * x;
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (r, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (p, w) in prev.iter_mut().zip(layer.row(r)) {
                        *p += d * w;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Exact reverse-mode gradient of `forward(input) · output_grad`.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        let trace = self.forward_trace(input)?;
        let mut params = self.zeros_like();
        let input_grad = self.accumulate_gradient(&trace, output_grad, &mut params)?;
        Ok(Gradients {
            params,
            input: input_grad,
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_value_mut(|v| *v *= factor);
    }

    pub fn add_scaled(&mut self, other: &Mlp, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += factor * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += factor * y;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|v| v * v)
            .sum()
    }

    fn for_each_value_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(&mut f);
            layer.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer {i} weights"), l.weights.as_slice()));
            out.push((format!("layer {i} bias"), l.bias.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    fn zeros_like(&self) -> Self {
        Mlp::zeros_like(self)
    }
}

#[cfg(test)]
mod tests;

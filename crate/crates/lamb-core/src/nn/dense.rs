//! Fully-connected layer with manual forward/backward passes.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Parameter;

/// Elementwise nonlinearity applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative evaluated at pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Values saved by [`DenseLayer::forward`] that backward needs again.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre_act: Vec<f64>,
}

/// `y = act(W x + b)` with `W: out x in`, gradients accumulated in place.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

impl DenseLayer {
    /// Weights uniform on (-1/sqrt(in), 1/sqrt(in)), biases zero.
    pub fn new(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        DenseLayer {
            weight: Parameter::uniform(format!("{name}.weight"), out_dim, in_dim, scale, rng),
            bias: Parameter::zeros(format!("{name}.bias"), out_dim, 1),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if input.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                context: "dense forward",
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        let mut pre_act = vec![0.0; out_dim];
        for r in 0..out_dim {
            let row = &self.weight.values[r * in_dim..(r + 1) * in_dim];
            let mut z = self.bias.values[r];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            pre_act[r] = z;
        }
        let output = pre_act.iter().map(|&z| self.activation.apply(z)).collect();
        let cache = DenseCache {
            input: input.to_vec(),
            pre_act,
        };
        Ok((output, cache))
    }

    /// Accumulate dW and db from `grad_output`; return gradient w.r.t. input.
    pub fn backward(&mut self, cache: &DenseCache, grad_output: &[f64]) -> Result<Vec<f64>> {
        if grad_output.len() != self.out_dim() {
            return Err(Error::ShapeMismatch {
                context: "dense backward",
                expected: self.out_dim(),
                got: grad_output.len(),
            });
        }
        if cache.input.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                context: "dense backward cache",
                expected: self.in_dim(),
                got: cache.input.len(),
            });
        }
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        let mut grad_input = vec![0.0; in_dim];
        for r in 0..out_dim {
            let dz = grad_output[r] * self.activation.derivative(cache.pre_act[r]);
            self.bias.grad[r] += dz;
            let wrow = r * in_dim;
            for c in 0..in_dim {
                self.weight.grad[wrow + c] += dz * cache.input[c];
                grad_input[c] += dz * self.weight.values[wrow + c];
            }
        }
        Ok(grad_input)
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}

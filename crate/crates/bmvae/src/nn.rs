//! Dense feed-forward networks with hand-written forward and backward
//! passes. No framework: weights are plain row-major matrices, the forward
//! pass records a tape of layer inputs and pre-activations, and the backward
//! pass replays it in reverse to produce exact gradients. Every gradient in
//! the crate flows through this module, so it is cross-checked against
//! central finite differences in the tests.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Logistic,
    Rectifier,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Logistic => logistic(x),
            Activation::Rectifier => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Logistic => {
                let s = logistic(x);
                s * (1.0 - s)
            }
            Activation::Rectifier => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Logistic => "logistic",
            Activation::Rectifier => "rectifier",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Activation::Identity),
            "logistic" => Ok(Activation::Logistic),
            "rectifier" => Ok(Activation::Rectifier),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
        out
    }

    /// `self^T * y`.
    pub fn matvec_transposed(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, yr) in y.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Parameters of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Forward-pass record: per layer, the input it saw and its pre-activations.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

/// Parameter gradients with the same shapes as the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGrads {
                weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                bias: vec![0.0; l.output_dim()],
            })
            .collect();
        Self { layers }
    }

    /// `self += other * scale`.
    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += y * scale;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y * scale;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.data_mut().iter_mut().for_each(|x| *x *= factor);
            l.bias.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

impl MlpParams {
    /// Network with the given layer widths, one activation per layer.
    /// Weights are uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn init(sizes: &[usize], activations: &[Activation], rng: &mut crate::rng::Stream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} activations for {} layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (w, &act) in sizes.windows(2).zip(activations) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weights = Matrix::zeros(fan_out, fan_in);
            for v in weights.data_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
            layers.push(Layer { weights, bias: vec![0.0; fan_out], activation: act });
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    /// Forward pass; the tape feeds `backward`.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input length {} for a network expecting {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut tape = Tape { inputs: Vec::with_capacity(self.layers.len()), pre_activations: Vec::with_capacity(self.layers.len()) };
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut pre = layer.weights.matvec(&x);
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            let out = pre.iter().map(|&p| layer.activation.apply(p)).collect();
            tape.inputs.push(x);
            tape.pre_activations.push(pre);
            x = out;
        }
        Ok((x, tape))
    }

    /// Exact reverse-mode pass. `output_grad` is dLoss/d(output); returns
    /// parameter gradients and dLoss/d(input).
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::DimensionMismatch("tape does not match network depth".into()));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "output gradient length {} for a network producing {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut upstream = output_grad.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let pre = &tape.pre_activations[idx];
            let input = &tape.inputs[idx];
            // delta = upstream ⊙ act'(pre)
            let delta: Vec<f64> = upstream
                .iter()
                .zip(pre)
                .map(|(u, p)| u * layer.activation.derivative(*p))
                .collect();
            let g = &mut grads.layers[idx];
            for (r, d) in delta.iter().enumerate() {
                let row = &mut g.weights.data_mut()[r * input.len()..(r + 1) * input.len()];
                for (w, xi) in row.iter_mut().zip(input) {
                    *w += d * xi;
                }
                g.bias[r] += d;
            }
            upstream = layer.weights.matvec_transposed(&delta);
        }
        Ok((grads, upstream))
    }

    /// Flattened view of all parameters, used by the optimizer and the
    /// finite-difference tests. Order: per layer, weights row-major, then
    /// biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data().len() + l.bias.len()).sum()
    }

    /// Writes `values` back into the parameter slots; inverse of `flatten`.
    pub fn unflatten(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weights.data_mut();
            w.copy_from_slice(&values[at..at + w.len()]);
            at += w.len();
            let blen = l.bias.len();
            l.bias.copy_from_slice(&values[at..at + blen]);
            at += blen;
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

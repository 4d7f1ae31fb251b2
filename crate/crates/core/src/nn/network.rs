use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, BatchStats, Dense};
use super::{Activation, Mode};
use crate::matrix::Matrix;
use crate::{Error, Result};

/// Shape of a feed-forward stack: `sizes[0]` inputs, then one dense layer per
/// following size. Hidden layers get optional batch norm and
/// `hidden_activation`; the last layer gets `output_activation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub batch_norm: bool,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::Config(format!(
                "network needs an input and at least one layer, got sizes {:?}",
                self.sizes
            )));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                self.sizes
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Activation(Activation),
}

#[derive(Clone, Debug, PartialEq)]
enum LayerCache {
    Plain,
    BatchTrain(BatchStats),
    BatchEval(Matrix),
}

/// Everything a backward pass needs from the forward pass it follows.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    mode: Mode,
    inputs: Vec<Matrix>,
    caches: Vec<LayerCache>,
    output: Matrix,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Activations entering each layer, followed by the final output.
    pub fn activations(&self) -> impl Iterator<Item = &Matrix> {
        self.inputs.iter().chain(core::iter::once(&self.output))
    }
}

/// Parameter gradients, one block per parameter tensor in
/// [`Network::params`] order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.blocks.iter().flatten().all(|&g| g == 0.0)
    }

    pub fn extend(&mut self, other: Gradients) {
        self.blocks.extend(other.blocks);
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let last = spec.sizes.len() - 2;
        for (i, pair) in spec.sizes.windows(2).enumerate() {
            layers.push(Layer::Dense(Dense::init(pair[0], pair[1], rng)));
            let activation = if i == last {
                spec.output_activation
            } else {
                if spec.batch_norm {
                    layers.push(Layer::BatchNorm(BatchNorm::new(pair[1])));
                }
                spec.hidden_activation
            };
            if activation != Activation::Identity {
                layers.push(Layer::Activation(activation));
            }
        }
        Ok(Self {
            input: spec.sizes[0],
            layers,
        })
    }

    /// Assembles a network from explicit layers, checking that widths chain.
    pub fn from_layers(input: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    if d.inputs() != width || d.biases.len() != d.outputs() {
                        return Err(Error::Structural(format!(
                            "dense layer {i} expects {} inputs but receives {width}",
                            d.inputs()
                        )));
                    }
                    width = d.outputs();
                }
                Layer::BatchNorm(b) => {
                    if b.units() != width {
                        return Err(Error::Structural(format!(
                            "batch norm layer {i} has {} units but receives {width}",
                            b.units()
                        )));
                    }
                }
                Layer::Activation(_) => {}
            }
        }
        Ok(Self { input, layers })
    }

    pub fn input_width(&self) -> usize {
        self.input
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.outputs()),
                _ => None,
            })
            .unwrap_or(self.input)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    /// Runs the stack without touching any state. In train mode the batch
    /// statistics are recorded in the trace; [`Network::commit`] folds them
    /// into the running averages.
    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<Trace> {
        if x.cols() != self.input {
            return Err(Error::Structural(format!(
                "network expects width {} but batch has width {}",
                self.input,
                x.cols()
            )));
        }
        if mode == Mode::Train && self.has_batch_norm() && x.rows() < 2 {
            return Err(Error::Structural(format!(
                "batch normalization in train mode needs at least 2 rows, got {}",
                x.rows()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Dense(d) => (d.forward(&current)?, LayerCache::Plain),
                Layer::BatchNorm(b) => match mode {
                    Mode::Train => {
                        let (y, stats) = b.forward_train(&current);
                        (y, LayerCache::BatchTrain(stats))
                    }
                    Mode::Eval => {
                        let (y, normalized) = b.forward_eval(&current);
                        (y, LayerCache::BatchEval(normalized))
                    }
                },
                Layer::Activation(a) => (current.map(|z| a.apply(z)), LayerCache::Plain),
            };
            inputs.push(current);
            caches.push(cache);
            current = next;
        }
        Ok(Trace {
            mode,
            inputs,
            caches,
            output: current,
        })
    }

    /// Folds the batch statistics of a train-mode trace into the running
    /// averages.
    pub fn commit(&mut self, trace: &Trace) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            if let (Layer::BatchNorm(b), LayerCache::BatchTrain(stats)) = (layer, cache) {
                b.update_running(stats);
            }
        }
    }

    /// Train-mode forward followed by a running-statistics update.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<Trace> {
        let trace = self.forward(x, Mode::Train)?;
        self.commit(&trace);
        Ok(trace)
    }

    /// Eval-mode output.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x, Mode::Eval)?.output)
    }

    fn check_trace(&self, trace: &Trace, upstream: &Matrix) -> Result<()> {
        if trace.inputs.len() != self.layers.len() || trace.caches.len() != self.layers.len() {
            return Err(Error::Usage(format!(
                "trace holds {} cached activations for a network of {} layers",
                trace.inputs.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate() {
            let ok = match (layer, cache) {
                (Layer::BatchNorm(_), LayerCache::BatchTrain(_)) => trace.mode == Mode::Train,
                (Layer::BatchNorm(_), LayerCache::BatchEval(_)) => trace.mode == Mode::Eval,
                (Layer::BatchNorm(_), LayerCache::Plain) => false,
                (_, LayerCache::Plain) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Usage(format!(
                    "cached activations for layer {i} do not match the network"
                )));
            }
        }
        if upstream.rows() != trace.output.rows() || upstream.cols() != trace.output.cols() {
            return Err(Error::Structural(format!(
                "upstream gradient is {}x{} but the output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                trace.output.rows(),
                trace.output.cols()
            )));
        }
        Ok(())
    }

    /// Reverse-mode pass. `upstream` is the gradient of the scalar loss with
    /// respect to the network output (already carrying any `1/n` factor of a
    /// mean loss). Returns parameter gradients and the input gradient.
    pub fn backward(&self, trace: &Trace, upstream: &Matrix) -> Result<(Gradients, Matrix)> {
        self.check_trace(trace, upstream)?;
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut grad = upstream.clone();
        for idx in (0..self.layers.len()).rev() {
            let input = &trace.inputs[idx];
            grad = match (&self.layers[idx], &trace.caches[idx]) {
                (Layer::Dense(d), _) => {
                    let (dw, db, dx) = d.backward(input, &grad)?;
                    per_layer[idx] = vec![dw, db];
                    dx
                }
                (Layer::BatchNorm(b), LayerCache::BatchTrain(stats)) => {
                    let (dg, ds, dx) = b.backward_train(stats, &grad);
                    per_layer[idx] = vec![dg, ds];
                    dx
                }
                (Layer::BatchNorm(b), LayerCache::BatchEval(normalized)) => {
                    let (dg, ds, dx) = b.backward_eval(normalized, &grad);
                    per_layer[idx] = vec![dg, ds];
                    dx
                }
                (Layer::Activation(a), _) => {
                    let output = trace
                        .inputs
                        .get(idx + 1)
                        .unwrap_or(&trace.output);
                    let mut dx = grad;
                    for ((g, &z), &y) in dx
                        .as_mut_slice()
                        .iter_mut()
                        .zip(input.as_slice())
                        .zip(output.as_slice())
                    {
                        *g *= a.derivative(z, y);
                    }
                    dx
                }
                (Layer::BatchNorm(_), LayerCache::Plain) => unreachable!("checked above"),
            };
        }
        let blocks = per_layer.into_iter().flatten().collect();
        Ok((Gradients { blocks }, grad))
    }

    /// Parameter tensors in a fixed order: per dense layer weights then
    /// biases, per batch norm gain then shift.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice());
                    out.push(&d.biases[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&b.gain[..]);
                    out.push(&b.shift[..]);
                }
                Layer::Activation(_) => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_mut_slice());
                    out.push(&mut d.biases[..]);
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gain[..]);
                    out.push(&mut b.shift[..]);
                }
                Layer::Activation(_) => {}
            }
        }
        out
    }

    /// Running statistics of every batch-norm layer, flattened.
    pub fn running_stats(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm(b) = layer {
                out.extend_from_slice(&b.running_mean);
                out.extend_from_slice(&b.running_var);
            }
        }
        out
    }
}

use alloc::string::String;
use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{argmax, Matrix};
use crate::nn::{Activation, BatchNorm, Dense, Gradients, Layer, Mode, Network, Trace};
use crate::{Error, Result, N_ACTIONS};

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

/// Dueling Q-network: a batch-normalized leaky-ReLU trunk whose last hidden
/// layer is split in two equal halves. The first half feeds the advantage
/// head, the second the value head, and `Q = V + A - mean(A)` per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuelingQNet {
    pub trunk: Network,
    pub advantage: Dense,
    pub value: Dense,
}

/// Forward state needed by [`DuelingQNet::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct QTrace {
    trunk: Trace,
    q: Matrix,
}

impl QTrace {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn into_q(self) -> Matrix {
        self.q
    }
}

impl DuelingQNet {
    pub fn new<R: Rng>(input: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let last = *hidden
            .last()
            .ok_or_else(|| Error::Config(String::from("dueling network needs at least one hidden layer")))?;
        if last % 2 != 0 {
            return Err(Error::Config(format!(
                "last hidden layer ({last}) must split into two equal streams"
            )));
        }
        if input == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!("layer sizes must be positive, got {input} and {hidden:?}")));
        }
        // every trunk layer, the last included, is dense, batch norm, leaky ReLU
        let mut layers = Vec::new();
        let mut width = input;
        for &units in hidden {
            layers.push(Layer::Dense(Dense::init(width, units, rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(units)));
            layers.push(Layer::Activation(Activation::LeakyRelu));
            width = units;
        }
        Ok(Self {
            trunk: Network::from_layers(input, layers)?,
            advantage: Dense::init(last / 2, N_ACTIONS, rng),
            value: Dense::init(last / 2, 1, rng),
        })
    }

    /// Assembles a network from explicit parts, checking the stream widths.
    pub fn from_parts(trunk: Network, advantage: Dense, value: Dense) -> Result<Self> {
        let half = trunk.output_width() / 2;
        if trunk.output_width() % 2 != 0
            || advantage.inputs() != half
            || value.inputs() != half
            || advantage.outputs() != N_ACTIONS
            || value.outputs() != 1
        {
            return Err(Error::Structural(format!(
                "trunk width {} does not match heads {}->{} and {}->{}",
                trunk.output_width(),
                advantage.inputs(),
                advantage.outputs(),
                value.inputs(),
                value.outputs()
            )));
        }
        Ok(Self { trunk, advantage, value })
    }

    pub fn input_width(&self) -> usize {
        self.trunk.input_width()
    }

    fn half(&self) -> usize {
        self.trunk.output_width() / 2
    }

    pub fn forward(&self, states: &Matrix, mode: Mode) -> Result<QTrace> {
        let trunk = self.trunk.forward(states, mode)?;
        let h = trunk.output();
        let half = self.half();
        let adv = self.advantage.forward(&h.columns(0, half))?;
        let val = self.value.forward(&h.columns(half, 2 * half))?;
        let mut q = Matrix::zeros(h.rows(), N_ACTIONS);
        for i in 0..h.rows() {
            let a = adv.row(i);
            let mean = a.iter().sum::<f64>() / N_ACTIONS as f64;
            let v = val[(i, 0)];
            for (o, &ai) in q.row_mut(i).iter_mut().zip(a) {
                *o = v + ai - mean;
            }
        }
        Ok(QTrace { trunk, q })
    }

    /// Eval-mode Q-values for every row.
    pub fn q_values(&self, states: &Matrix) -> Result<Matrix> {
        Ok(self.forward(states, Mode::Eval)?.q)
    }

    pub fn commit(&mut self, trace: &QTrace) {
        self.trunk.commit(&trace.trunk);
    }

    /// Gradients for an upstream `dL/dQ` of shape `batch x 25`, in
    /// [`DuelingQNet::params`] order.
    pub fn backward(&self, trace: &QTrace, upstream: &Matrix) -> Result<Gradients> {
        if upstream.rows() != trace.q.rows() || upstream.cols() != N_ACTIONS {
            return Err(Error::Structural(format!(
                "upstream gradient is {}x{} but Q is {}x{N_ACTIONS}",
                upstream.rows(),
                upstream.cols(),
                trace.q.rows()
            )));
        }
        let n = upstream.rows();
        let half = self.half();
        let mut d_adv = Matrix::zeros(n, N_ACTIONS);
        let mut d_val = Matrix::zeros(n, 1);
        for i in 0..n {
            let g = upstream.row(i);
            let total: f64 = g.iter().sum();
            let mean = total / N_ACTIONS as f64;
            for (o, &gi) in d_adv.row_mut(i).iter_mut().zip(g) {
                *o = gi - mean;
            }
            d_val[(i, 0)] = total;
        }
        let h = trace.trunk.output();
        let (daw, dab, dh_adv) = self.advantage.backward(&h.columns(0, half), &d_adv)?;
        let (dvw, dvb, dh_val) = self.value.backward(&h.columns(half, 2 * half), &d_val)?;
        let mut dh = Matrix::zeros(n, 2 * half);
        for i in 0..n {
            let row = dh.row_mut(i);
            row[..half].copy_from_slice(dh_adv.row(i));
            row[half..].copy_from_slice(dh_val.row(i));
        }
        let (mut grads, _) = self.trunk.backward(&trace.trunk, &dh)?;
        grads.blocks.extend([daw, dab, dvw, dvb]);
        Ok(grads)
    }

    /// Trunk parameters, then advantage weights and biases, then value
    /// weights and biases.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = self.trunk.params();
        out.extend([
            self.advantage.weights.as_slice(),
            &self.advantage.biases[..],
            self.value.weights.as_slice(),
            &self.value.biases[..],
        ]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.trunk.params_mut();
        out.push(self.advantage.weights.as_mut_slice());
        out.push(&mut self.advantage.biases[..]);
        out.push(self.value.weights.as_mut_slice());
        out.push(&mut self.value.biases[..]);
        out
    }
}

/// Greedy action per row of `q`, lowest index on ties.
pub fn greedy_actions(q: &Matrix) -> Vec<usize> {
    q.iter_rows().map(argmax).collect()
}

/// Eval-mode greedy policy.
pub fn extract_policy(net: &DuelingQNet, states: &Matrix) -> Result<Vec<usize>> {
    Ok(greedy_actions(&net.q_values(states)?))
}

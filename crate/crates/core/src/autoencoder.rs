//! Single-hidden-layer autoencoder with an optional KL sparsity penalty.
//! Its sigmoid hidden layer is the latent state fed to the Q-network.

use alloc::string::String;
use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::math::log;
use crate::matrix::Matrix;
use crate::nn::{sigmoid, AdamConfig, AdamState, Dense, Gradients};
use crate::rng::seeded;
use crate::{Error, Result};

const RHO_HAT_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseAeConfig {
    pub hidden_dim: usize,
    pub rho: f64,
    pub beta_sparsity: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SparseAeConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            rho: 0.05,
            beta_sparsity: 1.0,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl SparseAeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config(String::from("hidden_dim must be positive")));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.beta_sparsity >= 0.0 && self.beta_sparsity.is_finite()) {
            return Err(Error::Config(format!(
                "beta_sparsity must be non-negative, got {}",
                self.beta_sparsity
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(String::from("batch_size must be positive")));
        }
        Ok(())
    }
}

/// Sigmoid encoder and linear decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeParams {
    pub encoder: Dense,
    pub decoder: Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeEpoch {
    pub epoch: usize,
    pub reconstruction: f64,
    pub penalty: f64,
    pub total: f64,
    pub mean_activation: f64,
}

fn clamp_rho_hat(r: f64) -> f64 {
    r.clamp(RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP)
}

/// `sum_j KL(rho || rho_hat_j)` between Bernoulli distributions, with each
/// `rho_hat_j` clamped into `[1e-6, 1 - 1e-6]`.
pub fn kl_sparsity_penalty(rho: f64, rho_hat: &[f64]) -> f64 {
    rho_hat
        .iter()
        .map(|&r| {
            let r = clamp_rho_hat(r);
            rho * log(rho / r) + (1.0 - rho) * log((1.0 - rho) / (1.0 - r))
        })
        .sum()
}

/// Derivative of [`kl_sparsity_penalty`] with respect to each `rho_hat_j`.
pub fn kl_sparsity_gradient(rho: f64, rho_hat: &[f64]) -> Vec<f64> {
    rho_hat
        .iter()
        .map(|&r| {
            let r = clamp_rho_hat(r);
            -rho / r + (1.0 - rho) / (1.0 - r)
        })
        .collect()
}

struct Pass {
    hidden: Matrix,
    output: Matrix,
}

impl AeParams {
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        Self {
            encoder: Dense::init(input_dim, hidden_dim, &mut rng),
            decoder: Dense::init(hidden_dim, input_dim, &mut rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.inputs()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.outputs()
    }

    /// Latent codes, each in `(0, 1)`.
    pub fn encode(&self, states: &Matrix) -> Result<Matrix> {
        if states.cols() != self.input_dim() {
            return Err(Error::Structural(format!(
                "encoder expects width {} but states have width {}",
                self.input_dim(),
                states.cols()
            )));
        }
        Ok(self.encoder.forward(states)?.map(sigmoid))
    }

    pub fn reconstruct(&self, states: &Matrix) -> Result<Matrix> {
        self.decoder.forward(&self.encode(states)?)
    }

    fn pass(&self, x: &Matrix) -> Result<Pass> {
        let hidden = self.encode(x)?;
        let output = self.decoder.forward(&hidden)?;
        Ok(Pass { hidden, output })
    }

    pub fn params(&self) -> Vec<&[f64]> {
        alloc::vec![
            self.encoder.weights.as_slice(),
            &self.encoder.biases[..],
            self.decoder.weights.as_slice(),
            &self.decoder.biases[..],
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        alloc::vec![
            self.encoder.weights.as_mut_slice(),
            &mut self.encoder.biases[..],
            self.decoder.weights.as_mut_slice(),
            &mut self.decoder.biases[..],
        ]
    }

    /// Loss components on a batch: mean squared reconstruction error over
    /// all entries, and the sparsity penalty of the batch's mean hidden
    /// activations.
    pub fn loss_components(&self, x: &Matrix, rho: f64) -> Result<(f64, f64, Vec<f64>)> {
        let pass = self.pass(x)?;
        let reconstruction = mse(&pass.output, x);
        let rho_hat = pass.hidden.column_means();
        Ok((reconstruction, kl_sparsity_penalty(rho, &rho_hat), rho_hat))
    }

    /// Gradients of `reconstruction + beta * penalty` on one batch.
    pub fn gradients(&self, x: &Matrix, rho: f64, beta: f64) -> Result<Gradients> {
        let Pass { hidden, output } = self.pass(x)?;
        let n = x.rows() as f64;
        let scale = 2.0 / (n * x.cols() as f64);
        let mut d_out = output;
        for (o, &t) in d_out.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *o = scale * (*o - t);
        }
        let (dwd, dbd, mut d_hidden) = self.decoder.backward(&hidden, &d_out)?;
        let kl_grad = kl_sparsity_gradient(rho, &hidden.column_means());
        for i in 0..hidden.rows() {
            for (j, g) in d_hidden.row_mut(i).iter_mut().enumerate() {
                let h = hidden[(i, j)];
                *g = (*g + beta * kl_grad[j] / n) * h * (1.0 - h);
            }
        }
        let (dwe, dbe, _) = self.encoder.backward(x, &d_hidden)?;
        Ok(Gradients {
            blocks: alloc::vec![dwe, dbe, dwd, dbd],
        })
    }
}

fn mse(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

fn epoch_summary(params: &AeParams, x: &Matrix, cfg: &SparseAeConfig, epoch: usize) -> Result<AeEpoch> {
    let (reconstruction, penalty, rho_hat) = params.loss_components(x, cfg.rho)?;
    let total = reconstruction + cfg.beta_sparsity * penalty;
    let mean_activation = rho_hat.iter().sum::<f64>() / rho_hat.len() as f64;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "autoencoder loss at epoch {epoch}: reconstruction {reconstruction}, penalty {penalty}"
        )));
    }
    Ok(AeEpoch {
        epoch,
        reconstruction,
        penalty,
        total,
        mean_activation,
    })
}

/// Minibatch Adam on `reconstruction + beta * penalty`, where `rho_hat` is
/// the mean activation of each minibatch. Each log row is measured on the
/// full training matrix after the epoch.
pub fn train_autoencoder_on(x: &Matrix, cfg: &SparseAeConfig) -> Result<(AeParams, Vec<AeEpoch>)> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::Data(String::from("no training rows for the autoencoder")));
    }
    if !x.is_finite() {
        return Err(Error::Data(String::from("autoencoder input contains non-finite values")));
    }
    let mut params = AeParams::init(x.cols(), cfg.hidden_dim, cfg.seed);
    let mut adam = AdamState::for_params(AdamConfig::with_lr(cfg.learning_rate), &params.params());
    let mut rng = seeded(crate::rng::derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = x.select_rows(chunk);
            let grads = params.gradients(&batch, cfg.rho, cfg.beta_sparsity)?;
            adam.step(params.params_mut(), &grads).map_err(|e| match e {
                Error::Optimizer { block } => Error::NonFinite(format!(
                    "autoencoder gradient block {block} became non-finite in epoch {epoch}"
                )),
                other => other,
            })?;
        }
        log.push(epoch_summary(&params, x, cfg, epoch)?);
    }
    Ok((params, log))
}

/// Trains on the feature matrix of a preprocessed cohort.
pub fn train_autoencoder(train: &Cohort, cfg: &SparseAeConfig) -> Result<(AeParams, Vec<AeEpoch>)> {
    train_autoencoder_on(&train.feature_matrix()?, cfg)
}

pub fn encode(params: &AeParams, states: &Matrix) -> Result<Matrix> {
    params.encode(states)
}

//! Minimal dense network engine: dense layers, batch normalization,
//! leaky-ReLU and sigmoid activations, reverse-mode gradients and Adam.
//!
//! Batch normalization sits between a dense layer and its activation.

mod adam;
mod layers;
mod network;
#[cfg(test)]
pub(crate) mod testing;

pub use adam::{AdamConfig, AdamState};
pub use layers::{BatchNorm, Dense};
pub use network::{Gradients, Layer, Network, NetworkSpec, Trace};

use crate::math::exp;
use serde::{Deserialize, Serialize};

/// Slope of the negative branch of [`leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.5;

/// `max(z, 0.5 z)`.
#[inline]
pub fn leaky_relu(z: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

/// Derivative of [`leaky_relu`]; the subgradient at zero is 1.
#[inline]
pub fn leaky_relu_grad(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu => leaky_relu(z),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative given the pre-activation `z` and the output `y`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu => leaky_relu_grad(z),
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

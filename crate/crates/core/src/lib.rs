//! Offline reinforcement learning for discretized treatment policies.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithm of the
//! pipeline: cohort preprocessing and the synthetic cohort generator, the
//! clustered SARSA baseline, a small dense network engine, the dueling double
//! DQN with prioritized replay, sparse autoencoders, and the evaluation suite
//! (calibration curve, doubly-robust off-policy values, action histograms).
//! File formats, configuration and the command-line tool live in the `qdose`
//! companion crate.
#![no_std]

extern crate alloc;

pub mod autoencoder;
pub mod baseline;
pub mod cohort;
pub mod dqn;
mod error;
pub mod eval;
mod math;
pub mod matrix;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Number of physiological features per timestep.
pub const N_FEATURES: usize = 47;

/// Number of dose bins per drug (bin 0 is "no drug").
pub const N_BINS: usize = 5;

/// Size of the joint (IV, vasopressor) action space.
pub const N_ACTIONS: usize = N_BINS * N_BINS;

/// Default magnitude of the terminal reward.
pub const DEFAULT_R_MAX: f64 = 15.0;

/// Default discount factor.
pub const DEFAULT_GAMMA: f64 = 0.99;

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::matrix::Matrix;
use crate::Result;

/// Fully connected layer computing `x W^T + b`, weights stored `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Dense {
    /// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Matrix::from_vec(outputs, inputs, data).expect("sized"),
            biases: vec![0.0; outputs],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weights: Matrix::identity(n),
            biases: vec![0.0; n],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_t(&self.weights)?;
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.biases) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Returns `(dW, db, dx)`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix) -> Result<(Vec<f64>, Vec<f64>, Matrix)> {
        let dw = dy.t_matmul(x)?;
        let db = dy.column_sums();
        let dx = dy.matmul(&self.weights)?;
        Ok((dw.into_vec(), db, dx))
    }
}

/// Per-unit batch normalization with learned gain and shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Batch statistics cached by a train-mode pass.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub normalized: Matrix,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(units: usize) -> Self {
        Self {
            gain: vec![1.0; units],
            shift: vec![0.0; units],
            running_mean: vec![0.0; units],
            running_var: vec![1.0; units],
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn units(&self) -> usize {
        self.gain.len()
    }

    pub(crate) fn forward_train(&self, x: &Matrix) -> (Matrix, BatchStats) {
        let n = x.rows() as f64;
        let mean = x.column_means();
        let mut var = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for ((v, &xi), m) in var.iter_mut().zip(r).zip(&mean) {
                let d = xi - m;
                *v += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= n;
        }
        let mut normalized = Matrix::zeros(x.rows(), x.cols());
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let h = (x[(i, j)] - mean[j]) / sqrt(var[j] + self.epsilon);
                normalized[(i, j)] = h;
                y[(i, j)] = self.gain[j] * h + self.shift[j];
            }
        }
        (
            y,
            BatchStats {
                mean,
                var,
                normalized,
            },
        )
    }

    pub(crate) fn forward_eval(&self, x: &Matrix) -> (Matrix, Matrix) {
        let mut normalized = Matrix::zeros(x.rows(), x.cols());
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let h = (x[(i, j)] - self.running_mean[j])
                    / sqrt(self.running_var[j] + self.epsilon);
                normalized[(i, j)] = h;
                y[(i, j)] = self.gain[j] * h + self.shift[j];
            }
        }
        (y, normalized)
    }

    pub(crate) fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for j in 0..self.units() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * stats.mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * stats.var[j];
        }
    }

    /// Train-mode backward; returns `(dgain, dshift, dx)`.
    pub(crate) fn backward_train(
        &self,
        stats: &BatchStats,
        dy: &Matrix,
    ) -> (Vec<f64>, Vec<f64>, Matrix) {
        let n = dy.rows() as f64;
        let units = self.units();
        let mut dgain = vec![0.0; units];
        let mut dshift = vec![0.0; units];
        let mut sum_dh = vec![0.0; units];
        let mut sum_dh_h = vec![0.0; units];
        for i in 0..dy.rows() {
            for j in 0..units {
                let g = dy[(i, j)];
                let h = stats.normalized[(i, j)];
                dgain[j] += g * h;
                dshift[j] += g;
                let dh = g * self.gain[j];
                sum_dh[j] += dh;
                sum_dh_h[j] += dh * h;
            }
        }
        let mut dx = Matrix::zeros(dy.rows(), units);
        for j in 0..units {
            let inv_std = 1.0 / sqrt(stats.var[j] + self.epsilon);
            for i in 0..dy.rows() {
                let dh = dy[(i, j)] * self.gain[j];
                let h = stats.normalized[(i, j)];
                dx[(i, j)] = inv_std / n * (n * dh - sum_dh[j] - h * sum_dh_h[j]);
            }
        }
        (dgain, dshift, dx)
    }

    /// Eval-mode backward: the layer is affine in its input.
    pub(crate) fn backward_eval(
        &self,
        normalized: &Matrix,
        dy: &Matrix,
    ) -> (Vec<f64>, Vec<f64>, Matrix) {
        let units = self.units();
        let mut dgain = vec![0.0; units];
        let mut dshift = vec![0.0; units];
        let mut dx = Matrix::zeros(dy.rows(), units);
        for i in 0..dy.rows() {
            for j in 0..units {
                let g = dy[(i, j)];
                dgain[j] += g * normalized[(i, j)];
                dshift[j] += g;
                dx[(i, j)] = g * self.gain[j] / sqrt(self.running_var[j] + self.epsilon);
            }
        }
        (dgain, dshift, dx)
    }
}

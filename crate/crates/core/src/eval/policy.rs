use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::baseline::ClusterModel;
use crate::cohort::Cohort;
use crate::matrix::{argmax, Matrix};
use crate::{Error, Result, N_ACTIONS};

pub const DEFAULT_SMOOTHING: f64 = 0.5;
pub const DEFAULT_EPSILON_SOFT: f64 = 0.01;

/// Cluster-conditional action frequencies of the logged policy.
///
/// Rows sum to one and every entry is positive whenever `smoothing > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub probs: Matrix,
    pub smoothing: f64,
}

impl BehaviorPolicy {
    /// `counts[c][a]` is how often action `a` was logged in cluster `c`.
    pub fn from_counts(counts: &[[u64; N_ACTIONS]], smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0) || !smoothing.is_finite() {
            return Err(Error::Config(format!("smoothing must be positive, got {smoothing}")));
        }
        let mut probs = Matrix::zeros(counts.len(), N_ACTIONS);
        for (c, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            let denom = total as f64 + N_ACTIONS as f64 * smoothing;
            for (p, &n) in probs.row_mut(c).iter_mut().zip(row) {
                *p = (n as f64 + smoothing) / denom;
            }
        }
        Ok(Self { probs, smoothing })
    }

    pub fn n_clusters(&self) -> usize {
        self.probs.rows()
    }

    pub fn prob(&self, cluster: usize, action: usize) -> f64 {
        self.probs[(cluster, action)]
    }

    pub fn row(&self, cluster: usize) -> &[f64] {
        self.probs.row(cluster)
    }
}

pub fn estimate_behavior_policy(train: &Cohort, model: &ClusterModel, smoothing: f64) -> Result<BehaviorPolicy> {
    let mut counts = vec![[0u64; N_ACTIONS]; model.k()];
    for step in train.timesteps() {
        let cluster = model.assign(&step.features.dense()?);
        counts[cluster][step.action_index()?] += 1;
    }
    BehaviorPolicy::from_counts(&counts, smoothing)
}

/// Greedy-from-Q policy that keeps `epsilon_soft` of the mass spread evenly
/// over the non-greedy actions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPolicy {
    pub epsilon_soft: f64,
}

impl Default for EvaluationPolicy {
    fn default() -> Self {
        Self {
            epsilon_soft: DEFAULT_EPSILON_SOFT,
        }
    }
}

impl EvaluationPolicy {
    pub fn new(epsilon_soft: f64) -> Result<Self> {
        if !(epsilon_soft > 0.0 && epsilon_soft < 1.0) {
            return Err(Error::Config(format!("epsilon_soft must lie in (0, 1), got {epsilon_soft}")));
        }
        Ok(Self { epsilon_soft })
    }

    /// Action probabilities for one row of Q-values (any width >= 2).
    pub fn probs(&self, q_row: &[f64]) -> Vec<f64> {
        let n = q_row.len();
        let greedy = argmax(q_row);
        let other = self.epsilon_soft / (n - 1) as f64;
        let mut out = vec![other; n];
        out[greedy] = 1.0 - self.epsilon_soft;
        out
    }
}

use alloc::string::String;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::pow;
use crate::{Error, Result};

/// Binary tree over a fixed number of leaves where every internal node holds
/// the sum of its children. Leaves are padded to a power of two with zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumTree {
    len: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let leaves = len.max(1).next_power_of_two();
        Self {
            len,
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    /// Sets leaf `i` and recomputes the sums on its path to the root.
    pub fn set(&mut self, i: usize, value: f64) -> Result<()> {
        if i >= self.len {
            return Err(Error::Usage(format!("leaf {i} outside 0..{}", self.len)));
        }
        let mut node = self.leaves + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
        Ok(())
    }

    /// Leaf whose cumulative range contains `mass`, for `mass` in
    /// `[0, total)`. Values at or past the total land on the last positive
    /// leaf.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }

    /// Internal node values, index 1 being the root; exposed for invariant
    /// checks.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of leaf slots, a power of two.
    pub fn leaf_slots(&self) -> usize {
        self.leaves
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epsilon_priority: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            epsilon_priority: 1e-2,
        }
    }
}

impl PerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("PER alpha must be non-negative, got {}", self.alpha)));
        }
        for b in [self.beta_start, self.beta_end] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("PER beta must lie in [0, 1], got {b}")));
            }
        }
        if !(self.epsilon_priority > 0.0 && self.epsilon_priority.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon_priority must be positive, got {}",
                self.epsilon_priority
            )));
        }
        Ok(())
    }

    /// Linear anneal from `beta_start` at step 0 to `beta_end` at the last
    /// step.
    pub fn beta(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 {
            return self.beta_end;
        }
        let frac = step as f64 / (total_steps - 1) as f64;
        self.beta_start + (self.beta_end - self.beta_start) * frac.min(1.0)
    }
}

/// Prioritized replay over a fixed set of transition indices. The tree
/// stores `priority^alpha`; raw priorities are kept for the max rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerBuffer {
    config: PerConfig,
    tree: SumTree,
    filled: usize,
    max_priority: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerSample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl PerBuffer {
    pub fn new(capacity: usize, config: PerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tree: SumTree::new(capacity),
            filled: 0,
            max_priority: 1.0,
        })
    }

    /// Buffer holding `len` transitions, all at the initial max priority.
    pub fn filled(len: usize, config: PerConfig) -> Result<Self> {
        let mut buffer = Self::new(len, config)?;
        for _ in 0..len {
            buffer.push()?;
        }
        Ok(buffer)
    }

    pub fn config(&self) -> &PerConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// Adds the next slot at the current max priority and returns its index.
    pub fn push(&mut self) -> Result<usize> {
        if self.filled == self.tree.len() {
            return Err(Error::Usage(format!("replay buffer is full ({})", self.filled)));
        }
        let i = self.filled;
        self.tree.set(i, pow(self.max_priority, self.config.alpha))?;
        self.filled += 1;
        Ok(i)
    }

    /// Sets an explicit raw priority.
    pub fn set_priority(&mut self, i: usize, priority: f64) -> Result<()> {
        if i >= self.filled {
            return Err(Error::Usage(format!("index {i} outside 0..{}", self.filled)));
        }
        if !(priority > 0.0 && priority.is_finite()) {
            return Err(Error::Usage(format!("priority must be positive and finite, got {priority}")));
        }
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(i, pow(priority, self.config.alpha))
    }

    /// Sampling probability `p_i^alpha / sum_j p_j^alpha`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// Stratified draw: the total mass is cut into `batch_size` equal
    /// segments and one point is drawn uniformly in each. Importance weights
    /// `(N P(i))^-beta` are divided by the batch maximum.
    pub fn sample<R: Rng>(&self, batch_size: usize, beta: f64, rng: &mut R) -> Result<PerSample> {
        if self.filled == 0 {
            return Err(Error::Usage(String::from("cannot sample from an empty replay buffer")));
        }
        if batch_size == 0 {
            return Err(Error::Usage(String::from("batch size must be positive")));
        }
        let total = self.tree.total();
        let segment = total / batch_size as f64;
        let n = self.filled as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let mass = (k as f64 + rng.random::<f64>()) * segment;
            let i = self.tree.find(mass.min(total)).min(self.filled - 1);
            indices.push(i);
            weights.push(pow(n * self.probability(i), -beta));
        }
        let max = weights.iter().cloned().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max;
        }
        Ok(PerSample { indices, weights })
    }

    /// `priority_i <- |td_i| + epsilon_priority`.
    pub fn update(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Usage(format!(
                "{} indices but {} TD errors",
                indices.len(),
                td_errors.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.filled) {
            return Err(Error::Usage(format!("index {bad} outside 0..{}", self.filled)));
        }
        for (&i, &td) in indices.iter().zip(td_errors) {
            self.set_priority(i, td.abs() + self.config.epsilon_priority)?;
        }
        Ok(())
    }
}

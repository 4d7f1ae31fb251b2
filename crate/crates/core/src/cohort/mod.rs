//! Patient trajectories and their preprocessing: imputation, capping,
//! normalization, dose discretization, reward assignment and stratified
//! splitting. Also hosts the synthetic cohort generator.

mod actions;
pub mod features;
mod impute;
mod normalize;
mod split;
pub mod synthetic;

pub use actions::{fit_action_bins, percentile, ActionSpace, DiscreteAction, RawDosePair};
pub use impute::{impute_missing, DEFAULT_IMPUTE_K};
pub use normalize::{cap_and_normalize, cap_values, fit_norm_stats, Caps, NormStats};
pub use split::split_cohort;
pub use synthetic::{generate_synthetic_cohort, LatentState, PhysicianBehavior, SeverityDynamics, SyntheticCohortConfig, SyntheticModel};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result, N_FEATURES};

/// One timestep of physiology; `None` marks a missing measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<Option<f64>>);

impl FeatureVector {
    pub fn new(values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != N_FEATURES {
            return Err(Error::Data(format!(
                "feature vector has {} entries, expected {N_FEATURES}",
                values.len()
            )));
        }
        Ok(Self(values))
    }

    pub fn complete(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().copied().map(Some).collect())
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [Option<f64>] {
        &mut self.0
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    /// Dense copy, failing on the first missing entry.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::Data(format!(
                        "feature {i} ({}) is missing",
                        features::feature_name(i)
                    ))
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Survived,
    Died,
}

impl Outcome {
    pub fn died(self) -> bool {
        self == Outcome::Died
    }

    /// Mortality label: 1 for death, 0 for survival.
    pub fn label(self) -> f64 {
        if self.died() {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timestep {
    pub features: FeatureVector,
    pub raw_dose: RawDosePair,
    pub action: Option<DiscreteAction>,
    pub reward: f64,
    pub is_terminal: bool,
}

impl Timestep {
    pub fn new(features: FeatureVector, raw_dose: RawDosePair) -> Self {
        Self {
            features,
            raw_dose,
            action: None,
            reward: 0.0,
            is_terminal: false,
        }
    }

    pub fn action_index(&self) -> Result<usize> {
        self.action
            .map(|a| a.index())
            .ok_or_else(|| Error::Data(String::from("timestep has no discretized action")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientTrajectory {
    pub patient_id: String,
    pub steps: Vec<Timestep>,
    pub outcome: Outcome,
}

impl PatientTrajectory {
    /// Marks the last step terminal; rejects empty trajectories.
    pub fn new(patient_id: String, mut steps: Vec<Timestep>, outcome: Outcome) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Data(format!("patient {patient_id} has no timesteps")));
        }
        let last = steps.len() - 1;
        for (i, s) in steps.iter_mut().enumerate() {
            s.is_terminal = i == last;
        }
        Ok(Self {
            patient_id,
            steps,
            outcome,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Discounted logged return from the first step.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 0.0;
        for s in self.steps.iter().rev() {
            g = s.reward + gamma * g;
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub trajectories: Vec<PatientTrajectory>,
    /// Statistics applied by [`cap_and_normalize`]; `None` while raw.
    pub norm_stats: Option<NormStats>,
    pub caps: Caps,
}

impl Cohort {
    pub fn new(trajectories: Vec<PatientTrajectory>) -> Self {
        Self {
            trajectories,
            norm_stats: None,
            caps: Caps::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn n_timesteps(&self) -> usize {
        self.trajectories.iter().map(PatientTrajectory::len).sum()
    }

    pub fn timesteps(&self) -> impl Iterator<Item = &Timestep> {
        self.trajectories.iter().flat_map(|t| t.steps.iter())
    }

    /// Fraction of patients who died.
    pub fn mortality(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        let deaths = self
            .trajectories
            .iter()
            .filter(|t| t.outcome.died())
            .count();
        deaths as f64 / self.trajectories.len() as f64
    }

    /// All timesteps as rows of a matrix, in trajectory order.
    pub fn feature_matrix(&self) -> Result<Matrix> {
        let mut data = Vec::with_capacity(self.n_timesteps() * N_FEATURES);
        for s in self.timesteps() {
            data.extend(s.features.dense()?);
        }
        Matrix::from_vec(self.n_timesteps(), N_FEATURES, data)
    }

    /// Replaces each terminal reward with `±r_max` by outcome and zeroes
    /// every other step.
    pub fn assign_rewards(&mut self, r_max: f64) {
        for t in &mut self.trajectories {
            let last = t.steps.len().saturating_sub(1);
            let terminal = if t.outcome.died() { -r_max } else { r_max };
            for (i, s) in t.steps.iter_mut().enumerate() {
                s.is_terminal = i == last;
                s.reward = if i == last { terminal } else { 0.0 };
            }
        }
    }

    /// Discretizes every logged dose in place.
    pub fn discretize_actions(&mut self, space: &ActionSpace) -> Result<()> {
        for t in &mut self.trajectories {
            for s in &mut t.steps {
                s.action = Some(space.discretize(s.raw_dose)?);
            }
        }
        Ok(())
    }
}

/// Functional form of [`Cohort::assign_rewards`].
pub fn assign_rewards(mut cohort: Cohort, r_max: f64) -> Cohort {
    cohort.assign_rewards(r_max);
    cohort
}

use alloc::string::String;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::kmeans::ClusterModel;
use crate::cohort::{Cohort, PatientTrajectory};
use crate::matrix::Matrix;
use crate::rng::seeded;
use crate::{Error, Result, DEFAULT_GAMMA, N_ACTIONS};

/// Step-size schedule. `Harmonic` uses `alpha / n(s, a)^omega` where `n`
/// counts updates of the pair including the current one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepSize {
    Constant,
    Harmonic { omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SarsaConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub n_sweeps: usize,
    pub seed: u64,
    pub step_size: StepSize,
}

impl Default for SarsaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: DEFAULT_GAMMA,
            n_sweeps: 20,
            seed: 0,
            step_size: StepSize::Constant,
        }
    }
}

impl SarsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if let StepSize::Harmonic { omega } = self.step_size {
            if !(omega > 0.0 && omega <= 1.0) {
                return Err(Error::Config(format!("omega must lie in (0, 1], got {omega}")));
            }
        }
        Ok(())
    }
}

/// Tabular action values over discrete states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: Matrix,
    pub visit_counts: Vec<u64>,
}

impl QTable {
    pub fn zeros(n_states: usize) -> Self {
        Self {
            values: Matrix::zeros(n_states, N_ACTIONS),
            visit_counts: vec![0; n_states * N_ACTIONS],
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[(state, action)]
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visit_counts[state * N_ACTIONS + action]
    }

    pub fn total_visits(&self) -> u64 {
        self.visit_counts.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.as_slice().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One `<s, a, r, s', a'>` tuple; `next` is `None` at a terminal step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SarsaTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarsaEpoch {
    pub epoch: usize,
    pub mean_abs_td: f64,
    pub max_abs_q: f64,
}

/// Clusters every timestep and pairs it with its successor.
pub fn sarsa_transitions(trajs: &[PatientTrajectory], model: &ClusterModel) -> Result<Vec<SarsaTransition>> {
    let mut out = Vec::new();
    for t in trajs {
        let mut states = Vec::with_capacity(t.steps.len());
        let mut actions = Vec::with_capacity(t.steps.len());
        for (i, s) in t.steps.iter().enumerate() {
            let a = s.action_index().map_err(|_| {
                Error::Data(format!("patient {} step {i} has no discretized action", t.patient_id))
            })?;
            states.push(model.assign(&s.features.dense()?));
            actions.push(a);
        }
        for i in 0..t.steps.len() {
            let next = if t.steps[i].is_terminal {
                None
            } else {
                Some((states[i + 1], actions[i + 1]))
            };
            out.push(SarsaTransition {
                state: states[i],
                action: actions[i],
                reward: t.steps[i].reward,
                next,
            });
        }
    }
    Ok(out)
}

/// Runs `n_sweeps` epochs over the transitions, each a fresh shuffle.
pub fn train_sarsa_transitions(
    transitions: &[SarsaTransition],
    n_states: usize,
    cfg: &SarsaConfig,
) -> Result<(QTable, Vec<SarsaEpoch>)> {
    cfg.validate()?;
    if let Some(bad) = transitions
        .iter()
        .find(|t| t.state >= n_states || t.action >= N_ACTIONS || t.next.is_some_and(|(s, a)| s >= n_states || a >= N_ACTIONS))
    {
        return Err(Error::Data(format!("transition {bad:?} out of range")));
    }
    let mut q = QTable::zeros(n_states);
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    let mut rng = seeded(cfg.seed);
    let mut log = Vec::with_capacity(cfg.n_sweeps);
    for epoch in 0..cfg.n_sweeps {
        order.shuffle(&mut rng);
        let mut td_sum = 0.0;
        for &i in &order {
            let t = transitions[i];
            let target = match t.next {
                Some((s, a)) => t.reward + cfg.gamma * q.get(s, a),
                None => t.reward,
            };
            let cell = t.state * N_ACTIONS + t.action;
            q.visit_counts[cell] += 1;
            let alpha = match cfg.step_size {
                StepSize::Constant => cfg.alpha,
                StepSize::Harmonic { omega } => {
                    cfg.alpha / crate::math::pow(q.visit_counts[cell] as f64, omega)
                }
            };
            let td = target - q.values[(t.state, t.action)];
            q.values[(t.state, t.action)] += alpha * td;
            td_sum += td.abs();
        }
        log.push(SarsaEpoch {
            epoch,
            mean_abs_td: if order.is_empty() { 0.0 } else { td_sum / order.len() as f64 },
            max_abs_q: q.max_abs(),
        });
    }
    Ok((q, log))
}

pub fn train_sarsa(
    trajs: &[PatientTrajectory],
    model: &ClusterModel,
    cfg: &SarsaConfig,
) -> Result<(QTable, Vec<SarsaEpoch>)> {
    let transitions = sarsa_transitions(trajs, model)?;
    train_sarsa_transitions(&transitions, model.k(), cfg)
}

/// Mean over test timesteps of `Q(cluster(s), logged action)`.
pub fn physician_value(q: &QTable, model: &ClusterModel, test: &Cohort) -> Result<f64> {
    let values = logged_q_values(q, model, test)?;
    if values.is_empty() {
        return Err(Error::Data(String::from("test cohort is empty")));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-timestep `Q(cluster(s), logged action)` in cohort order.
pub fn logged_q_values(q: &QTable, model: &ClusterModel, cohort: &Cohort) -> Result<Vec<f64>> {
    cohort
        .timesteps()
        .enumerate()
        .map(|(i, s)| {
            let a = s
                .action_index()
                .map_err(|_| Error::Data(format!("timestep {i} has no discretized action")))?;
            Ok(q.get(model.assign(&s.features.dense()?), a))
        })
        .collect()
}

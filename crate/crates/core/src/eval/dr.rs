use alloc::string::String;
use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::baseline::ClusterModel;
use crate::cohort::{Cohort, PatientTrajectory};
use crate::math::sqrt;
use crate::matrix::{dot, Matrix};
use crate::{Error, Result, N_ACTIONS};

use super::calibration::CalibrationCurve;
use super::policy::{BehaviorPolicy, EvaluationPolicy};

/// What the doubly-robust recursion needs from one logged timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct DrStep {
    /// Model estimate `Q̂(s_t, ·)`.
    pub q_hat: Vec<f64>,
    /// Evaluation-policy probabilities `π_e(· | s_t)`.
    pub pi_e: Vec<f64>,
    /// Behavior probability of the logged action.
    pub pi_b: f64,
    pub action: usize,
    pub reward: f64,
}

/// Backward doubly-robust recursion over one trajectory:
/// `V(t) = V̂(s_t) + ρ_t (r_t + γ V(t+1) - Q̂(s_t, a_t))` with `V(T+1) = 0`.
pub fn dr_value(steps: &[DrStep], gamma: f64) -> Result<f64> {
    let mut v = 0.0;
    for (t, step) in steps.iter().enumerate().rev() {
        if step.q_hat.len() != step.pi_e.len() || step.action >= step.q_hat.len() {
            return Err(Error::Structural(format!(
                "step {t}: {} Q-values, {} probabilities, action {}",
                step.q_hat.len(),
                step.pi_e.len(),
                step.action
            )));
        }
        if !(step.pi_b > 0.0) {
            return Err(Error::Evaluation(format!(
                "step {t}: behavior probability {} for logged action {}",
                step.pi_b, step.action
            )));
        }
        let rho = step.pi_e[step.action] / step.pi_b;
        let v_hat = dot(&step.pi_e, &step.q_hat);
        v = v_hat + rho * (step.reward + gamma * v - step.q_hat[step.action]);
    }
    Ok(v)
}

/// Per-trajectory estimates with their mean and standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrEstimate {
    pub per_trajectory: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
}

impl DrEstimate {
    pub fn from_values(per_trajectory: Vec<f64>) -> Result<Self> {
        let n = per_trajectory.len();
        if n == 0 {
            return Err(Error::Evaluation(String::from("no trajectories to average")));
        }
        let mean = per_trajectory.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = per_trajectory.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            sqrt(var / n as f64)
        } else {
            0.0
        };
        Ok(Self {
            per_trajectory,
            mean,
            std_error,
        })
    }

    /// Unbiased sample variance of the per-trajectory values.
    pub fn variance(&self) -> f64 {
        let n = self.per_trajectory.len() as f64;
        self.std_error * self.std_error * n
    }
}

/// Builds the recursion inputs for one cohort trajectory. `q_hat` holds one
/// row per timestep and is clipped to `[-r_max, r_max]`.
pub fn trajectory_steps(
    traj: &PatientTrajectory,
    q_hat: &Matrix,
    model: &ClusterModel,
    pi_e: &EvaluationPolicy,
    pi_b: &BehaviorPolicy,
    r_max: f64,
) -> Result<Vec<DrStep>> {
    if q_hat.rows() != traj.len() || q_hat.cols() != N_ACTIONS {
        return Err(Error::Structural(format!(
            "Q̂ is {}x{} for a trajectory of {} steps",
            q_hat.rows(),
            q_hat.cols(),
            traj.len()
        )));
    }
    traj.steps
        .iter()
        .zip(q_hat.iter_rows())
        .map(|(step, q)| {
            let action = step.action_index()?;
            let cluster = model.assign(&step.features.dense()?);
            let q_hat: Vec<f64> = q.iter().map(|v| v.clamp(-r_max, r_max)).collect();
            Ok(DrStep {
                pi_e: pi_e.probs(&q_hat),
                q_hat,
                pi_b: pi_b.prob(cluster, action),
                action,
                reward: step.reward,
            })
        })
        .collect()
}

/// Doubly-robust value of a learned policy next to the logged baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub dr: DrEstimate,
    /// Calibrated mortality at the mean DR value.
    pub mortality: f64,
    pub mortality_std_error: f64,
    /// Mean discounted return of the logged trajectories.
    pub physician_return: f64,
}

/// `q_hat` holds the learned Q-values for every test timestep, trajectories
/// concatenated in cohort order.
pub fn evaluate_policy(
    test: &Cohort,
    q_hat: &Matrix,
    model: &ClusterModel,
    pi_e: &EvaluationPolicy,
    pi_b: &BehaviorPolicy,
    curve: &CalibrationCurve,
    gamma: f64,
) -> Result<PolicyEvaluation> {
    if q_hat.rows() != test.n_timesteps() {
        return Err(Error::Structural(format!(
            "Q̂ has {} rows for {} test timesteps",
            q_hat.rows(),
            test.n_timesteps()
        )));
    }
    if pi_b.n_clusters() != model.k() {
        return Err(Error::Structural(format!(
            "behavior policy covers {} clusters, model has {}",
            pi_b.n_clusters(),
            model.k()
        )));
    }
    let mut values = Vec::with_capacity(test.len());
    let mut offset = 0;
    for traj in &test.trajectories {
        let rows: Vec<usize> = (offset..offset + traj.len()).collect();
        offset += traj.len();
        let steps = trajectory_steps(traj, &q_hat.select_rows(&rows), model, pi_e, pi_b, curve.r_max)?;
        values.push(dr_value(&steps, gamma)?);
    }
    let dr = DrEstimate::from_values(values)?;
    let physician_return =
        test.trajectories.iter().map(|t| t.discounted_return(gamma)).sum::<f64>() / test.len() as f64;
    Ok(PolicyEvaluation {
        mortality: curve.mortality_from_return(dr.mean),
        mortality_std_error: curve.std_error_at(dr.mean),
        physician_return,
        dr,
    })
}

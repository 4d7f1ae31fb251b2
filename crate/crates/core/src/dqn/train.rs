use alloc::string::String;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::net::{greedy_actions, DuelingQNet, DEFAULT_HIDDEN};
use super::replay::{PerBuffer, PerConfig};
use crate::cohort::PatientTrajectory;
use crate::matrix::Matrix;
use crate::nn::{AdamConfig, AdamState, Mode};
use crate::rng::seeded;
use crate::{Error, Result, DEFAULT_GAMMA, DEFAULT_R_MAX, N_ACTIONS};

/// Offline transitions stored column-wise. `next_states` rows of terminal
/// transitions are copies of the state and never read by targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transitions {
    pub states: Matrix,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub done: Vec<bool>,
}

/// A single `<s, a, r, s', done>` view.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_state: &'a [f64],
    pub done: bool,
}

impl Transitions {
    /// Pairs each timestep with the next one of the same trajectory. `states`
    /// holds one row per timestep in trajectory order (raw features or
    /// latent codes).
    pub fn from_trajectories(trajs: &[PatientTrajectory], states: &Matrix) -> Result<Self> {
        let n: usize = trajs.iter().map(|t| t.len()).sum();
        if states.rows() != n {
            return Err(Error::Structural(format!(
                "{} state rows for {n} timesteps",
                states.rows()
            )));
        }
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut done = Vec::with_capacity(n);
        let mut next_rows = Vec::with_capacity(n);
        let mut offset = 0;
        for t in trajs {
            for (i, s) in t.steps.iter().enumerate() {
                actions.push(s.action_index().map_err(|_| {
                    Error::Data(format!("patient {} step {i} has no discretized action", t.patient_id))
                })?);
                rewards.push(s.reward);
                let last = i + 1 == t.steps.len();
                done.push(last);
                next_rows.push(if last { offset + i } else { offset + i + 1 });
            }
            offset += t.len();
        }
        Ok(Self {
            states: states.clone(),
            actions,
            rewards,
            next_states: states.select_rows(&next_rows),
            done,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> Transition<'_> {
        Transition {
            state: self.states.row(i),
            action: self.actions[i],
            reward: self.rewards[i],
            next_state: self.next_states.row(i),
            done: self.done[i],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.rewards.len() != n
            || self.done.len() != n
            || self.states.rows() != n
            || self.next_states.rows() != n
            || self.states.cols() != self.next_states.cols()
        {
            return Err(Error::Structural(String::from("transition columns disagree in length")));
        }
        if let Some(a) = self.actions.iter().find(|&&a| a >= N_ACTIONS) {
            return Err(Error::Data(format!("action index {a} outside 0..{N_ACTIONS}")));
        }
        if !self.states.is_finite() || !self.next_states.is_finite() || self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Data(String::from("transitions contain non-finite values")));
        }
        Ok(())
    }

    fn select(&self, indices: &[usize]) -> Self {
        Self {
            states: self.states.select_rows(indices),
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            rewards: indices.iter().map(|&i| self.rewards[i]).collect(),
            next_states: self.next_states.select_rows(indices),
            done: indices.iter().map(|&i| self.done[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub r_max: f64,
    pub batch_size: usize,
    pub target_update_period: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub per: PerConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            lambda: 5.0,
            r_max: DEFAULT_R_MAX,
            batch_size: 32,
            target_update_period: 1000,
            total_steps: 20_000,
            seed: 0,
            learning_rate: 1e-4,
            hidden: DEFAULT_HIDDEN.to_vec(),
            per: PerConfig::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::Config(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if self.target_update_period == 0 {
            return Err(Error::Config(String::from("target_update_period must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        self.per.validate()
    }
}

/// Double-DQN targets: the main net picks `a* = argmax Q_main(s', .)`, the
/// target net scores it, and that score is clipped to `±r_max`. Terminal
/// transitions use `r` alone. Both nets run in eval mode.
pub fn double_targets(
    main: &DuelingQNet,
    target: &DuelingQNet,
    rewards: &[f64],
    next_states: &Matrix,
    done: &[bool],
    cfg: &DqnConfig,
) -> Result<Vec<f64>> {
    let best = greedy_actions(&main.q_values(next_states)?);
    let scores = target.q_values(next_states)?;
    Ok((0..rewards.len())
        .map(|i| {
            if done[i] {
                rewards[i]
            } else {
                rewards[i] + cfg.gamma * scores[(i, best[i])].clamp(-cfg.r_max, cfg.r_max)
            }
        })
        .collect())
}

pub fn compute_double_target(
    main: &DuelingQNet,
    target: &DuelingQNet,
    t: &Transition<'_>,
    cfg: &DqnConfig,
) -> Result<f64> {
    if t.done {
        return Ok(t.reward);
    }
    let next = Matrix::from_vec(1, t.next_state.len(), t.next_state.to_vec())?;
    Ok(double_targets(main, target, &[t.reward], &next, &[false], cfg)?[0])
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub abs_td: Vec<f64>,
    /// Derivative of `loss` with respect to each `q_i`.
    pub grad: Vec<f64>,
}

/// `mean_i w_i (t_i - q_i)^2 + lambda * mean_i max(|q_i| - r_max, 0)`.
pub fn loss(q: &[f64], targets: &[f64], weights: &[f64], cfg: &DqnConfig) -> Result<LossOutput> {
    if q.len() != targets.len() || q.len() != weights.len() {
        return Err(Error::Structural(format!(
            "loss inputs have lengths {}, {}, {}",
            q.len(),
            targets.len(),
            weights.len()
        )));
    }
    let n = q.len().max(1) as f64;
    let mut total = 0.0;
    let mut abs_td = Vec::with_capacity(q.len());
    let mut grad = Vec::with_capacity(q.len());
    for ((&qi, &ti), &wi) in q.iter().zip(targets).zip(weights) {
        let td = ti - qi;
        let excess = qi.abs() - cfg.r_max;
        total += wi * td * td + cfg.lambda * excess.max(0.0);
        abs_td.push(td.abs());
        let penalty = if excess > 0.0 { cfg.lambda * qi.signum() } else { 0.0 };
        grad.push((-2.0 * wi * td + penalty) / n);
    }
    Ok(LossOutput {
        loss: total / n,
        abs_td,
        grad,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnLogRow {
    pub step: usize,
    pub loss: f64,
    pub mean_q: f64,
    pub mean_abs_td: f64,
    pub beta: f64,
}

/// Everything that evolves during training, so a run can be resumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnState {
    pub main: DuelingQNet,
    pub target: DuelingQNet,
    pub optimizer: AdamState,
    pub buffer: PerBuffer,
    pub step: usize,
}

pub fn init_dqn(input_width: usize, n_transitions: usize, cfg: &DqnConfig) -> Result<DqnState> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let main = DuelingQNet::new(input_width, &cfg.hidden, &mut rng)?;
    let optimizer = AdamState::for_params(AdamConfig::with_lr(cfg.learning_rate), &main.params());
    Ok(DqnState {
        target: main.clone(),
        main,
        optimizer,
        buffer: PerBuffer::filled(n_transitions, cfg.per)?,
        step: 0,
    })
}

/// Runs steps until `min(stop_at, cfg.total_steps)`. Step `k` (1-based)
/// draws its batch from a generator seeded by `(seed, k)`, so resumed runs
/// replay the same stream. The target net is refreshed after every step
/// whose number is a multiple of `target_update_period`.
pub fn run_dqn(
    state: &mut DqnState,
    data: &Transitions,
    cfg: &DqnConfig,
    stop_at: usize,
) -> Result<Vec<DqnLogRow>> {
    cfg.validate()?;
    data.validate()?;
    if data.is_empty() {
        return Err(Error::Data(String::from("no transitions to train on")));
    }
    if data.states.cols() != state.main.input_width() {
        return Err(Error::Structural(format!(
            "network expects width {} but states have width {}",
            state.main.input_width(),
            data.states.cols()
        )));
    }
    let end = stop_at.min(cfg.total_steps);
    let mut log = Vec::with_capacity(end.saturating_sub(state.step));
    while state.step < end {
        let step = state.step + 1;
        let mut rng = seeded(crate::rng::derive_seed(cfg.seed, step as u64));
        let beta = cfg.per.beta(state.step, cfg.total_steps);
        let sample = state.buffer.sample(cfg.batch_size, beta, &mut rng)?;
        let batch = data.select(&sample.indices);
        let targets = double_targets(
            &state.main,
            &state.target,
            &batch.rewards,
            &batch.next_states,
            &batch.done,
            cfg,
        )?;
        let trace = state.main.forward(&batch.states, Mode::Train)?;
        let q: Vec<f64> = (0..batch.len())
            .map(|i| trace.q()[(i, batch.actions[i])])
            .collect();
        let out = loss(&q, &targets, &sample.weights, cfg)?;
        let mean_q = q.iter().sum::<f64>() / q.len() as f64;
        if !out.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss {} at step {step}: mean Q {mean_q}, mean target {}, beta {beta}",
                out.loss,
                targets.iter().sum::<f64>() / targets.len() as f64
            )));
        }
        let mut upstream = Matrix::zeros(batch.len(), N_ACTIONS);
        for (i, &g) in out.grad.iter().enumerate() {
            upstream[(i, batch.actions[i])] = g;
        }
        let grads = state.main.backward(&trace, &upstream)?;
        state.optimizer.step(state.main.params_mut(), &grads)?;
        state.main.commit(&trace);
        state.buffer.update(&sample.indices, &out.abs_td)?;
        if step.is_multiple_of(cfg.target_update_period) {
            state.target = state.main.clone();
        }
        state.step = step;
        log.push(DqnLogRow {
            step,
            loss: out.loss,
            mean_q,
            mean_abs_td: out.abs_td.iter().sum::<f64>() / out.abs_td.len() as f64,
            beta,
        });
    }
    Ok(log)
}

/// Initializes and trains for `cfg.total_steps` steps.
pub fn train_dqn(data: &Transitions, cfg: &DqnConfig) -> Result<(DuelingQNet, Vec<DqnLogRow>)> {
    let mut state = init_dqn(data.states.cols(), data.len(), cfg)?;
    let log = run_dqn(&mut state, data, cfg, cfg.total_steps)?;
    Ok((state.main, log))
}

/// Exact value iteration on a tabular MDP given as `p[s][a] = [(prob, s', r,
/// done)]`; returns `(Q, greedy policy)`.
pub fn value_iteration(
    p: &[Vec<Vec<(f64, usize, f64, bool)>>],
    gamma: f64,
    tolerance: f64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = p.len();
    let mut q: Vec<Vec<f64>> = p.iter().map(|row| vec![0.0; row.len()]).collect();
    loop {
        let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        for s in 0..n {
            for a in 0..p[s].len() {
                let new: f64 = p[s][a]
                    .iter()
                    .map(|&(prob, s2, r, done)| prob * (r + if done { 0.0 } else { gamma * v[s2] }))
                    .sum();
                delta = delta.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if delta < tolerance {
            break;
        }
    }
    let policy = q.iter().map(|row| crate::matrix::argmax(row)).collect();
    (q, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_support::cohort_with;
    use crate::cohort::{DiscreteAction, Outcome};
    use crate::nn::Dense;

    fn cfg() -> DqnConfig {
        DqnConfig {
            hidden: vec![8, 8],
            total_steps: 30,
            target_update_period: 7,
            batch_size: 4,
            ..Default::default()
        }
    }

    fn toy_transitions() -> Transitions {
        let mut c = cohort_with(&[(3, Outcome::Died), (4, Outcome::Survived), (2, Outcome::Survived)]);
        c.assign_rewards(15.0);
        for (i, s) in c.trajectories.iter_mut().flat_map(|t| &mut t.steps).enumerate() {
            s.action = Some(DiscreteAction::from_index((7 * i) % N_ACTIONS).unwrap());
        }
        let states = Matrix::from_vec(
            9,
            2,
            (0..18).map(|k| ((k * 37) % 11) as f64 / 11.0 - 0.5).collect(),
        )
        .unwrap();
        Transitions::from_trajectories(&c.trajectories, &states).unwrap()
    }

    /// A net whose Q-values are `scale * x_0 * e_k` plus `offset` for a
    /// chosen column pattern, built from an identity trunk without batch
    /// norm.
    fn linear_net(weights: &[f64], bias: f64) -> DuelingQNet {
        use crate::nn::{Layer, Network};
        let trunk = Network::from_layers(2, vec![Layer::Dense(Dense::identity(2))]).unwrap();
        let mut advantage = Dense::identity(1);
        advantage.weights = Matrix::from_vec(N_ACTIONS, 1, weights.to_vec()).unwrap();
        advantage.biases = vec![0.0; N_ACTIONS];
        let mut value = Dense::identity(1);
        value.biases = vec![bias];
        value.weights = Matrix::zeros(1, 1);
        DuelingQNet::from_parts(trunk, advantage, value).unwrap()
    }

    #[test]
    fn transitions_follow_trajectories() {
        let t = toy_transitions();
        assert_eq!(t.len(), 9);
        assert_eq!(t.done, vec![false, false, true, false, false, false, true, false, true]);
        assert_eq!(t.next_states.row(0), t.states.row(1));
        assert_eq!(t.next_states.row(3), t.states.row(4));
        assert_eq!(t.rewards[2], -15.0);
        assert_eq!(t.rewards[6], 15.0);
    }

    #[test]
    fn terminal_target_is_reward() {
        let net = DuelingQNet::new(2, &[4], &mut seeded(1)).unwrap();
        let t = Transition { state: &[0.0, 0.0], action: 0, reward: 15.0, next_state: &[9.0, 9.0], done: true };
        assert_eq!(compute_double_target(&net, &net, &t, &DqnConfig::default()).unwrap(), 15.0);
    }

    #[test]
    fn target_net_output_is_clipped() {
        // Q(s', a) = 20 for every a once mean advantage cancels
        let main = linear_net(&[0.0; N_ACTIONS], 20.0);
        let t = Transition { state: &[0.0, 0.0], action: 0, reward: 0.0, next_state: &[1.0, 1.0], done: false };
        let target = compute_double_target(&main, &main, &t, &DqnConfig::default()).unwrap();
        assert!((target - 0.99 * 15.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_from_main_value_from_target() {
        // main prefers action 3, target prefers action 5
        let mut wm = [0.0; N_ACTIONS];
        wm[3] = 1.0;
        let mut wt = [0.0; N_ACTIONS];
        wt[5] = 2.0;
        wt[3] = 0.5;
        let (main, target) = (linear_net(&wm, 0.0), linear_net(&wt, 1.0));
        let x = 2.0;
        let t = Transition { state: &[0.0, 0.0], action: 0, reward: 1.0, next_state: &[x, 0.0], done: false };
        let mean_adv = (2.0 + 0.5) * x / 25.0;
        let expected = 1.0 + 0.5 * (1.0 + 0.5 * x - mean_adv);
        let cfg = DqnConfig { gamma: 0.5, ..Default::default() };
        let got = compute_double_target(&main, &target, &t, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn loss_examples() {
        let c = DqnConfig { lambda: 1.0, ..Default::default() };
        let out = loss(&[3.0, -4.0], &[3.0, -4.0], &[1.0, 1.0], &c).unwrap();
        assert_eq!(out.loss, 0.0);
        let out = loss(&[16.0], &[16.0], &[1.0], &c).unwrap();
        assert_eq!(out.loss, 1.0);
        let c0 = DqnConfig { lambda: 0.0, ..Default::default() };
        assert_eq!(loss(&[100.0, -3.0], &[0.0, 5.0], &[0.0, 0.0], &c0).unwrap().loss, 0.0);
        let out = loss(&[1.0, 17.0], &[2.0, 15.0], &[0.5, 1.0], &c).unwrap();
        assert_eq!(out.abs_td, vec![1.0, 2.0]);
        // d/dq of (0.5 (2-1)^2 + (15-17)^2 + 2) / 2
        assert_eq!(out.grad, vec![-0.5, (4.0 + 1.0) / 2.0]);
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let data = toy_transitions();
        let c = DqnConfig { total_steps: 0, ..cfg() };
        let (net, log) = train_dqn(&data, &c).unwrap();
        assert!(log.is_empty());
        let init = init_dqn(2, data.len(), &c).unwrap();
        assert_eq!(net, init.main);
    }

    #[test]
    fn deterministic_and_resumable() {
        let data = toy_transitions();
        let (a, log_a) = train_dqn(&data, &cfg()).unwrap();
        let (b, log_b) = train_dqn(&data, &cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        let mut state = init_dqn(2, data.len(), &cfg()).unwrap();
        let mut log = run_dqn(&mut state, &data, &cfg(), 11).unwrap();
        log.extend(run_dqn(&mut state, &data, &cfg(), usize::MAX).unwrap());
        assert_eq!(log, log_a);
        assert_eq!(state.main, a);
    }

    #[test]
    fn target_refreshes_only_on_schedule() {
        let data = toy_transitions();
        let c = cfg();
        let mut state = init_dqn(2, data.len(), &c).unwrap();
        for step in 1..=c.total_steps {
            let before = state.target.clone();
            run_dqn(&mut state, &data, &c, step).unwrap();
            if step.is_multiple_of(c.target_update_period) {
                assert_eq!(state.target, state.main);
            } else {
                assert_eq!(state.target, before);
            }
        }
    }

    #[test]
    fn targets_bounded() {
        let data = toy_transitions();
        let (net, _) = train_dqn(&data, &cfg()).unwrap();
        let c = cfg();
        let t = double_targets(&net, &net, &data.rewards, &data.next_states, &data.done, &c).unwrap();
        for (i, v) in t.iter().enumerate() {
            let bound = if data.rewards[i] == 0.0 { c.gamma * c.r_max } else { c.r_max * (1.0 + c.gamma) };
            assert!(v.abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn value_iteration_two_states() {
        // state 0: action 1 ends with +1, action 0 moves to state 1; state 1:
        // action 0 ends with +10
        let p = vec![
            vec![vec![(1.0, 1, 0.0, false)], vec![(1.0, 0, 1.0, true)]],
            vec![vec![(1.0, 0, 10.0, true)], vec![(1.0, 1, 0.0, true)]],
        ];
        let (q, pi) = value_iteration(&p, 0.9, 1e-12);
        assert_eq!(pi, vec![0, 0]);
        assert!((q[0][0] - 9.0).abs() < 1e-9);
    }
}

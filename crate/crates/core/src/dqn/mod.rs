//! Dueling double DQN with prioritized replay over offline transitions.

mod net;
mod replay;
mod train;

pub use net::{extract_policy, greedy_actions, DuelingQNet, QTrace, DEFAULT_HIDDEN};
pub use replay::{PerBuffer, PerConfig, PerSample, SumTree};
pub use train::{
    compute_double_target, double_targets, init_dqn, loss, run_dqn, train_dqn, value_iteration,
    DqnConfig, DqnLogRow, DqnState, LossOutput, Transition, Transitions,
};

//! State clustering and tabular SARSA estimate of the logged policy's values.

mod kmeans;
mod sarsa;

pub use kmeans::{
    assign_cluster, fit_kmeans, fit_kmeans_with, ClusterModel, KMeansReport, DEFAULT_CLUSTERS,
    MAX_ITERATIONS, SHIFT_TOLERANCE,
};
pub use sarsa::{
    logged_q_values, physician_value, sarsa_transitions, train_sarsa, train_sarsa_transitions,
    QTable, SarsaConfig, SarsaEpoch, SarsaTransition, StepSize,
};

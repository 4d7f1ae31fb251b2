//! Off-policy evaluation and the analyses built on it.
//!
//! The calibration curve maps an expected return to observed mortality. The
//! doubly-robust estimator scores a learned policy on logged trajectories
//! using cluster-conditional behavior probabilities for the importance
//! ratios, and the histogram and PCA helpers produce plain tables.
mod calibration;
mod dr;
mod histograms;
mod pca;
mod policy;

pub use calibration::{
    build_calibration, mortality_from_return, CalibrationBin, CalibrationCurve, DEFAULT_CALIBRATION_BINS,
    DEFAULT_MERGE_THRESHOLD,
};
pub use dr::{dr_value, evaluate_policy, trajectory_steps, DrEstimate, DrStep, PolicyEvaluation};
pub use histograms::{action_histogram, dosage_diff_mortality, ActionHistogram, DiffBin, DosageDiff, Drug, MAX_DIFF};
pub use pca::{latent_pca_export, PcaExport, PcaPoint};
pub use policy::{estimate_behavior_policy, BehaviorPolicy, EvaluationPolicy, DEFAULT_EPSILON_SOFT, DEFAULT_SMOOTHING};

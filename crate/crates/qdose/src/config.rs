//! Run configuration: one TOML file, every field defaulted, unknown keys
//! rejected. Command-line `--set path.to.key=value` overrides are applied
//! on top of the parsed file before validation.

use std::path::{Path, PathBuf};

use qdose_core::autoencoder::SparseAeConfig;
use qdose_core::baseline::{SarsaConfig, MAX_ITERATIONS};
use qdose_core::cohort::{SyntheticCohortConfig, DEFAULT_IMPUTE_K};
use qdose_core::dqn::DqnConfig;
use qdose_core::eval::{DEFAULT_CALIBRATION_BINS, DEFAULT_EPSILON_SOFT, DEFAULT_MERGE_THRESHOLD, DEFAULT_SMOOTHING};
use qdose_core::rng::derive_seed;
use qdose_core::DEFAULT_R_MAX;
use serde::{Deserialize, Serialize};

use crate::error::{QdoseError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub test_fraction: f64,
    pub impute_k: usize,
    pub r_max: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            impute_k: DEFAULT_IMPUTE_K,
            r_max: DEFAULT_R_MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub n_clusters: usize,
    pub max_iterations: usize,
    pub sarsa: SarsaConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            n_clusters: 100,
            max_iterations: MAX_ITERATIONS,
            sarsa: SarsaConfig::default(),
        }
    }
}

/// Which split the doubly-robust estimates average over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Test,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub smoothing: f64,
    pub epsilon_soft: f64,
    pub calibration_bins: usize,
    pub merge_threshold: usize,
    pub split: EvalSplit,
    /// Dose-difference bins with fewer timesteps are ignored when locating
    /// the lowest-mortality difference.
    pub min_diff_count: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            smoothing: DEFAULT_SMOOTHING,
            epsilon_soft: DEFAULT_EPSILON_SOFT,
            calibration_bins: DEFAULT_CALIBRATION_BINS,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            split: EvalSplit::Test,
            min_diff_count: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every stage seed derives from it.
    pub seed: u64,
    pub run_dir: PathBuf,
    /// Trajectory file to preprocess instead of the generated cohort.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub cohort: SyntheticCohortConfig,
    pub preprocess: PreprocessConfig,
    pub baseline: BaselineConfig,
    pub autoencoder: SparseAeConfig,
    pub dqn: DqnConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            run_dir: PathBuf::from("run"),
            input: None,
            cohort: SyntheticCohortConfig::default(),
            preprocess: PreprocessConfig::default(),
            baseline: BaselineConfig::default(),
            autoencoder: SparseAeConfig::default(),
            dqn: DqnConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

/// Randomized steps of the pipeline, each with its own seed stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStream {
    Generate,
    Split,
    Cluster,
    Sarsa,
    Autoencoder,
    DqnRaw,
    DqnLatent,
}

impl SeedStream {
    pub const ALL: [SeedStream; 7] = [
        SeedStream::Generate,
        SeedStream::Split,
        SeedStream::Cluster,
        SeedStream::Sarsa,
        SeedStream::Autoencoder,
        SeedStream::DqnRaw,
        SeedStream::DqnLatent,
    ];

    fn offset(self) -> u64 {
        self as u64 + 1
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QdoseError::io(path, e))?;
        toml::from_str(&text).map_err(|e| QdoseError::format(path, e))
    }

    /// Loads `path` (or the defaults), applies `key=value` overrides and
    /// validates the result.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let cfg = base.with_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Each override is `dotted.key=value`; the value is read as a TOML
    /// literal and falls back to a bare string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = toml::Value::try_from(self).map_err(|e| QdoseError::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| QdoseError::Config(format!("override `{item}` is not of the form key=value")))?;
            let value = parse_literal(raw.trim());
            set_path(&mut tree, key.trim(), value)?;
        }
        tree.try_into().map_err(|e: toml::de::Error| QdoseError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let nested = [
            ("cohort.seed", self.cohort.seed, SyntheticCohortConfig::default().seed),
            ("baseline.sarsa.seed", self.baseline.sarsa.seed, SarsaConfig::default().seed),
            ("autoencoder.seed", self.autoencoder.seed, SparseAeConfig::default().seed),
            ("dqn.seed", self.dqn.seed, DqnConfig::default().seed),
        ];
        for (name, value, default) in nested {
            if value != default {
                return Err(QdoseError::Config(format!(
                    "{name} is derived from the top-level `seed`; set that instead"
                )));
            }
        }
        if self.baseline.sarsa.gamma != self.dqn.gamma {
            return Err(QdoseError::Config(format!(
                "baseline.sarsa.gamma ({}) and dqn.gamma ({}) must match",
                self.baseline.sarsa.gamma, self.dqn.gamma
            )));
        }
        let p = &self.preprocess;
        if p.r_max != self.dqn.r_max {
            return Err(QdoseError::Config(format!(
                "preprocess.r_max ({}) and dqn.r_max ({}) must match",
                p.r_max, self.dqn.r_max
            )));
        }
        if !(p.test_fraction > 0.0 && p.test_fraction < 1.0) {
            return Err(QdoseError::Config(format!(
                "preprocess.test_fraction must lie in (0, 1), got {}",
                p.test_fraction
            )));
        }
        if p.impute_k == 0 || !(p.r_max > 0.0) {
            return Err(QdoseError::Config(String::from(
                "preprocess.impute_k and preprocess.r_max must be positive",
            )));
        }
        if self.baseline.n_clusters == 0 || self.baseline.max_iterations == 0 {
            return Err(QdoseError::Config(String::from(
                "baseline.n_clusters and baseline.max_iterations must be positive",
            )));
        }
        let e = &self.evaluation;
        if !(e.smoothing > 0.0) || !(e.epsilon_soft > 0.0 && e.epsilon_soft < 1.0) || e.calibration_bins == 0 {
            return Err(QdoseError::Config(String::from(
                "evaluation needs smoothing > 0, epsilon_soft in (0, 1) and calibration_bins >= 1",
            )));
        }
        self.cohort.validate()?;
        self.synthetic().validate()?;
        self.sarsa().validate()?;
        self.autoencoder_config().validate()?;
        self.dqn_config(SeedStream::DqnRaw).validate()?;
        Ok(())
    }

    pub fn seed_for(&self, stream: SeedStream) -> u64 {
        derive_seed(self.seed, stream.offset())
    }

    pub fn synthetic(&self) -> SyntheticCohortConfig {
        SyntheticCohortConfig {
            seed: self.seed_for(SeedStream::Generate),
            ..self.cohort.clone()
        }
    }

    pub fn sarsa(&self) -> SarsaConfig {
        SarsaConfig {
            seed: self.seed_for(SeedStream::Sarsa),
            ..self.baseline.sarsa.clone()
        }
    }

    pub fn autoencoder_config(&self) -> SparseAeConfig {
        SparseAeConfig {
            seed: self.seed_for(SeedStream::Autoencoder),
            ..self.autoencoder.clone()
        }
    }

    pub fn dqn_config(&self, stream: SeedStream) -> DqnConfig {
        DqnConfig {
            seed: self.seed_for(stream),
            ..self.dqn.clone()
        }
    }

    /// Discount shared by the baseline, the DQN and the evaluation.
    pub fn gamma(&self) -> f64 {
        self.dqn.gamma
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serializes")
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(tree: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| QdoseError::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(QdoseError::Config(format!("empty override key in `{key}`")))
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::features::FEATURES;
use super::Cohort;
use crate::math::sqrt;
use crate::{Error, Result, N_FEATURES};

/// Per-feature clinical limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            min: FEATURES.iter().map(|f| f.cap_min).collect(),
            max: FEATURES.iter().map(|f| f.cap_max).collect(),
        }
    }
}

impl Caps {
    pub fn validate(&self) -> Result<()> {
        if self.min.len() != N_FEATURES || self.max.len() != N_FEATURES {
            return Err(Error::Config(format!(
                "caps must list {N_FEATURES} features, got {} minima and {} maxima",
                self.min.len(),
                self.max.len()
            )));
        }
        for (i, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Config(format!(
                    "cap for feature {i} ({}) is [{lo}, {hi}]",
                    super::features::feature_name(i)
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, feature: usize, value: f64) -> f64 {
        value.max(self.min[feature]).min(self.max[feature])
    }
}

/// Training-split mean and (population) standard deviation per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Clamps every present value into its cap interval.
pub fn cap_values(cohort: &mut Cohort) -> Result<()> {
    cohort.caps.validate()?;
    let caps = cohort.caps.clone();
    for t in &mut cohort.trajectories {
        for s in &mut t.steps {
            for (j, v) in s.features.values_mut().iter_mut().enumerate() {
                if let Some(x) = v {
                    *x = caps.clamp(j, *x);
                }
            }
        }
    }
    Ok(())
}

/// Statistics of the capped training features, summed in timestep order.
pub fn fit_norm_stats(train: &Cohort) -> Result<NormStats> {
    train.caps.validate()?;
    if train.n_timesteps() == 0 {
        return Err(Error::Fit(String::from("cannot fit normalization on an empty cohort")));
    }
    let n = train.n_timesteps() as f64;
    let mut mean = vec![0.0; N_FEATURES];
    for s in train.timesteps() {
        for (j, x) in s.features.dense()?.into_iter().enumerate() {
            mean[j] += train.caps.clamp(j, x);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; N_FEATURES];
    for s in train.timesteps() {
        for (j, x) in s.features.dense()?.into_iter().enumerate() {
            let d = train.caps.clamp(j, x) - mean[j];
            var[j] += d * d;
        }
    }
    let std = var.into_iter().map(|v| sqrt(v / n)).collect();
    Ok(NormStats { mean, std })
}

/// Caps each value, then standardizes it with the given training
/// statistics. Zero-variance features map to 0.
pub fn cap_and_normalize(mut cohort: Cohort, stats: &NormStats) -> Result<Cohort> {
    if cohort.norm_stats.is_some() {
        return Err(Error::Usage(String::from("cohort is already normalized")));
    }
    if stats.mean.len() != N_FEATURES || stats.std.len() != N_FEATURES {
        return Err(Error::Structural(format!(
            "normalization statistics cover {} features, expected {N_FEATURES}",
            stats.mean.len()
        )));
    }
    cohort.caps.validate()?;
    for t in &mut cohort.trajectories {
        for s in &mut t.steps {
            if !s.features.is_complete() {
                s.features.dense()?;
            }
            for (j, v) in s.features.values_mut().iter_mut().enumerate() {
                let x = cohort.caps.clamp(j, v.expect("checked complete"));
                *v = Some(if stats.std[j] > 0.0 {
                    (x - stats.mean[j]) / stats.std[j]
                } else {
                    0.0
                });
            }
        }
    }
    cohort.norm_stats = Some(stats.clone());
    Ok(cohort)
}

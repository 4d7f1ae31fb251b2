use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, DiscreteAction};
use crate::{Error, Result, N_BINS};

/// Counts indexed `[iv_bin][vp_bin]`.
pub type ActionHistogram = [[u64; N_BINS]; N_BINS];

/// Largest dose-bin difference in either direction.
pub const MAX_DIFF: i8 = (N_BINS - 1) as i8;

pub fn action_histogram(actions: &[DiscreteAction]) -> ActionHistogram {
    let mut hist = [[0; N_BINS]; N_BINS];
    for a in actions {
        hist[a.iv_bin as usize][a.vp_bin as usize] += 1;
    }
    hist
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Drug {
    Iv,
    Vasopressor,
}

/// Timesteps whose recommended bin minus logged bin equals `diff`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffBin {
    pub diff: i8,
    pub count: u64,
    pub deaths: u64,
}

impl DiffBin {
    pub fn mortality(&self) -> Option<f64> {
        (self.count > 0).then(|| self.deaths as f64 / self.count as f64)
    }
}

/// Mortality against dose difference, `-4..=4`, for each drug.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosageDiff {
    pub iv: Vec<DiffBin>,
    pub vasopressor: Vec<DiffBin>,
}

impl DosageDiff {
    pub fn bins(&self, drug: Drug) -> &[DiffBin] {
        match drug {
            Drug::Iv => &self.iv,
            Drug::Vasopressor => &self.vasopressor,
        }
    }

    /// Difference with the lowest mortality among bins holding at least
    /// `min_count` timesteps; ties go to the smaller absolute difference.
    pub fn min_mortality_diff(&self, drug: Drug, min_count: u64) -> Option<i8> {
        self.bins(drug)
            .iter()
            .filter(|b| b.count >= min_count.max(1))
            .min_by(|a, b| {
                let (ma, mb) = (a.mortality().unwrap_or(1.0), b.mortality().unwrap_or(1.0));
                ma.total_cmp(&mb).then(a.diff.abs().cmp(&b.diff.abs())).then(a.diff.cmp(&b.diff))
            })
            .map(|b| b.diff)
    }
}

/// `recommended` holds one action per test timestep, trajectories
/// concatenated in cohort order.
pub fn dosage_diff_mortality(recommended: &[DiscreteAction], test: &Cohort) -> Result<DosageDiff> {
    if recommended.len() != test.n_timesteps() {
        return Err(Error::Structural(format!(
            "{} recommendations for {} test timesteps",
            recommended.len(),
            test.n_timesteps()
        )));
    }
    let empty = || -> Vec<DiffBin> {
        (-MAX_DIFF..=MAX_DIFF)
            .map(|diff| DiffBin {
                diff,
                count: 0,
                deaths: 0,
            })
            .collect()
    };
    let mut out = DosageDiff {
        iv: empty(),
        vasopressor: empty(),
    };
    let mut recs = recommended.iter();
    for traj in &test.trajectories {
        let died = u64::from(traj.outcome.died());
        for step in &traj.steps {
            let logged = step
                .action
                .ok_or_else(|| Error::Data(format!("patient {} has an undiscretized timestep", traj.patient_id)))?;
            let rec = recs.next().expect("lengths checked");
            for (bins, r, l) in [
                (&mut out.iv, rec.iv_bin, logged.iv_bin),
                (&mut out.vasopressor, rec.vp_bin, logged.vp_bin),
            ] {
                let slot = &mut bins[(r as i8 - l as i8 + MAX_DIFF) as usize];
                slot.count += 1;
                slot.deaths += died;
            }
        }
    }
    Ok(out)
}

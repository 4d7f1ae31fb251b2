use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::Cohort;
use crate::{Error, Result, N_ACTIONS, N_BINS};

/// Logged doses for one window: total IV volume and maximum vasopressor
/// rate. Zero means the drug was not given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDosePair {
    pub iv_volume: f64,
    pub vp_max: f64,
}

impl RawDosePair {
    pub fn new(iv_volume: f64, vp_max: f64) -> Result<Self> {
        check_dose("iv_volume", iv_volume)?;
        check_dose("vp_max", vp_max)?;
        Ok(Self { iv_volume, vp_max })
    }
}

fn check_dose(what: &str, dose: f64) -> Result<()> {
    if dose.is_nan() || dose < 0.0 || dose.is_infinite() {
        return Err(Error::Domain(format!("{what} must be a finite non-negative dose, got {dose}")));
    }
    Ok(())
}

/// One of the 25 joint actions, laid out IV-major: `index = iv * 5 + vp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteAction {
    pub iv_bin: u8,
    pub vp_bin: u8,
}

impl DiscreteAction {
    pub fn new(iv_bin: u8, vp_bin: u8) -> Result<Self> {
        if iv_bin as usize >= N_BINS || vp_bin as usize >= N_BINS {
            return Err(Error::Domain(format!("bins ({iv_bin}, {vp_bin}) outside 0..{N_BINS}")));
        }
        Ok(Self { iv_bin, vp_bin })
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= N_ACTIONS {
            return Err(Error::Domain(format!("action index {index} outside 0..{N_ACTIONS}")));
        }
        Ok(Self {
            iv_bin: (index / N_BINS) as u8,
            vp_bin: (index % N_BINS) as u8,
        })
    }

    #[inline]
    pub fn index(self) -> usize {
        self.iv_bin as usize * N_BINS + self.vp_bin as usize
    }
}

/// Quartile cut points of the non-zero training doses of each drug.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub iv_edges: [f64; 3],
    pub vp_edges: [f64; 3],
}

impl ActionSpace {
    pub fn new(iv_edges: [f64; 3], vp_edges: [f64; 3]) -> Result<Self> {
        for (what, e) in [("iv", &iv_edges), ("vp", &vp_edges)] {
            if e.iter().any(|v| !v.is_finite()) || e[0] > e[1] || e[1] > e[2] {
                return Err(Error::Fit(format!("{what} edges {e:?} are not non-decreasing")));
            }
        }
        Ok(Self { iv_edges, vp_edges })
    }

    pub fn discretize(&self, dose: RawDosePair) -> Result<DiscreteAction> {
        Ok(DiscreteAction {
            iv_bin: bin_of(dose.iv_volume, &self.iv_edges, "iv_volume")?,
            vp_bin: bin_of(dose.vp_max, &self.vp_edges, "vp_max")?,
        })
    }
}

/// Zero maps to bin 0; otherwise `1 + #{edges < dose}`, so a dose equal to
/// an edge stays in the lower bin.
fn bin_of(dose: f64, edges: &[f64; 3], what: &str) -> Result<u8> {
    check_dose(what, dose)?;
    if dose == 0.0 {
        return Ok(0);
    }
    Ok(1 + edges.iter().filter(|&&e| e < dose).count() as u8)
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn quartile_edges(mut doses: Vec<f64>, what: &str) -> Result<[f64; 3]> {
    if doses.len() < 4 {
        return Err(Error::Fit(format!(
            "{what}: need at least 4 non-zero doses to fit quartiles, found {}",
            doses.len()
        )));
    }
    doses.sort_by(f64::total_cmp);
    Ok([
        percentile(&doses, 0.25),
        percentile(&doses, 0.5),
        percentile(&doses, 0.75),
    ])
}

/// Fits per-drug quartile edges on the non-zero doses of a training cohort.
pub fn fit_action_bins(train: &Cohort) -> Result<ActionSpace> {
    let mut iv = Vec::new();
    let mut vp = Vec::new();
    for s in train.timesteps() {
        if s.raw_dose.iv_volume > 0.0 {
            iv.push(s.raw_dose.iv_volume);
        }
        if s.raw_dose.vp_max > 0.0 {
            vp.push(s.raw_dose.vp_max);
        }
    }
    ActionSpace::new(quartile_edges(iv, "IV fluids")?, quartile_edges(vp, "vasopressors")?)
}

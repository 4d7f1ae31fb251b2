use alloc::string::String;
use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::baseline::{logged_q_values, ClusterModel, QTable};
use crate::cohort::Cohort;
use crate::math::sqrt;
use crate::{Error, Result, DEFAULT_R_MAX};

pub const DEFAULT_CALIBRATION_BINS: usize = 25;
pub const DEFAULT_MERGE_THRESHOLD: usize = 50;

/// One (possibly merged) bucket of the return axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean return of the samples in the bin; the midpoint if it is empty.
    pub center: f64,
    pub count: usize,
    pub deaths: usize,
}

impl CalibrationBin {
    pub fn mortality(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.deaths as f64 / self.count as f64
        }
    }

    /// Binomial standard error of [`CalibrationBin::mortality`].
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let p = self.mortality();
        sqrt(p * (1.0 - p) / self.count as f64)
    }

    fn absorb(&mut self, other: &CalibrationBin, sum: f64) {
        self.lo = self.lo.min(other.lo);
        self.hi = self.hi.max(other.hi);
        self.count += other.count;
        self.deaths += other.deaths;
        self.center = if self.count == 0 {
            0.5 * (self.lo + self.hi)
        } else {
            sum / self.count as f64
        };
    }
}

/// Observed mortality as a function of expected return.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub r_max: f64,
    pub n_bins: usize,
    pub merge_threshold: usize,
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationCurve {
    /// Bins `(return, died)` pairs into `n_bins` equal-width buckets over
    /// `[-r_max, r_max]` (values outside clamp to the end buckets), then
    /// repeatedly merges the smallest bucket under `merge_threshold` into
    /// the adjacent bucket whose center is closer, until every bucket meets
    /// the threshold or one remains.
    pub fn from_samples(samples: &[(f64, bool)], n_bins: usize, r_max: f64, merge_threshold: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Usage(String::from("calibration needs at least one sample")));
        }
        if n_bins == 0 || !(r_max > 0.0) {
            return Err(Error::Config(String::from("calibration needs n_bins >= 1 and r_max > 0")));
        }
        if let Some((v, _)) = samples.iter().find(|(v, _)| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite return {v} in calibration samples")));
        }
        let width = 2.0 * r_max / n_bins as f64;
        let mut bins: Vec<CalibrationBin> = (0..n_bins)
            .map(|b| {
                let lo = -r_max + b as f64 * width;
                CalibrationBin {
                    lo,
                    hi: lo + width,
                    center: lo + 0.5 * width,
                    count: 0,
                    deaths: 0,
                }
            })
            .collect();
        let mut sums = alloc::vec![0.0f64; n_bins];
        for &(v, died) in samples {
            let b = (((v + r_max) / width) as isize).clamp(0, n_bins as isize - 1) as usize;
            bins[b].count += 1;
            bins[b].deaths += usize::from(died);
            sums[b] += v;
        }
        for (bin, &s) in bins.iter_mut().zip(&sums) {
            if bin.count > 0 {
                bin.center = s / bin.count as f64;
            }
        }
        while bins.len() > 1 {
            let Some(small) = (0..bins.len())
                .filter(|&i| bins[i].count < merge_threshold)
                .min_by_key(|&i| (bins[i].count, i))
            else {
                break;
            };
            let partner = match (small.checked_sub(1), (small + 1 < bins.len()).then_some(small + 1)) {
                (Some(l), Some(r)) => {
                    let dl = bins[small].center - bins[l].center;
                    let dr = bins[r].center - bins[small].center;
                    if dr < dl || (dr == dl && bins[r].count < bins[l].count) {
                        r
                    } else {
                        l
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => unreachable!("more than one bin"),
            };
            let (keep, drop) = (small.min(partner), small.max(partner));
            let sum = sums[keep] + sums[drop];
            let removed = bins.remove(drop);
            sums.remove(drop);
            bins[keep].absorb(&removed, sum);
            sums[keep] = sum;
        }
        Ok(Self {
            r_max,
            n_bins,
            merge_threshold,
            bins,
        })
    }

    /// Mortality at return `v`: linear interpolation between neighbouring
    /// bin centers, clamped to the end bins outside their centers.
    pub fn mortality_from_return(&self, v: f64) -> f64 {
        self.interpolate(v, CalibrationBin::mortality)
    }

    /// Binomial standard error at `v`, interpolated like the mortality.
    pub fn std_error_at(&self, v: f64) -> f64 {
        self.interpolate(v, CalibrationBin::std_error)
    }

    fn interpolate(&self, v: f64, f: impl Fn(&CalibrationBin) -> f64) -> f64 {
        let bins = &self.bins;
        if v <= bins[0].center {
            return f(&bins[0]);
        }
        for pair in bins.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if v <= b.center {
                let span = b.center - a.center;
                if span <= 0.0 {
                    return f(b);
                }
                let t = (v - a.center) / span;
                return (1.0 - t) * f(a) + t * f(b);
            }
        }
        f(bins.last().expect("non-empty"))
    }
}

/// Calibration of the physician's SARSA values on a labeled test cohort:
/// every timestep contributes `(Q(cluster(s), logged action), patient died)`.
pub fn build_calibration(q: &QTable, model: &ClusterModel, test: &Cohort, n_bins: usize) -> Result<CalibrationCurve> {
    if test.is_empty() {
        return Err(Error::Usage(String::from("calibration needs a non-empty test cohort")));
    }
    let values = logged_q_values(q, model, test)?;
    let labels = test
        .trajectories
        .iter()
        .flat_map(|t| core::iter::repeat_n(t.outcome.died(), t.len()));
    let samples: Vec<(f64, bool)> = values.into_iter().zip(labels).collect();
    CalibrationCurve::from_samples(&samples, n_bins, DEFAULT_R_MAX, DEFAULT_MERGE_THRESHOLD)
}

pub fn mortality_from_return(curve: &CalibrationCurve, v: f64) -> f64 {
    curve.mortality_from_return(v)
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::features::feature_name;
use super::Cohort;
use crate::math::sqrt;
use crate::{Error, Result, N_FEATURES};

pub const DEFAULT_IMPUTE_K: usize = 10;

/// Fills every missing value with the mean of that feature over the `k`
/// nearest timestep vectors observing it.
///
/// Distances use only features observed in both vectors, each scaled by its
/// cohort-wide standard deviation, and are rescaled by
/// `N_FEATURES / #shared` so partially overlapping pairs stay comparable.
/// Donor values are always original observations, so the result does not
/// depend on the order in which vectors are visited. Ties in distance go to
/// the earlier timestep.
pub fn impute_missing(mut cohort: Cohort, k: usize) -> Result<Cohort> {
    if k == 0 {
        return Err(Error::Config(String::from("imputation needs k >= 1")));
    }
    let rows: Vec<&[Option<f64>]> = cohort.timesteps().map(|s| s.features.values()).collect();
    let n = rows.len();

    let mut count = [0usize; N_FEATURES];
    let mut mean = [0.0f64; N_FEATURES];
    for r in &rows {
        for (j, v) in r.iter().enumerate() {
            if let Some(x) = v {
                count[j] += 1;
                mean[j] += x;
            }
        }
    }
    let incomplete: Vec<usize> = (0..n).filter(|&i| rows[i].iter().any(Option::is_none)).collect();
    if incomplete.is_empty() {
        return Ok(cohort);
    }
    for j in 0..N_FEATURES {
        if count[j] == 0 {
            return Err(Error::Imputation {
                index: j,
                name: feature_name(j),
                reason: String::from("feature is missing in every timestep"),
            });
        }
        mean[j] /= count[j] as f64;
    }
    let mut scale = [0.0f64; N_FEATURES];
    for r in &rows {
        for (j, v) in r.iter().enumerate() {
            if let Some(x) = v {
                scale[j] += (x - mean[j]) * (x - mean[j]);
            }
        }
    }
    for j in 0..N_FEATURES {
        let sd = sqrt(scale[j] / count[j] as f64);
        scale[j] = if sd > 0.0 { 1.0 / sd } else { 1.0 };
    }

    let mut fills: Vec<(usize, usize, f64)> = Vec::new();
    let mut dist = vec![f64::INFINITY; n];
    for &i in &incomplete {
        let query = rows[i];
        for (other, d) in rows.iter().zip(dist.iter_mut()) {
            let mut acc = 0.0;
            let mut shared = 0usize;
            for j in 0..N_FEATURES {
                if let (Some(a), Some(b)) = (query[j], other[j]) {
                    let z = (a - b) * scale[j];
                    acc += z * z;
                    shared += 1;
                }
            }
            *d = if shared == 0 {
                f64::INFINITY
            } else {
                acc * N_FEATURES as f64 / shared as f64
            };
        }
        dist[i] = f64::INFINITY;
        for j in (0..N_FEATURES).filter(|&j| query[j].is_none()) {
            let mut donors: Vec<(f64, usize)> = (0..n)
                .filter(|&m| m != i && rows[m][j].is_some())
                .map(|m| (dist[m], m))
                .collect();
            if donors.is_empty() {
                return Err(Error::Imputation {
                    index: j,
                    name: feature_name(j),
                    reason: format!("no other timestep observes it (timestep {i})"),
                });
            }
            let take = k.min(donors.len());
            let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if take < donors.len() {
                donors.select_nth_unstable_by(take - 1, by_distance);
                donors.truncate(take);
            }
            donors.sort_by(by_distance);
            let value = donors.iter().map(|&(_, m)| rows[m][j].unwrap()).sum::<f64>() / take as f64;
            fills.push((i, j, value));
        }
    }

    let mut flat_index = 0usize;
    let mut fill_iter = fills.into_iter().peekable();
    for t in &mut cohort.trajectories {
        for s in &mut t.steps {
            while let Some(&(i, j, v)) = fill_iter.peek() {
                if i != flat_index {
                    break;
                }
                s.features.values_mut()[j] = Some(v);
                fill_iter.next();
            }
            flat_index += 1;
        }
    }
    Ok(cohort)
}

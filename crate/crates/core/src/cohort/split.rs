use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use super::Cohort;
use crate::math::round;
use crate::rng::seeded;
use crate::{Error, Result};

/// Stratified split by whole patient. Survivors and non-survivors are
/// shuffled separately and `round(test_fraction * n_class)` of each go to
/// the test set. Both halves keep the original patient order.
pub fn split_cohort(cohort: &Cohort, test_fraction: f64, seed: u64) -> Result<(Cohort, Cohort)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    let (mut died, mut survived): (Vec<usize>, Vec<usize>) =
        (0..cohort.len()).partition(|&i| cohort.trajectories[i].outcome.died());
    let mut rng = seeded(seed);
    died.shuffle(&mut rng);
    survived.shuffle(&mut rng);
    let take = |n: usize| round(test_fraction * n as f64) as usize;
    let mut in_test = alloc::vec![false; cohort.len()];
    for group in [&died, &survived] {
        for &i in &group[..take(group.len())] {
            in_test[i] = true;
        }
    }
    let n_test = in_test.iter().filter(|&&t| t).count();
    if n_test == 0 || n_test == cohort.len() {
        return Err(Error::Split(format!(
            "cannot stratify {} patients at test fraction {test_fraction}",
            cohort.len()
        )));
    }
    let mut train = Vec::with_capacity(cohort.len() - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (t, flag) in cohort.trajectories.iter().zip(in_test) {
        if flag {
            test.push(t.clone());
        } else {
            train.push(t.clone());
        }
    }
    let wrap = |trajectories| Cohort {
        trajectories,
        norm_stats: cohort.norm_stats.clone(),
        caps: cohort.caps.clone(),
    };
    Ok((wrap(train), wrap(test)))
}

use alloc::string::String;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::matrix::{squared_distance, Matrix};
use crate::rng::seeded;
use crate::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 1250;
pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

/// Centroids of a k-means fit over training states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Matrix,
    pub seed: u64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    /// Nearest centroid by Euclidean distance, lowest index on ties.
    pub fn assign(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter_rows().enumerate() {
            let d = squared_distance(x, c);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn assign_all(&self, data: &Matrix) -> Vec<usize> {
        data.iter_rows().map(|r| self.assign(r)).collect()
    }
}

/// Free-function form of [`ClusterModel::assign`].
pub fn assign_cluster(x: &[f64], model: &ClusterModel) -> usize {
    model.assign(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansReport {
    /// Inertia (sum of squared distances to the assigned centroid) after each
    /// assignment step.
    pub inertia: Vec<f64>,
    /// Largest centroid displacement of each update step.
    pub shift: Vec<f64>,
    pub converged: bool,
}

fn distinct_rows(data: &Matrix) -> usize {
    let mut idx: Vec<usize> = (0..data.rows()).collect();
    let cmp = |a: &usize, b: &usize| {
        data.row(*a)
            .iter()
            .zip(data.row(*b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    };
    idx.sort_by(cmp);
    idx.dedup_by(|a, b| cmp(a, b).is_eq());
    idx.len()
}

fn plus_plus_seeds(data: &Matrix, k: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut nearest: Vec<f64> = data
        .iter_rows()
        .map(|r| squared_distance(r, centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if u < d {
                        break;
                    }
                    u -= d;
                }
            }
            chosen.expect("positive total implies a positive entry")
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), centroids.row(c)));
        }
    }
    centroids
}

/// Lloyd iterations from k-means++ seeds until no centroid moves by
/// `SHIFT_TOLERANCE` or `max_iter` updates have run. Empty clusters are
/// re-seeded with the point farthest from its centroid.
pub fn fit_kmeans(data: &Matrix, k: usize, seed: u64) -> Result<(ClusterModel, KMeansReport)> {
    fit_kmeans_with(data, k, seed, MAX_ITERATIONS)
}

pub fn fit_kmeans_with(
    data: &Matrix,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(ClusterModel, KMeansReport)> {
    if k == 0 {
        return Err(Error::Fit(String::from("k must be positive")));
    }
    if !data.is_finite() {
        return Err(Error::Fit(String::from("k-means input contains non-finite values")));
    }
    let distinct = distinct_rows(data);
    if distinct < k {
        return Err(Error::Fit(format!(
            "{distinct} distinct points cannot support {k} clusters"
        )));
    }
    let n = data.rows();
    let d = data.cols();
    let mut centroids = plus_plus_seeds(data, k, seed);
    let mut report = KMeansReport {
        inertia: Vec::new(),
        shift: Vec::new(),
        converged: false,
    };
    let mut labels = vec![0usize; n];
    let mut dist = vec![0.0f64; n];
    let model_of = |c: &Matrix| ClusterModel {
        centroids: c.clone(),
        seed,
    };
    for _ in 0..max_iter {
        let model = model_of(&centroids);
        for i in 0..n {
            labels[i] = model.assign(data.row(i));
            dist[i] = squared_distance(data.row(i), centroids.row(labels[i]));
        }
        report.inertia.push(dist.iter().sum());

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &x) in sums.row_mut(labels[i]).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        let mut next = Matrix::zeros(k, d);
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (o, &s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *o = s * inv;
                }
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dist[b] >= dist[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("n >= k");
                taken[far] = true;
                dist[far] = 0.0;
                next.row_mut(c).copy_from_slice(data.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| sqrt(squared_distance(centroids.row(c), next.row(c))))
            .fold(0.0, f64::max);
        centroids = next;
        report.shift.push(shift);
        if shift < SHIFT_TOLERANCE {
            report.converged = true;
            break;
        }
    }
    let model = model_of(&centroids);
    let final_inertia = data
        .iter_rows()
        .map(|r| squared_distance(r, centroids.row(model.assign(r))))
        .sum();
    report.inertia.push(final_inertia);
    Ok((model, report))
}

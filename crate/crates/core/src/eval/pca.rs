use alloc::string::String;
use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

/// Relative size below which the second eigenvalue counts as zero.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaPoint {
    pub pc1: f64,
    pub pc2: f64,
    pub outcome: f64,
}

/// Top two principal axes of a batch of encodings and the projected points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaExport {
    pub mean: Vec<f64>,
    /// Unit-length axes; the largest-magnitude entry of each is positive.
    pub components: [Vec<f64>; 2],
    /// Every covariance eigenvalue, descending.
    pub eigenvalues: Vec<f64>,
    pub points: Vec<PcaPoint>,
}

/// Centers `encodings`, eigendecomposes the (n - 1)-normalized covariance
/// and projects every row onto the two leading axes.
pub fn latent_pca_export(encodings: &Matrix, outcomes: &[f64]) -> Result<PcaExport> {
    let (n, d) = (encodings.rows(), encodings.cols());
    if n < 3 || d < 2 {
        return Err(Error::Export(format!("PCA needs at least 3 rows and 2 columns, got {n}x{d}")));
    }
    if outcomes.len() != n {
        return Err(Error::Export(format!("{} outcome labels for {n} encodings", outcomes.len())));
    }
    if !encodings.is_finite() {
        return Err(Error::Export(String::from("encodings contain non-finite values")));
    }
    let mean = encodings.column_means();
    let centered = DMatrix::from_fn(n, d, |i, j| encodings[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eigen.eigenvalues[k].max(0.0)).collect();
    if !(eigenvalues[1] > RANK_TOLERANCE * eigenvalues[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::Export(format!(
            "encodings span fewer than two directions (eigenvalues {} and {})",
            eigenvalues[0], eigenvalues[1]
        )));
    }
    let axis = |k: usize| -> Vec<f64> {
        let col = eigen.eigenvectors.column(order[k]);
        let lead = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| sign * v).collect()
    };
    let components = [axis(0), axis(1)];
    let points = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let project = |c: &[f64]| row.iter().zip(c).map(|(x, w)| x * w).sum::<f64>();
            PcaPoint {
                pc1: project(&components[0]),
                pc2: project(&components[1]),
                outcome: outcomes[i],
            }
        })
        .collect();
    Ok(PcaExport {
        mean,
        components,
        eigenvalues,
        points,
    })
}

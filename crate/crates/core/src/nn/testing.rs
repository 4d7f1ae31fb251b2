//! Finite-difference gradient oracle shared by the network tests.

use alloc::vec::Vec;

pub const STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so gradients that are
/// zero up to rounding compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `loss` with respect to every entry of every
/// parameter block, where `perturb(block, index, delta)` shifts one entry.
pub fn numeric_gradients(
    sizes: &[usize],
    mut perturb: impl FnMut(usize, usize, f64),
    mut loss: impl FnMut() -> f64,
) -> Vec<Vec<f64>> {
    sizes
        .iter()
        .enumerate()
        .map(|(b, &len)| {
            (0..len)
                .map(|i| {
                    perturb(b, i, STEP);
                    let up = loss();
                    perturb(b, i, -2.0 * STEP);
                    let down = loss();
                    perturb(b, i, STEP);
                    (up - down) / (2.0 * STEP)
                })
                .collect()
        })
        .collect()
}

pub fn worst_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| {
            assert_eq!(a.len(), n.len());
            a.iter().zip(n).map(|(&x, &y)| relative_error(x, y))
        })
        .fold(0.0, f64::max)
}

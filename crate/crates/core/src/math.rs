//! Float math routed through `libm`, so results are bit-identical whether or
//! not `std` is linked.

pub use libm::{exp, floor, log, pow, round, sqrt};

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

//! Scalar abstractions for rate and profit arithmetic.

use std::fmt::Debug;
use std::ops::Add;

use num_traits::{Float, FromPrimitive, Zero};

/// Anything the way-allocation solver can add up and compare.
///
/// Floats, integers and exact rationals all qualify. The solver only ever
/// adds profits left to right and compares sums, so two routes that add the
/// same terms in the same order agree bit for bit.
pub trait ProfitScalar: Copy + PartialOrd + Zero + Add<Output = Self> + Debug {}

impl<T> ProfitScalar for T where T: Copy + PartialOrd + Zero + Add<Output = Self> + Debug {}

/// Floating scalar used for hit rates and their logarithms.
pub trait RateScalar: Float + FromPrimitive + ProfitScalar {
    /// Smallest rate fed to `ln`; zero rates are clamped to this.
    fn rate_floor() -> Self {
        Self::from_f64(1e-9).expect("rate floor representable")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }
}

impl RateScalar for f32 {}
impl RateScalar for f64 {}

/// `ln(max(rate, floor))`.
pub fn log_rate<T: RateScalar>(rate: T) -> T {
    let floor = T::rate_floor();
    if rate > floor {
        rate.ln()
    } else {
        floor.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_rate_clamps_zero_and_negative() {
        let floor = (1e-9f64).ln();
        assert_eq!(log_rate(0.0f64), floor);
        assert_eq!(log_rate(-0.5f64), floor);
        assert_eq!(log_rate(1.0f64), 0.0);
        assert!((log_rate(0.5f32) - 0.5f32.ln()).abs() < 1e-7);
    }
}

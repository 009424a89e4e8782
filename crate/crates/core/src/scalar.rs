//! Scalar abstraction for the rate mathematics.
//!
//! The closed-form rate and covariance routines, the compensated summation
//! and the quadrature are written against [`Scalar`] so they run in `f32`
//! or `f64`. Extended precision is not a `Scalar`; it is reached through
//! an internal escalation path (see [`crate::cojump`]).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the rate kernels.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` constants.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_u64_lossy(x: u64) -> Self {
        Self::from_u64(x).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier's variant of Kahan summation.
///
/// Tracks a running compensation term and the sum of absolute values, which
/// together give an a-posteriori bound on the rounding error of the total.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum<T> {
    sum: T,
    compensation: T,
    abs_sum: T,
    terms: u64,
}

impl<T: Scalar> NeumaierSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
            abs_sum: T::zero(),
            terms: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation = self.compensation + ((self.sum - t) + x);
        } else {
            self.compensation = self.compensation + ((x - t) + self.sum);
        }
        self.sum = t;
        self.abs_sum = self.abs_sum + x.abs();
        self.terms += 1;
    }

    #[inline]
    pub fn total(&self) -> T {
        self.sum + self.compensation
    }

    /// Sum of the magnitudes of all added terms.
    #[inline]
    pub fn abs_sum(&self) -> T {
        self.abs_sum
    }

    /// Bound on the rounding error of [`Self::total`] given inputs that are
    /// each already accurate to `input_ulps` units in the last place.
    pub fn error_bound(&self, input_ulps: T) -> T {
        let eps = T::epsilon();
        let n = T::from_u64_lossy(self.terms);
        (input_ulps + T::lit(2.0)) * eps * self.abs_sum
            + n * n * eps * eps * self.abs_sum
            + eps * self.total().abs()
    }
}

impl<T: Scalar> FromIterator<T> for NeumaierSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<NeumaierSum<T>>().total()
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference<T: Scalar>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs());
    if scale == T::zero() {
        T::zero()
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = NeumaierSum::<f64>::new();
        s.add(1.0);
        s.add(1e100);
        s.add(1.0);
        s.add(-1e100);
        assert_eq!(s.total(), 2.0);
    }

    #[test]
    fn works_in_single_precision() {
        let xs = [1.0f32, 1e8, 1.0, -1e8];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn relative_difference_of_zeros_is_zero() {
        assert_eq!(relative_difference(0.0f64, 0.0), 0.0);
        assert!((relative_difference(1.0f64, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}

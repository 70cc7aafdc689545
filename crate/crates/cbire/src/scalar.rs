//! Scalar abstraction for the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the solvers and samplers are generic over.
///
/// Implemented for `f32` and `f64`; binaries instantiate `f64`. The two
/// helpers exist so literals and report values cross the generic boundary
/// without `F::from(..).unwrap()` noise at every call site.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    /// Widens (or rounds) to `f64` for reporting and serialisation.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must be representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_literals() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(1.25f32.as_f64(), 1.25);
    }
}

//! Scalar abstraction for the numeric core.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

/// Floating-point scalar the whole numeric core is generic over.
///
/// Implemented by `f32` and `f64`; the pipeline instantiates everything with
/// `f64`. `NaN` doubles as the missing-value marker throughout, which is why
/// `Float` (and not just `Num`) is required.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + FromStr + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + FromStr + Debug + Display + Send + Sync + 'static
{
}

/// Convert a count into the scalar type. Counts in this crate are far below
/// the integer-exactness limit of `f32`, let alone `f64`.
pub fn from_count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::from_count;

    #[test]
    fn counts_convert_exactly() {
        assert_eq!(from_count::<f64>(12_723), 12_723.0);
        assert_eq!(from_count::<f32>(8_934), 8_934.0f32);
    }
}

//! Scalar abstraction the numeric core is generic over.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar type for the math layer: `f32` or `f64`.
///
/// Everything that does arithmetic in this crate is generic over `Real`;
/// the crate root exports `f64` aliases for the common aggregates.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the working scalar type.
///
/// Panics if the conversion fails, which cannot happen for the `f32`/`f64`
/// instantiations this crate supports.
#[inline]
pub fn real<T: Real>(value: f64) -> T {
    T::from_f64(value).expect("constant not representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_converts_both_widths() {
        let a: f32 = real(0.25);
        let b: f64 = real(0.25);
        assert_eq!(a, 0.25_f32);
        assert_eq!(b, 0.25_f64);
    }
}

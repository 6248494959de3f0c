//! Small planar-geometry helpers shared across modules.

use nalgebra::Vector3;

use crate::scalar::{real, Real};

/// Rotates `v` about the world z axis by `yaw` radians.
pub fn yaw_rotate<T: Real>(yaw: T, v: &Vector3<T>) -> Vector3<T> {
    let (s, c) = yaw.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Cubic smoothstep `3x^2 - 2x^3`, clamped to `[0, 1]`.
pub fn smoothstep<T: Real>(x: T) -> T {
    let x = x.clamp(T::zero(), T::one());
    x * x * (real::<T>(3.0) - real::<T>(2.0) * x)
}

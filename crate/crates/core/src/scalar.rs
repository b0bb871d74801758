//! Scalar abstraction for the numeric core.
//!
//! Tensor math, autodiff and the optimizer are generic over [`Scalar`] so the
//! same code runs at f32 and f64. Training and tests use f64 (see the aliases
//! at the crate root); checkpoints store f32.

use num_traits::Float;

/// Floating-point scalar usable by the tensor/autodiff core.
pub trait Scalar:
    Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64; the only way literals enter generic code.
    fn from_f64(v: f64) -> Self;
    /// Widening (or identity) conversion used for reporting and traces.
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;
use rustfft::FftNum;

/// Floating point types the transform can run in.
pub trait Real: FftNum + Float + Default + Display + Debug + Sum + Send + Sync + 'static {
    /// Guard used by the modulus derivative: `g z / max(|z|, MOD_EPS)`.
    const MOD_EPS: Self;

    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    const MOD_EPS: Self = 1e-6;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const MOD_EPS: Self = 1e-12;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

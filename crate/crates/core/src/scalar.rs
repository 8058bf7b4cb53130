//! Scalar abstraction for the deterministic spectral layer.
//!
//! Everything under [`crate::spectral`] and [`crate::quadrature`] is written
//! against [`Real`], so the eigen-system can be instantiated in `f32` for cheap
//! profiling or in `f64` for the tight tolerances the verification suite
//! needs. The stochastic layers work in `f64` only.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Bisection stops once the bracket is this wide relative to its midpoint.
    const BISECTION_EPS: f64;
}

impl Real for f32 {
    const BISECTION_EPS: f64 = 2.0e-7;
}

impl Real for f64 {
    const BISECTION_EPS: f64 = 1.0e-15;
}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal fits the scalar type")
}

#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

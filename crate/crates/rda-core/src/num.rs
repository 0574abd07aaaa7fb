//! Scalar abstraction for the numeric core.
//!
//! The tensor, network, loss, and optimizer code is generic over [`Scalar`]
//! so the same kernels run in `f32` or `f64`. The rest of the workspace
//! (data generation, curricula, adversarial training, the harness) pins the
//! crate-root alias [`crate::Real`] = `f64`, which is the precision the
//! contracts and tolerances in the test suites are written against.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps, NumCast};

pub trait Scalar:
    Float + NumAssignOps + NumCast + Sum<Self> + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; the source of all literals in generic code.
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 literal converts to any Scalar")
    }

    fn to_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("Scalar converts to f64")
    }

    /// Floor applied to shifted softmax exponents so that `exp` never
    /// underflows all the way to zero. Keeps softmax outputs strictly
    /// positive for inputs up to |z| = 1e4.
    fn exp_floor() -> Self;
}

impl Scalar for f32 {
    fn exp_floor() -> Self {
        -80.0
    }
}

impl Scalar for f64 {
    fn exp_floor() -> Self {
        -700.0
    }
}

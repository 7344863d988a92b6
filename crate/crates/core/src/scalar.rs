//! Floating-point abstraction shared by the network and qubit simulation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};

/// Real scalar the network and qubit states are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssignOps + Sum + Copy + Send + Sync + Debug + Display + 'static
{
    /// Lossless-enough conversion from `f64` constants and config values.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    /// Widening conversion used for probabilities and serialization.
    fn widen(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

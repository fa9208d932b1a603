use num_traits::{Float, FromPrimitive};

/// Scalar bound for the numeric kernels (utility, ranking, bias solving,
/// least squares). Blanket-implemented for `f32` and `f64`.
pub trait Real:
    Float + FromPrimitive + std::iter::Sum + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_usize_(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar")
    }

    fn from_f64_(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable in scalar")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}

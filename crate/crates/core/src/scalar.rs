use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type accepted by the scoring and linear-algebra kernels.
///
/// Implemented for `f32` and `f64`. The evaluation pipeline itself always runs
/// in `f64`; the `f32` instantiation exists for callers that keep their own
/// single-precision buffers.
pub trait Real: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Convert an `f64` literal; panics only for types that cannot hold it.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Convergence floor for iterative kernels: `max(requested, 8·ε)`.
    fn tolerance(requested: f64) -> Self {
        let eps = Self::epsilon() * Self::lit(8.0);
        Self::lit(requested).max(eps)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_respects_precision() {
        assert_eq!(<f64 as Real>::tolerance(1e-12), 1e-12);
        assert!(<f32 as Real>::tolerance(1e-12) > 1e-7);
    }
}

//! Scalar field abstraction: every solver in this crate is generic over the
//! state scalar, which is either `f64` or `Complex<f64>`.

use nalgebra::{Complex, ComplexField};

/// Scalar type of states and operators.
///
/// Real problems should use `f64`; complex-valued problems use
/// [`Complex64`]. All tolerances, step sizes and norms stay `f64`.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    /// Whether this scalar field is complex.
    const COMPLEX: bool;

    fn from_f64(x: f64) -> Self {
        <Self as ComplexField>::from_real(x)
    }

    /// Real part (the value itself for real scalars).
    fn re(self) -> f64;
}

impl Scalar for f64 {
    const COMPLEX: bool = false;
    fn re(self) -> f64 {
        self
    }
}

impl Scalar for Complex<f64> {
    const COMPLEX: bool = true;
    fn re(self) -> f64 {
        self.re
    }
}

/// Complex scalar alias used throughout the crate.
pub type Complex64 = Complex<f64>;

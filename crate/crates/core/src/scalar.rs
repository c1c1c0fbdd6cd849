//! Floating-point abstraction shared by every numerical module.
//!
//! All grid, field and solver types are generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. Archive and volume formats are always
//! written as 64-bit floats regardless of the working precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Real scalar usable by the spectral and scattering machinery.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        <Self as FromPrimitive>::from_usize(x).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex sample type used for fields and spectra.
pub type Cplx<T> = Complex<T>;

/// Converts a real scalar into a complex number with zero imaginary part.
#[inline]
pub fn real<T: Scalar>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// `exp(i * phase)`.
#[inline]
pub fn cis<T: Scalar>(phase: T) -> Complex<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(c, s)
}

/// Three-vector helpers on plain arrays.
pub mod vec3 {
    use super::Scalar;

    #[inline]
    pub fn dot<T: Scalar>(a: [T; 3], b: [T; 3]) -> T {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn norm<T: Scalar>(a: [T; 3]) -> T {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn sub<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn add<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn scale<T: Scalar>(a: [T; 3], s: T) -> [T; 3] {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn neg<T: Scalar>(a: [T; 3]) -> [T; 3] {
        [-a[0], -a[1], -a[2]]
    }

    #[inline]
    pub fn cross<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    /// Returns `a / |a|`, or `None` for the zero vector.
    pub fn normalized<T: Scalar>(a: [T; 3]) -> Option<[T; 3]> {
        let n = norm(a);
        if n > T::zero() && n.is_finite() {
            Some(scale(a, T::one() / n))
        } else {
            None
        }
    }

    pub fn to_f64<T: Scalar>(a: [T; 3]) -> [f64; 3] {
        [a[0].to_f64_lossy(), a[1].to_f64_lossy(), a[2].to_f64_lossy()]
    }

    pub fn from_f64<T: Scalar>(a: [f64; 3]) -> [T; 3] {
        [T::of(a[0]), T::of(a[1]), T::of(a[2])]
    }
}

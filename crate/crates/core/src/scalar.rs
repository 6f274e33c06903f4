//! Floating-point scalar abstraction shared by the DSP and beamforming code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + rustfft::FftNum
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite value")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|z|^2` without the square root.
#[inline]
pub fn norm2<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// Squared Euclidean norm of a complex vector.
pub fn vec_norm2<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|&z| norm2(z)).sum()
}

/// `sum a_i * b_i` (no conjugation).
pub fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (&x, &y)| acc + x * y)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

//! Element type abstraction: f32 for training, f64 for gradient checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Tensor element type. Training runs in `f32`; finite-difference gradient
/// checks switch the whole stack to `f64` because central differences are
/// unreliable in single precision.
pub trait Scalar:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Exponential for bulk elementwise use. `f32` uses a polynomial
    /// approximation (~2 ulp, an order of magnitude faster than libm and
    /// vectorizable); `f64` stays on libm so gradient checks see full
    /// precision.
    fn fexp(self) -> Self;

    /// Hyperbolic tangent, same convention as [`Scalar::fexp`].
    fn ftanh(self) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn fexp(self) -> f32 {
        fast_exp_f32(self)
    }
    #[inline(always)]
    fn ftanh(self) -> f32 {
        fast_tanh_f32(self)
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn fexp(self) -> f64 {
        self.exp()
    }
    #[inline(always)]
    fn ftanh(self) -> f64 {
        self.tanh()
    }
}

/// Branch-free `e^x` for f32: split `x = k ln2 + r`, reconstruct `2^k`
/// through the exponent bits and evaluate a degree-5 minimax polynomial on
/// the reduced argument. Inputs are clamped to the finite range, so the
/// result is 0 below ~-87 and f32::MAX-ish above ~88.
#[inline(always)]
pub fn fast_exp_f32(x: f32) -> f32 {
    const LOG2_E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    let x = x.clamp(-87.3, 88.3);
    let k = (x * LOG2_E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // e^r on [-ln2/2, ln2/2]
    let p = 1.987_569_1e-4_f32;
    let p = p * r + 1.398_199_9e-3;
    let p = p * r + 8.333_452e-3;
    let p = p * r + 4.166_579_5e-2;
    let p = p * r + 1.666_666_6e-1;
    let p = p * r + 5e-1;
    let p = p * r * r + r + 1.0;
    let bits = (((k as i32) + 127) << 23) as u32;
    p * f32::from_bits(bits)
}

/// `tanh` for f32 through [`fast_exp_f32`]: `1 - 2 / (e^{2x} + 1)`,
/// evaluated on `-|x|` for stability and saturated past |x| > 9.
#[inline(always)]
pub fn fast_tanh_f32(x: f32) -> f32 {
    let a = x.abs();
    if a > 9.0 {
        return 1.0f32.copysign(x);
    }
    let e = fast_exp_f32(-2.0 * a);
    let t = (1.0 - e) / (1.0 + e);
    t.copysign(x)
}

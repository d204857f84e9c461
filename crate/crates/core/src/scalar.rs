//! Scalar abstraction for the analytic layer.
//!
//! Click probabilities, entropies and tail sums are written once against
//! [`Real`] and instantiated for `f32` and `f64`. Special functions that have
//! no generic implementation are evaluated in double precision and narrowed.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or intermediate.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to every Real")
    }

    /// Conversion from an integer count (exact up to the mantissa width).
    #[inline]
    fn of_u64(v: u64) -> Self {
        <Self as FromPrimitive>::from_u64(v).expect("u64 converts to every Real")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// `ln Γ(x)` for `x > 0`.
    fn ln_gamma(self) -> Self {
        Self::of(statrs::function::gamma::ln_gamma(self.f64()))
    }

    /// `ln C(n, k)`, differenced in double precision before narrowing.
    fn ln_choose(n: Self, k: Self) -> Self {
        use statrs::function::gamma::ln_gamma;
        let (n, k) = (n.f64(), k.f64());
        Self::of(ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0))
    }

    /// Regularized upper incomplete gamma `Q(a, x)`.
    fn gamma_upper_reg(a: Self, x: Self) -> Self {
        Self::of(statrs::function::gamma::gamma_ur(a.f64(), x.f64()))
    }

    /// Regularized lower incomplete gamma `P(a, x)`.
    fn gamma_lower_reg(a: Self, x: Self) -> Self {
        Self::of(statrs::function::gamma::gamma_lr(a.f64(), x.f64()))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

//! Floating point abstraction shared by the geometric and metric code.
//!
//! Everything in `geometry`, `division`, `sensitivity` and `metrics` is generic
//! over [`Scalar`]. Thresholds that only make sense relative to machine
//! precision live on the trait so that `f32` callers get sane values.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Two logits closer than this (relative to `max(1, |z|)`) are a tie.
    const TIE_EPS: f64;
    /// `|cos θ|` at or above `1 - COLLINEAR_EPS` means no plane can be built.
    const COLLINEAR_EPS: f64;
    /// Out-of-plane residual allowed by in-plane rotation, relative to the norm.
    const PLANE_EPS: f64;
    /// Norms below this are treated as zero.
    const ZERO_EPS: f64;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        NumCast::from(self).expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    const TIE_EPS: f64 = 1e-12;
    const COLLINEAR_EPS: f64 = 1e-10;
    const PLANE_EPS: f64 = 1e-9;
    const ZERO_EPS: f64 = 1e-12;
}

impl Scalar for f32 {
    const TIE_EPS: f64 = 1e-6;
    const COLLINEAR_EPS: f64 = 1e-5;
    const PLANE_EPS: f64 = 1e-4;
    const ZERO_EPS: f64 = 1e-6;
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Neumaier compensated sum.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut c = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c = c + ((sum - t) + v);
        } else {
            c = c + ((v - t) + sum);
        }
        sum = t;
    }
    sum + c
}

/// Mean and standard deviation. `sample` selects the `n - 1` divisor; a single
/// value has zero spread under either convention.
pub fn mean_std<T: Scalar>(values: &[T], sample: bool) -> (T, T) {
    let n = values.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let nt = T::from_usize(n).unwrap();
    let mean = compensated_sum(values.iter().copied()) / nt;
    if n == 1 {
        return (mean, T::zero());
    }
    let ss = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
    let denom = if sample { nt - T::one() } else { nt };
    (mean, (ss / denom).sqrt())
}

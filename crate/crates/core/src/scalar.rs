//! Scalar abstraction shared by every numeric routine in the engine.
//!
//! All math is written against [`Scalar`] so the same code runs in `f32` or
//! `f64`. Configuration values are kept in `f64` and converted at the call
//! site with [`cast`].

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the engine: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Short tag written into file headers (`f32` / `f64`).
    const NAME: &'static str;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Converts an `f64` constant or config value into `T`.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable in every Scalar")
}

/// Widens `T` to `f64` for reporting and serialization.
#[inline]
pub fn widen<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("Scalar widens to f64")
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count is representable")
}

/// Total order for finite values; NaN sorts as equal so callers must
/// validate finiteness beforehand.
#[inline]
pub fn cmp<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
}

pub(crate) fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Euclidean norm.
pub fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Euclidean distance between two equal-length slices.
pub fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Formats a real with 17 significant digits (lossless for `f64`).
pub fn fmt17<T: Scalar>(x: T) -> String {
    format!("{:.16e}", widen(x))
}

/// Parses a real written by [`fmt17`] (or any decimal form).
pub fn parse_real<T: Scalar>(s: &str) -> Option<T> {
    let v: f64 = match s {
        "inf" | "+inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => s.parse().ok()?,
    };
    T::from_f64(v)
}

//! Power Mean Distance Similarity (PMDSim) and the quantities derived from it.
//!
//! `S(a, b) = 1 / (1 + mean_i |a_i - b_i|^m)`. The value lies in `(0, 1]` and is
//! exactly 1 when `a == b`. This kernel is the only metric used by the
//! library, the matcher and the losses.

use crate::error::{Error, Result};
use crate::scalar::{all_finite, cast, from_usize, norm2, Scalar};

#[inline]
fn powm<T: Scalar>(d: T, m: T) -> T {
    if m == T::one() {
        d
    } else if m == cast(2.0) {
        d * d
    } else {
        d.powf(m)
    }
}

/// Derivative of `d^m` with respect to `d` for `d >= 0`; zero at `d == 0`.
#[inline]
fn dpowm<T: Scalar>(d: T, m: T) -> T {
    if d == T::zero() {
        T::zero()
    } else if m == T::one() {
        T::one()
    } else if m == cast(2.0) {
        d + d
    } else {
        m * d.powf(m - T::one())
    }
}

fn check<T: Scalar>(a: &[T], b: &[T], m: T) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("similarity input vector"));
    }
    if !(m.is_finite() && m > T::zero()) {
        return Err(Error::NonFinite("similarity exponent"));
    }
    if !all_finite(a) || !all_finite(b) {
        return Err(Error::NonFinite("similarity input"));
    }
    Ok(())
}

/// Mean of `|a_i - b_i|^m`; callers guarantee equal nonzero lengths.
#[inline]
pub(crate) fn power_mean_distance<T: Scalar>(a: &[T], b: &[T], m: T) -> T {
    let total: T = a.iter().zip(b).map(|(&x, &y)| powm((x - y).abs(), m)).sum();
    total / from_usize(a.len())
}

#[inline]
pub(crate) fn pmdsim_unchecked<T: Scalar>(a: &[T], b: &[T], m: T) -> T {
    T::one() / (T::one() + power_mean_distance(a, b, m))
}

/// PMDSim between `a` and `b` with power exponent `m`.
pub fn pmdsim<T: Scalar>(a: &[T], b: &[T], m: T) -> Result<T> {
    check(a, b, m)?;
    Ok(pmdsim_unchecked(a, b, m))
}

/// `1 / pmdsim(a, b, m)`; always `>= 1`, equal to 1 iff `a == b`.
pub fn dissimilarity<T: Scalar>(a: &[T], b: &[T], m: T) -> Result<T> {
    check(a, b, m)?;
    Ok(T::one() + power_mean_distance(a, b, m))
}

/// PMDSim together with its gradient with respect to `a`.
///
/// `dS/da_i = -S^2 * (m/D) * |a_i - b_i|^(m-1) * sign(a_i - b_i)`.
pub(crate) fn pmdsim_with_grad<T: Scalar>(a: &[T], b: &[T], m: T) -> (T, Vec<T>) {
    let s = pmdsim_unchecked(a, b, m);
    let scale = -(s * s) / from_usize(a.len());
    let grad = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            scale * dpowm(d.abs(), m) * d.signum()
        })
        .collect();
    (s, grad)
}

/// Gradient of `1 / pmdsim(a, b, m)` with respect to `a`.
pub(crate) fn dissimilarity_grad<T: Scalar>(a: &[T], b: &[T], m: T) -> Vec<T> {
    let scale = T::one() / from_usize(a.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            scale * dpowm(d.abs(), m) * d.signum()
        })
        .collect()
}

/// Result of [`l2_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized<T> {
    pub vector: Vec<T>,
    /// Norm was at or below the tolerance; the input was returned unchanged.
    pub degenerate: bool,
}

/// Norms at or below this are treated as zero.
pub const NORM_TOLERANCE: f64 = 1e-12;

pub fn l2_normalize<T: Scalar>(v: &[T]) -> Result<Normalized<T>> {
    if !all_finite(v) {
        return Err(Error::NonFinite("normalization input"));
    }
    let n = norm2(v);
    if n <= cast(NORM_TOLERANCE) {
        return Ok(Normalized {
            vector: v.to_vec(),
            degenerate: true,
        });
    }
    Ok(Normalized {
        vector: v.iter().map(|&x| x / n).collect(),
        degenerate: false,
    })
}

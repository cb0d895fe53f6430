//! Dense vector kernels.
//!
//! Vectors are plain `[f64]` slices; every routine assumes equal lengths and
//! only checks them in debug builds.

use crate::error::{Error, Result};

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y <- y + alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Scales `x` to unit 2-norm and returns the original norm.
pub fn normalize(x: &mut [f64]) -> Result<f64> {
    let nrm = norm2(x);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::ZeroVector);
    }
    scale(1.0 / nrm, x);
    Ok(nrm)
}

pub fn ensure_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

pub fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    Ok(())
}

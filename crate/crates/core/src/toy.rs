//! Synthetic periodic data on a one-dimensional torus.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{DataMatrix, DistanceMatrix};

/// Maps `x` into `[-0.5, 0.5)`.
pub fn wrap(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// `X_ik = exp(-d^2 / sigma^2) + 0.5 exp(-d'^2 / sigma^2)` with
/// `d = wrap(i/n - k/m)` and `d' = wrap(i/n - k/m + 0.5)`; the second term
/// only when `second_mode` is set.
///
/// With a very small `sigma` the Gaussian underflows far from the diagonal;
/// entries are floored at the smallest positive normal number so every row
/// and column stays strictly positive.
pub fn toy_torus(n: usize, m: usize, sigma: f64, second_mode: bool) -> Result<DataMatrix> {
    if n < 2 || m < 2 {
        return Err(Error::Invalid(format!("toy size must be at least 2x2, got {n}x{m}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
    }
    let s2 = sigma * sigma;
    let period = (n * m) as i64;
    // offsets in units of 1/(n m), wrapped exactly in integers
    let wrapped = |num: i64| {
        let r = num.rem_euclid(period);
        let r = if 2 * r >= period { r - period } else { r };
        r as f64 / period as f64
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|k| {
                    let num = (i * m) as i64 - (k * n) as i64;
                    let d = wrapped(num);
                    let mut v = (-d * d / s2).exp();
                    if second_mode {
                        let d2 = if period % 2 == 0 {
                            wrapped(num + period / 2)
                        } else {
                            wrap(d + 0.5)
                        };
                        v += 0.5 * (-d2 * d2 / s2).exp();
                    }
                    v.max(f64::MIN_POSITIVE)
                })
                .collect()
        })
        .collect();
    DataMatrix::new(DMatrix::from_fn(n, m, |i, k| rows[i][k]))
}

/// `|sin(pi (i - j) / n)|`, normalized to maximum 1.
pub fn ground_truth_metric(n: usize) -> Result<DistanceMatrix> {
    if n < 2 {
        return Err(Error::Invalid(format!("need n >= 2, got {n}")));
    }
    let raw = DistanceMatrix::from_pairwise(n, |i, j| {
        let k = (i as i64 - j as i64).rem_euclid(n as i64) as usize;
        // reduce to the shorter arc so symmetric pairs evaluate identically
        let k = k.min(n - k);
        (std::f64::consts::PI * k as f64 / n as f64).sin().abs()
    })?;
    Ok(raw.normalized())
}

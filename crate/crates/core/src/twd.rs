//! Closed-form tree-Wasserstein distance `|| diag(w) Z (x - y) ||_1`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tree::TreeParameter;
use crate::types::{DistanceMatrix, WeightVector};

fn check_weights(w: &WeightVector, z: &TreeParameter) -> Result<()> {
    if w.len() != z.n_edges() {
        return Err(Error::DimensionMismatch {
            expected: z.n_edges(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Tree-Wasserstein distance between two histograms over the leaves of `z`.
pub fn twd(w: &WeightVector, z: &TreeParameter, x: &[f64], y: &[f64]) -> Result<f64> {
    check_weights(w, z)?;
    for h in [x, y] {
        if h.len() != z.n_leaves() {
            return Err(Error::DimensionMismatch {
                expected: z.n_leaves(),
                got: h.len(),
            });
        }
    }
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let projected = z.apply(&diff);
    Ok(weighted_l1(w.as_slice(), &projected))
}

fn weighted_l1(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b.abs()).sum()
}

/// TWD for every column of a precomputed `Z (h_i - h_j)` matrix.
pub fn twd_batch(w: &WeightVector, zdiff: &DMatrix<f64>) -> Result<Vec<f64>> {
    if zdiff.nrows() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: zdiff.nrows(),
        });
    }
    let w = w.as_slice();
    Ok((0..zdiff.ncols())
        .into_par_iter()
        .map(|p| weighted_l1(w, zdiff.column(p).as_slice()))
        .collect())
}

/// Full pairwise TWD matrix between histograms `hists`.
pub fn twd_full_matrix(
    w: &WeightVector,
    z: &TreeParameter,
    hists: &[Vec<f64>],
) -> Result<DistanceMatrix> {
    check_weights(w, z)?;
    if let Some(h) = hists.iter().find(|h| h.len() != z.n_leaves()) {
        return Err(Error::DimensionMismatch {
            expected: z.n_leaves(),
            got: h.len(),
        });
    }
    let k = hists.len();
    let projected: Vec<Vec<f64>> = hists.par_iter().map(|h| z.apply(h)).collect();
    let ws = w.as_slice();
    let upper: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            (i + 1..k)
                .map(|j| {
                    ws.iter()
                        .zip(projected[i].iter().zip(&projected[j]))
                        .map(|(w, (a, b))| w * (a - b).abs())
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut d = DMatrix::zeros(k, k);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    DistanceMatrix::new(d)
}

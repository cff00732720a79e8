//! Full Wasserstein singular vectors with exact transport distances.

use rayon::prelude::*;

use super::transport::{transport_from, TransportPlan};
use crate::error::{Error, Result};
use crate::types::{normalize, DataMatrix, DistanceMatrix};

/// Largest sample or feature count accepted by [`full_wsv`].
pub const FULL_WSV_MAX_DIM: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct WsvResult {
    /// Sample distances, maximum entry 1.
    pub d_a: DistanceMatrix,
    /// Feature distances, maximum entry 1.
    pub d_b: DistanceMatrix,
    /// `max(|dA|_inf, |dB|_inf)` after each iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Pairwise exact Wasserstein distances between `hists` under `cost`,
/// normalized to maximum 1.
pub fn lifted_distances(hists: &[Vec<f64>], cost: &DistanceMatrix) -> Result<DistanceMatrix> {
    lift(hists, cost, &mut Vec::new())
}

/// Lifting with per-pair optimal bases carried between calls.
fn lift(
    hists: &[Vec<f64>],
    cost: &DistanceMatrix,
    plans: &mut Vec<TransportPlan>,
) -> Result<DistanceMatrix> {
    let k = hists.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let solved = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(i, j))| transport_from(&hists[i], &hists[j], cost.values(), plans.get(p)))
        .collect::<Result<Vec<TransportPlan>>>()?;
    let values: Vec<f64> = solved.iter().map(|p| p.cost).collect();
    *plans = solved;
    let mut d = nalgebra::DMatrix::zeros(k, k);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    let top = d.max();
    if top > 0.0 {
        d /= top;
    }
    DistanceMatrix::new(d)
}

fn sup_change(a: &DistanceMatrix, b: &DistanceMatrix) -> f64 {
    (a.values() - b.values()).amax()
}

/// Power iteration on sample and feature metrics, starting from the
/// discrete metric `1 - I` on both sides.
pub fn full_wsv(x: &DataMatrix, iters: usize, epsilon: f64) -> Result<WsvResult> {
    let init = (
        discrete_metric(x.n_samples())?,
        discrete_metric(x.n_features())?,
    );
    full_wsv_from(x, init, iters, epsilon)
}

/// `1` off the diagonal, `0` on it.
pub fn discrete_metric(k: usize) -> Result<DistanceMatrix> {
    DistanceMatrix::from_pairwise(k, |i, j| if i == j { 0.0 } else { 1.0 })
}

/// [`full_wsv`] from given starting metrics. Each iteration first lifts the
/// feature metric to samples, then the new sample metric to features.
pub fn full_wsv_from(
    x: &DataMatrix,
    init: (DistanceMatrix, DistanceMatrix),
    iters: usize,
    epsilon: f64,
) -> Result<WsvResult> {
    let (n, m) = (x.n_samples(), x.n_features());
    if n > FULL_WSV_MAX_DIM || m > FULL_WSV_MAX_DIM {
        return Err(Error::SizeGuard(format!(
            "full WSV is limited to {FULL_WSV_MAX_DIM} samples and features, got {n}x{m}"
        )));
    }
    if init.0.len() != n || init.1.len() != m {
        return Err(Error::DimensionMismatch {
            expected: n + m,
            got: init.0.len() + init.1.len(),
        });
    }
    let hists = normalize(x);
    let (mut d_a, mut d_b) = init;
    let mut trace = Vec::new();
    let mut converged = false;
    let (mut plans_a, mut plans_b) = (Vec::new(), Vec::new());
    for it in 0..iters {
        let new_a = lift(&hists.rows, &d_b, &mut plans_a)?;
        let new_b = lift(&hists.cols, &new_a, &mut plans_b)?;
        let change = sup_change(&d_a, &new_a).max(sup_change(&d_b, &new_b));
        log::debug!("full WSV iteration {}: change {change:.3e}", it + 1);
        d_a = new_a;
        d_b = new_b;
        trace.push(change);
        if change < epsilon {
            converged = true;
            break;
        }
    }
    Ok(WsvResult {
        d_a,
        d_b,
        trace,
        converged,
    })
}

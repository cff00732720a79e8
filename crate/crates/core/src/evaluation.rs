//! Comparison metrics for learned distance matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::DistanceMatrix;

/// Frobenius norm of the difference after scaling each matrix to maximum 1
/// (all-zero matrices are left as they are).
pub fn frobenius_error(d1: &DistanceMatrix, d2: &DistanceMatrix) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch {
            expected: d1.len(),
            got: d2.len(),
        });
    }
    Ok((d1.normalized().values() - d2.normalized().values()).norm())
}

/// Average silhouette width of `labels` under `d`.
///
/// Points in singleton clusters score 0, as does any point whose intra- and
/// nearest inter-cluster mean distances are both 0.
pub fn silhouette_asw(d: &DistanceMatrix, labels: &[usize]) -> Result<f64> {
    let n = d.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::Invalid(
            "silhouette needs at least 2 distinct labels".into(),
        ));
    }
    let cluster: Vec<usize> = labels
        .iter()
        .map(|l| ids.binary_search(l).expect("label present"))
        .collect();
    let k = ids.len();
    let mut sizes = vec![0usize; k];
    for &c in &cluster {
        sizes[c] += 1;
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = cluster[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[cluster[j]] += d.get(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Invalid("need at least 2 observations".into()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Spearman correlation over the strict upper triangles of two matrices.
pub fn spearman_upper(d1: &DistanceMatrix, d2: &DistanceMatrix) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch {
            expected: d1.len(),
            got: d2.len(),
        });
    }
    let n = d1.len();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            x.push(d1.get(i, j));
            y.push(d2.get(i, j));
        }
    }
    spearman(&x, &y)
}

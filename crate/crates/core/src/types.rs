//! Shared domain types: the data matrix, its histograms, learned distance
//! matrices and tree edge weights.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-negative `n x m` data matrix: rows are samples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Validates shape, sign and finiteness. Zero rows and columns are rejected.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, m) = values.shape();
        if n < 2 || m < 2 {
            return Err(Error::Invalid(format!(
                "data matrix must be at least 2x2, got {n}x{m}"
            )));
        }
        for i in 0..n {
            for k in 0..m {
                let v = values[(i, k)];
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: k });
                }
                if v < 0.0 {
                    return Err(Error::NegativeValue { row: i, col: k });
                }
            }
        }
        for i in 0..n {
            if values.row(i).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroRow(i));
            }
        }
        for k in 0..m {
            if values.column(k).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroColumn(k));
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, m, |i, k| rows[i][k]))
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[(i, k)]
    }
}

/// Row histograms `a_i` (samples over features) and column histograms `b_k`
/// (features over samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Histograms {
    pub rows: Vec<Vec<f64>>,
    pub cols: Vec<Vec<f64>>,
}

impl Histograms {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

fn normalized(v: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let total: f64 = v.clone().sum();
    v.map(|x| x / total).collect()
}

/// Normalizes every row and every column of `x` to sum to one.
pub fn normalize(x: &DataMatrix) -> Histograms {
    let v = x.values();
    let rows = (0..v.nrows())
        .map(|i| normalized(v.row(i).iter().copied()))
        .collect();
    let cols = (0..v.ncols())
        .map(|k| normalized(v.column(k).iter().copied()))
        .collect();
    Histograms { rows, cols }
}

/// A permutation stored as `new index -> old index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn random(len: usize, rng: &mut impl rand::Rng) -> Self {
        let mut p: Vec<usize> = (0..len).collect();
        p.shuffle(rng);
        Self(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (new, &old) in self.0.iter().enumerate() {
            inv[old] = new;
        }
        Self(inv)
    }

    /// Reorders `items` so that `out[new] = items[self[new]]`.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        self.0.iter().map(|&old| items[old].clone()).collect()
    }
}

/// Result of shuffling the rows and columns of a data matrix.
#[derive(Debug, Clone)]
pub struct Permuted {
    pub matrix: DataMatrix,
    pub rows: Permutation,
    pub cols: Permutation,
}

/// Applies explicit row and column permutations.
pub fn permute_with(x: &DataMatrix, rows: &Permutation, cols: &Permutation) -> DataMatrix {
    let v = x.values();
    let values = DMatrix::from_fn(v.nrows(), v.ncols(), |i, k| v[(rows.0[i], cols.0[k])]);
    DataMatrix { values }
}

/// Shuffles rows and columns with a seeded pseudorandom permutation.
pub fn permute(x: &DataMatrix, seed: u64) -> Permuted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = Permutation::random(x.n_samples(), &mut rng);
    let cols = Permutation::random(x.n_features(), &mut rng);
    Permuted {
        matrix: permute_with(x, &rows, &cols),
        rows,
        cols,
    }
}

/// Undoes [`permute`]: returns the matrix in its original order.
pub fn unpermute(p: &Permuted) -> DataMatrix {
    permute_with(&p.matrix, &p.rows.inverse(), &p.cols.inverse())
}

/// Symmetric, non-negative distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
}

pub const SYMMETRY_TOL: f64 = 1e-9;

impl DistanceMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (r, c) = values.shape();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, got: c });
        }
        for i in 0..r {
            if values[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!(
                    "distance matrix diagonal entry {i} is {}",
                    values[(i, i)]
                )));
            }
            for j in 0..r {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Invalid(format!(
                        "distance matrix entry ({i},{j}) = {v} is not a non-negative real"
                    )));
                }
                if (v - values[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Invalid(format!(
                        "distance matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    /// Builds a matrix from a pairwise function evaluated on `i < j`.
    pub fn from_pairwise(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i + 1..k {
                let d = f(i, j);
                values[(i, j)] = d;
                values[(j, i)] = d;
            }
        }
        Self::new(values)
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            values: DMatrix::zeros(k, k),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Returns the matrix scaled to max entry 1 (unchanged if all zero).
    pub fn normalized(&self) -> Self {
        let max = self.max();
        if max > 0.0 {
            Self {
                values: &self.values / max,
            }
        } else {
            self.clone()
        }
    }

    /// Reorders with `out[a][b] = self[p[a]][p[b]]`.
    pub fn permuted(&self, p: &Permutation) -> Self {
        let k = self.len();
        Self {
            values: DMatrix::from_fn(k, k, |a, b| self.values[(p.0[a], p.0[b])]),
        }
    }
}

/// Non-negative edge weights indexed by a tree's edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid(format!(
                "edge weight {i} = {} is not a non-negative real",
                w[i]
            )));
        }
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

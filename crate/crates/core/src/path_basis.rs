//! Leaf-to-leaf path vectors and bases of the pairwise path matrix `Y'`.
//!
//! Column `(i, j)` of `Y'` marks the edges on the path between leaves `i` and
//! `j`. When the root has degree at least 3 and no internal node is
//! redundant, `Y'` has rank `N - 1`, so some `N - 1` leaf pairs determine the
//! edge weights of the tree metric uniquely. Two ways of choosing them are
//! provided: greedy elimination over the materialized pair set, and a
//! recursive collapse of the smallest all-leaf subtree that only needs `Z`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rank::ModularEliminator;
use crate::tree::{Tree, TreeParameter};

/// Default leaf cap for [`basis_by_factorization`].
pub const FACTORIZATION_LEAF_CAP: usize = 500;

/// `N - 1` (or fewer, for rank-deficient trees) leaf pairs whose path vectors
/// are linearly independent, with those vectors stored sparse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathBasis {
    pairs: Vec<(usize, usize)>,
    columns: Vec<Vec<usize>>,
    n_edges: usize,
}

impl PathBasis {
    fn from_pairs(z: &TreeParameter, pairs: Vec<(usize, usize)>) -> Self {
        let columns = pairs.iter().map(|&(i, j)| z.path_edges(i, j)).collect();
        Self {
            pairs,
            columns,
            n_edges: z.n_edges(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Edge indices of column `p` of `U`.
    pub fn column(&self, p: usize) -> &[usize] {
        &self.columns[p]
    }

    /// True when the basis has one pair per edge (square, invertible `U`).
    pub fn is_complete(&self) -> bool {
        self.pairs.len() == self.n_edges
    }

    /// Dense `U`: `n_edges x len`, column `p` is the path vector of pair `p`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.n_edges, self.pairs.len());
        for (p, col) in self.columns.iter().enumerate() {
            for &e in col {
                u[(e, p)] = 1.0;
            }
        }
        u
    }
}

/// Path vector between leaves `i` and `j`: elementwise XOR of `Z`'s columns.
pub fn path_vector(z: &TreeParameter, i: usize, j: usize) -> Vec<u8> {
    let mut v = vec![0u8; z.n_edges()];
    for &e in z.column(i) {
        v[e] ^= 1;
    }
    for &e in z.column(j) {
        v[e] ^= 1;
    }
    v
}

/// Greedy selection over all pairs `i < j` in lexicographic order, keeping
/// each pair whose path vector is independent of those already kept.
/// Elimination is exact (modular arithmetic on the 0/1 entries).
///
/// Fails if `Z` has more than `cap` leaves or if fewer than `N - 1`
/// independent pairs exist (root of degree 2).
pub fn basis_by_factorization(z: &TreeParameter, cap: usize) -> Result<PathBasis> {
    let basis = independent_pairs(z, cap)?;
    if !basis.is_complete() {
        return Err(Error::RankDeficient {
            rank: basis.len(),
            required: z.n_edges(),
        });
    }
    Ok(basis)
}

/// Like [`basis_by_factorization`] but returns a maximal independent pair
/// set even when it is smaller than the number of edges.
pub fn independent_pairs(z: &TreeParameter, cap: usize) -> Result<PathBasis> {
    let n = z.n_leaves();
    if n > cap {
        return Err(Error::TooLarge { leaves: n, cap });
    }
    let dim = z.n_edges();
    let mut elim = ModularEliminator::new(dim);
    let mut pairs = Vec::with_capacity(dim);
    'outer: for i in 0..n {
        let row: Vec<(usize, Vec<usize>)> = (i + 1..n)
            .into_par_iter()
            .map(|j| (j, z.path_edges(i, j)))
            .collect();
        for (j, edges) in row {
            if elim.insert_indicator(&edges) {
                pairs.push((i, j));
                if elim.rank() == dim {
                    break 'outer;
                }
            }
        }
    }
    Ok(PathBasis::from_pairs(z, pairs))
}

/// Bookkeeping from [`basis_recursive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecursionStats {
    /// Number of recursion steps (subtree collapses plus the final star).
    pub calls: usize,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Recursive basis construction working directly on the tree.
///
/// Repeatedly takes the non-root node whose children are all (possibly
/// collapsed) leaves and which has the fewest of them, ties to the lowest
/// node id. For its `s` leaves it emits the `s - 1` consecutive sibling pairs
/// and one cross pair joining the sibling next to the surviving leaf with
/// the lowest-indexed leaf outside the subtree, then collapses the subtree
/// into the survivor. When only the root's star remains, its `l` leaves
/// contribute the consecutive pairs and the chord `(0, 2)`.
///
/// The cross pair's leaf sits at odd distance from the survivor along the
/// sibling chain, which keeps the emitted vectors independent for any `s`.
///
/// `seed` chooses the surviving leaf of each collapse at random; `None`
/// keeps the first child.
pub fn basis_recursive(
    t: &Tree,
    z: &TreeParameter,
    seed: Option<u64>,
) -> Result<(PathBasis, RecursionStats)> {
    if z.n_leaves() != t.n_leaves() || z.n_edges() != t.n_edges() {
        return Err(Error::DimensionMismatch {
            expected: t.n_edges(),
            got: z.n_edges(),
        });
    }
    if t.root_degree() < 3 {
        return Err(Error::RankDeficient {
            rank: t.n_edges() - 1,
            required: t.n_edges(),
        });
    }
    let n = t.n_nodes();
    let root = t.root();
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);

    // representative data index of every node currently acting as a leaf
    let mut rep = vec![usize::MAX; n];
    for (j, &leaf) in t.leaves().iter().enumerate() {
        rep[leaf] = j;
    }
    let mut pending: Vec<usize> = (0..n)
        .map(|v| t.children(v).iter().filter(|&&c| !t.is_leaf_node(c)).count())
        .collect();
    let mut ready = BinaryHeap::new();
    for v in 0..n {
        if v != root && !t.is_leaf_node(v) && pending[v] == 0 {
            ready.push(Reverse((t.children(v).len(), v)));
        }
    }
    let mut active: BTreeSet<usize> = (0..t.n_leaves()).collect();
    let mut pairs = Vec::with_capacity(t.n_edges());
    let mut calls = 0;

    while let Some(Reverse((s, rho))) = ready.pop() {
        calls += 1;
        let reps: Vec<usize> = t.children(rho).iter().map(|&c| rep[c]).collect();
        debug_assert_eq!(reps.len(), s);
        let survivor = match rng.as_mut() {
            Some(r) => r.random_range(0..s),
            None => 0,
        };
        for w in reps.windows(2) {
            pairs.push(ordered(w[0], w[1]));
        }
        let partner = if survivor + 1 < s {
            survivor + 1
        } else {
            survivor - 1
        };
        let outside = active
            .iter()
            .copied()
            .find(|r| !reps.contains(r))
            .expect("root degree >= 3 leaves a leaf outside every subtree");
        pairs.push(ordered(reps[partner], outside));

        for (k, &r) in reps.iter().enumerate() {
            if k != survivor {
                active.remove(&r);
            }
        }
        rep[rho] = reps[survivor];
        let parent = t.parent(rho).expect("collapsed node is not the root");
        pending[parent] -= 1;
        if parent != root && pending[parent] == 0 {
            ready.push(Reverse((t.children(parent).len(), parent)));
        }
    }

    calls += 1;
    let reps: Vec<usize> = t.children(root).iter().map(|&c| rep[c]).collect();
    for w in reps.windows(2) {
        pairs.push(ordered(w[0], w[1]));
    }
    pairs.push(ordered(reps[0], reps[2]));

    let basis = PathBasis::from_pairs(z, pairs);
    debug_assert_eq!(basis.len(), t.n_edges());
    Ok((basis, RecursionStats { calls }))
}

/// Precomputes `Z_other (h_i - h_j)` for every basis pair `(i, j)`.
///
/// `hists` are the histograms of the basis side (rows for the sample tree),
/// supported on the leaves of `z_other`. Column `p` of the result belongs to
/// `pairs[p]`; the shape is `z_other.n_edges() x pairs.len()`.
pub fn rhs_pairs_diff(
    pairs: &[(usize, usize)],
    hists: &[Vec<f64>],
    z_other: &TreeParameter,
) -> Result<DMatrix<f64>> {
    if let Some(h) = hists.iter().find(|h| h.len() != z_other.n_leaves()) {
        return Err(Error::DimensionMismatch {
            expected: z_other.n_leaves(),
            got: h.len(),
        });
    }
    if let Some(&(i, j)) = pairs
        .iter()
        .find(|&&(i, j)| i >= hists.len() || j >= hists.len())
    {
        return Err(Error::Invalid(format!(
            "pair ({i},{j}) out of range for {} histograms",
            hists.len()
        )));
    }
    let projected: Vec<Vec<f64>> = hists.par_iter().map(|h| z_other.apply(h)).collect();
    let rows = z_other.n_edges();
    let cols: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            projected[i]
                .iter()
                .zip(&projected[j])
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(rows, pairs.len(), |e, p| cols[p][e]))
}

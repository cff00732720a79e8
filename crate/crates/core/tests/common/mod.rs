#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use treewsv::{Tree, TreeParameter};

/// Random tree over `n_leaves` leaves whose root has `root_children`
/// children and whose other internal nodes have between 2 and 4.
///
/// Leaf sets are split recursively into random non-empty parts; a part of
/// size one becomes a leaf. Data indices are assigned to leaves in random
/// order.
pub fn random_tree(rng: &mut impl Rng, n_leaves: usize, root_children: usize) -> Tree {
    assert!(root_children >= 2 && n_leaves >= root_children);
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut leaf_nodes = Vec::new();
    let mut stack = vec![(0usize, n_leaves, root_children)];
    while let Some((node, size, parts)) = stack.pop() {
        for part in random_composition(rng, size, parts) {
            let id = parent.len();
            parent.push(Some(node));
            if part == 1 {
                leaf_nodes.push(id);
            } else {
                let k = rng.random_range(2..=part.min(4));
                stack.push((id, part, k));
            }
        }
    }
    leaf_nodes.shuffle(rng);
    Tree::new(parent, leaf_nodes).expect("generated tree is valid")
}

/// `size` split into `parts` positive summands.
fn random_composition(rng: &mut impl Rng, size: usize, parts: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (1..size).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts[..parts - 1].to_vec();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(size)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// A tree whose root has at least 3 children.
pub fn random_valid_tree(rng: &mut impl Rng, max_leaves: usize) -> Tree {
    let n = rng.random_range(3..=max_leaves);
    let k = rng.random_range(3..=n.min(5));
    random_tree(rng, n, k)
}

/// Node ids on the path between the leaves of data points `i` and `j`,
/// found by walking parent links.
pub fn path_nodes(t: &Tree, i: usize, j: usize) -> Vec<usize> {
    let ancestors = |mut v: usize| {
        let mut out = vec![v];
        while let Some(p) = t.parent(v) {
            out.push(p);
            v = p;
        }
        out
    };
    let a = ancestors(t.leaves()[i]);
    let b = ancestors(t.leaves()[j]);
    let common = a.iter().find(|v| b.contains(v)).copied().unwrap();
    a.iter()
        .take_while(|&&v| v != common)
        .chain(b.iter().take_while(|&&v| v != common))
        .copied()
        .collect()
}

/// Integer indicator column of the path between `i` and `j`.
pub fn path_column(t: &Tree, z: &TreeParameter, i: usize, j: usize) -> Vec<i128> {
    let mut col = vec![0i128; z.n_edges()];
    for v in path_nodes(t, i, j) {
        col[z.edge_of_node(v).unwrap()] = 1;
    }
    col
}

/// Every pairwise path column `(i < j)`.
pub fn full_path_matrix(t: &Tree, z: &TreeParameter) -> Vec<Vec<i128>> {
    let n = t.n_leaves();
    let mut cols = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            cols.push(path_column(t, z, i, j));
        }
    }
    cols
}

/// Exact rank of an integer matrix given as vectors, by fraction-free
/// (Bareiss) elimination.
pub fn bareiss_rank(vectors: &[Vec<i128>]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<i128>> = vectors.to_vec();
    let cols = m[0].len();
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..m.len() {
            for k in c + 1..cols {
                m[r][k] = (m[r][k] * m[rank][c] - m[r][c] * m[rank][k]) / prev;
            }
            m[r][c] = 0;
        }
        prev = m[rank][c];
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// All-pairs tree distances by summing weights along parent walks.
pub fn tree_distance(t: &Tree, z: &TreeParameter, w: &[f64], i: usize, j: usize) -> f64 {
    path_nodes(t, i, j)
        .into_iter()
        .map(|v| w[z.edge_of_node(v).unwrap()])
        .sum()
}

pub fn random_histogram(rng: &mut impl Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let h: Vec<f64> = (0..n)
            .map(|_| {
                if sparse && rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let s: f64 = h.iter().sum();
        if s > 0.0 {
            return h.into_iter().map(|v| v / s).collect();
        }
    }
}

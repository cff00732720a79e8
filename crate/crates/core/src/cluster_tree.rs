//! Hierarchical farthest-first (Gonzalez) partition trees.
//!
//! At every internal node up to `k_children` centers are picked by
//! farthest-first traversal, each point joins its nearest center and the
//! groups are split recursively. Groups with at most `k_children` points, or
//! groups reaching `max_depth`, become sibling leaves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tree::Tree;
use crate::types::DistanceMatrix;

/// Points to cluster: raw vectors (Euclidean metric) or a precomputed metric.
#[derive(Debug, Clone, Copy)]
pub enum PointSet<'a> {
    Vectors(&'a [Vec<f64>]),
    Distances(&'a DistanceMatrix),
}

impl PointSet<'_> {
    pub fn len(&self) -> usize {
        match self {
            PointSet::Vectors(v) => v.len(),
            PointSet::Distances(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        match self {
            PointSet::Vectors(v) => v[i]
                .iter()
                .zip(&v[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            PointSet::Distances(d) => d.get(i, j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTreeParams {
    pub k_children: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// Root splits are retried with more centers until this many non-empty
    /// groups exist. Values below 3 produce trees whose path matrix is rank
    /// deficient; they are only useful for comparisons.
    pub min_root_degree: usize,
}

impl Default for ClusterTreeParams {
    fn default() -> Self {
        Self {
            k_children: 4,
            max_depth: 6,
            seed: 0,
            min_root_degree: 3,
        }
    }
}

impl ClusterTreeParams {
    pub fn new(k_children: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            k_children,
            max_depth,
            seed,
            min_root_degree: 3,
        }
    }
}

struct Builder<'a> {
    points: PointSet<'a>,
    k: usize,
    max_depth: usize,
    rng: ChaCha8Rng,
    parent: Vec<Option<usize>>,
    leaf_node: Vec<usize>,
}

impl Builder<'_> {
    fn add_node(&mut self, parent: Option<usize>) -> usize {
        self.parent.push(parent);
        self.parent.len() - 1
    }

    fn attach_leaves(&mut self, node: usize, group: &[usize]) {
        for &p in group {
            self.leaf_node[p] = self.add_node(Some(node));
        }
    }

    /// Farthest-first traversal with up to `n_centers` centers followed by
    /// nearest-center assignment. Returns the non-empty groups in center order.
    fn split(&mut self, group: &[usize], n_centers: usize) -> Vec<Vec<usize>> {
        let first = group[self.rng.random_range(0..group.len())];
        let mut nearest: Vec<f64> = group.iter().map(|&p| self.points.dist(p, first)).collect();
        let mut assign = vec![0usize; group.len()];
        let mut n_found = 1;
        while n_found < n_centers {
            // max with lowest-position tie-break
            let (pos, far) = nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                });
            if far <= 0.0 {
                break;
            }
            let center = group[pos];
            for (i, &p) in group.iter().enumerate() {
                let d = self.points.dist(p, center);
                if d < nearest[i] {
                    nearest[i] = d;
                    assign[i] = n_found;
                }
            }
            n_found += 1;
        }
        let mut groups = vec![Vec::new(); n_found];
        for (i, &p) in group.iter().enumerate() {
            groups[assign[i]].push(p);
        }
        groups.retain(|g| !g.is_empty());
        groups
    }

    fn attach_groups(&mut self, node: usize, groups: Vec<Vec<usize>>, depth: usize) {
        for g in groups {
            if g.len() == 1 {
                self.attach_leaves(node, &g);
            } else {
                let child = self.add_node(Some(node));
                self.grow(child, &g, depth + 1);
            }
        }
    }

    /// Fills the subtree of `node` (at `depth`) with the points of `group`.
    fn grow(&mut self, node: usize, group: &[usize], depth: usize) {
        if group.len() <= self.k || depth + 1 >= self.max_depth {
            self.attach_leaves(node, group);
            return;
        }
        let groups = self.split(group, self.k);
        if groups.len() < 2 {
            // all points coincide
            self.attach_leaves(node, group);
            return;
        }
        self.attach_groups(node, groups, depth);
    }
}

/// Builds a farthest-first cluster tree whose leaf `j` is point `j`.
pub fn build_cluster_tree(points: PointSet<'_>, params: &ClusterTreeParams) -> Result<Tree> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 points, got {n}")));
    }
    if params.k_children < 2 {
        return Err(Error::Invalid(format!(
            "k_children must be at least 2, got {}",
            params.k_children
        )));
    }
    if params.max_depth < 1 {
        return Err(Error::Invalid("max_depth must be at least 1".into()));
    }
    let min_root = params.min_root_degree.max(2);
    let mut b = Builder {
        points,
        k: params.k_children,
        max_depth: params.max_depth,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        parent: Vec::with_capacity(2 * n),
        leaf_node: vec![usize::MAX; n],
    };
    let root = b.add_node(None);
    let all: Vec<usize> = (0..n).collect();
    if n <= params.k_children || params.max_depth == 1 {
        if n < min_root {
            return Err(Error::RootDegree { distinct: n });
        }
        b.attach_leaves(root, &all);
    } else {
        let mut n_centers = params.k_children;
        let groups = loop {
            let groups = b.split(&all, n_centers);
            if groups.len() >= min_root {
                break groups;
            }
            if groups.len() < n_centers || n_centers >= n {
                return Err(Error::RootDegree {
                    distinct: groups.len(),
                });
            }
            n_centers += 1;
        };
        b.attach_groups(root, groups, 0);
    }
    Tree::new(b.parent, b.leaf_node)
}

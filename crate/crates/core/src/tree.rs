//! Rooted trees whose leaves carry data points, the 0/1 tree parameter `Z`
//! (edge-ancestry of every leaf) and contraction of zero-weight edges.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{DistanceMatrix, WeightVector};

/// A rooted tree over `N` nodes. Node ids are `0..N`; `leaves[j]` is the node
/// holding data point `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    leaves: Vec<usize>,
}

impl Tree {
    /// Builds and validates a tree from a parent map (`None` marks the root)
    /// and the node of every data point.
    ///
    /// Every childless node must be a leaf, every leaf must be childless, the
    /// root needs at least two children and no other internal node may have
    /// exactly one child.
    pub fn new(parent: Vec<Option<usize>>, leaves: Vec<usize>) -> Result<Self> {
        let n = parent.len();
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == v {
                    return Err(Error::InvalidTree(format!("node {v} has invalid parent {p}")));
                }
                children[p].push(v);
            }
        }
        // every node must reach the root in fewer than n steps
        for start in 0..n {
            let mut v = start;
            let mut steps = 0;
            while let Some(p) = parent[v] {
                v = p;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidTree(format!("cycle through node {start}")));
                }
            }
        }
        let mut is_leaf = vec![false; n];
        for &l in &leaves {
            if l >= n {
                return Err(Error::InvalidTree(format!("leaf node {l} out of range")));
            }
            if is_leaf[l] {
                return Err(Error::InvalidTree(format!("leaf node {l} listed twice")));
            }
            is_leaf[l] = true;
        }
        for v in 0..n {
            let c = children[v].len();
            if is_leaf[v] && c > 0 {
                return Err(Error::InvalidTree(format!("leaf node {v} has children")));
            }
            if !is_leaf[v] && c == 0 {
                return Err(Error::InvalidTree(format!("node {v} has no children and no data")));
            }
            if v == root && c < 2 {
                return Err(Error::InvalidTree(format!("root has {c} children")));
            }
            if v != root && c == 1 {
                return Err(Error::InvalidTree(format!("redundant node {v} with one child")));
            }
        }
        Ok(Self {
            parent,
            children,
            root,
            leaves,
        })
    }

    /// Root with `n_leaves` leaf children; leaf `j` is node `j + 1`.
    pub fn star(n_leaves: usize) -> Result<Self> {
        let mut parent = vec![None];
        parent.extend(std::iter::repeat_n(Some(0), n_leaves));
        Self::new(parent, (1..=n_leaves).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_edges(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn root_degree(&self) -> usize {
        self.children[self.root].len()
    }

    pub fn is_leaf_node(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Number of edges between the root and node `v`.
    pub fn depth(&self, mut v: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent[v] {
            v = p;
            d += 1;
        }
        d
    }

    /// Nodes in preorder, children visited in ascending id order.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n_nodes());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        order
    }
}

/// The tree parameter `Z`: row `e` is the edge above node `edge_nodes[e]`,
/// column `j` marks the edges on the root-to-leaf-`j` path. Stored sparse by
/// column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeParameter {
    edge_nodes: Vec<usize>,
    edge_of_node: Vec<Option<usize>>,
    columns: Vec<Vec<usize>>,
}

/// Computes `Z` with edges enumerated in preorder of their child node.
pub fn tree_parameter(t: &Tree) -> TreeParameter {
    let mut edge_of_node = vec![None; t.n_nodes()];
    let mut edge_nodes = Vec::with_capacity(t.n_edges());
    for v in t.preorder() {
        if v != t.root() {
            edge_of_node[v] = Some(edge_nodes.len());
            edge_nodes.push(v);
        }
    }
    let columns = t
        .leaves()
        .iter()
        .map(|&leaf| {
            let mut path = Vec::new();
            let mut v = leaf;
            while let Some(p) = t.parent(v) {
                path.push(edge_of_node[v].expect("non-root node has an edge"));
                v = p;
            }
            path.reverse();
            path
        })
        .collect();
    TreeParameter {
        edge_nodes,
        edge_of_node,
        columns,
    }
}

impl TreeParameter {
    pub fn n_edges(&self) -> usize {
        self.edge_nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.columns.len()
    }

    /// Edge indices on the root-to-leaf path, ascending (root side first).
    pub fn column(&self, leaf: usize) -> &[usize] {
        &self.columns[leaf]
    }

    pub fn edge_nodes(&self) -> &[usize] {
        &self.edge_nodes
    }

    pub fn edge_of_node(&self, v: usize) -> Option<usize> {
        self.edge_of_node[v]
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n_edges(), self.n_leaves());
        for (j, col) in self.columns.iter().enumerate() {
            for &e in col {
                z[(e, j)] = 1.0;
            }
        }
        z
    }

    /// `Z * v` for a vector indexed by leaves.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_edges()];
        self.apply_into(v, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (col, &x) in self.columns.iter().zip(v) {
            if x != 0.0 {
                for &e in col {
                    out[e] += x;
                }
            }
        }
    }

    /// Edges on the path between two leaves (symmetric difference of their
    /// root paths), ascending.
    pub fn path_edges(&self, i: usize, j: usize) -> Vec<usize> {
        let (a, b) = (&self.columns[i], &self.columns[j]);
        let shared = a.iter().zip(b).take_while(|(x, y)| x == y).count();
        let mut out: Vec<usize> = a[shared..].iter().chain(&b[shared..]).copied().collect();
        out.sort_unstable();
        out
    }

    /// Tree metric between two leaves under edge weights `w`.
    pub fn leaf_distance(&self, w: &WeightVector, i: usize, j: usize) -> f64 {
        self.path_edges(i, j).iter().map(|&e| w.0[e]).sum()
    }

    /// All-pairs tree metric between leaves.
    pub fn leaf_distances(&self, w: &WeightVector) -> DistanceMatrix {
        DistanceMatrix::from_pairwise(self.n_leaves(), |i, j| self.leaf_distance(w, i, j))
            .expect("tree metric is a valid distance matrix")
    }
}

/// Contracts every internal edge whose weight is `<= tol`, reattaching the
/// children of the contracted node to its parent. Leaf distances are
/// preserved up to the contracted weights.
///
/// Edges above leaves are never contracted: a leaf merged into an internal
/// node cannot be represented while leaves stay childless, so such edges
/// keep their (possibly zero) weight.
pub fn merge_zero_weights(
    t: &Tree,
    z: &TreeParameter,
    w: &WeightVector,
    tol: f64,
) -> Result<(Tree, TreeParameter, WeightVector)> {
    if w.len() != z.n_edges() {
        return Err(Error::DimensionMismatch {
            expected: z.n_edges(),
            got: w.len(),
        });
    }
    let n = t.n_nodes();
    let contracted: Vec<bool> = (0..n)
        .map(|v| match z.edge_of_node(v) {
            Some(e) => !t.is_leaf_node(v) && w.0[e] <= tol,
            None => false,
        })
        .collect();
    if !contracted.iter().any(|&c| c) {
        return Ok((t.clone(), z.clone(), w.clone()));
    }
    let mut new_id = vec![usize::MAX; n];
    let mut next = 0;
    for v in 0..n {
        if !contracted[v] {
            new_id[v] = next;
            next += 1;
        }
    }
    let mut parent = vec![None; next];
    let mut weight_of_node = vec![0.0; next];
    for v in 0..n {
        if contracted[v] {
            continue;
        }
        let mut p = t.parent(v);
        while let Some(q) = p {
            if !contracted[q] {
                break;
            }
            p = t.parent(q);
        }
        parent[new_id[v]] = p.map(|q| new_id[q]);
        if let Some(e) = z.edge_of_node(v) {
            weight_of_node[new_id[v]] = w.0[e];
        }
    }
    let leaves = t.leaves().iter().map(|&l| new_id[l]).collect();
    let tree = Tree::new(parent, leaves)?;
    let param = tree_parameter(&tree);
    let weights = WeightVector(
        param
            .edge_nodes()
            .iter()
            .map(|&v| weight_of_node[v])
            .collect(),
    );
    Ok((tree, param, weights))
}

//! Unsupervised ground-metric learning on tree-Wasserstein distances.
//!
//! Given a non-negative data matrix `X` (samples x features), the crate
//! learns a pair of tree metrics: one over the features whose induced
//! transport distance compares samples, and one over the samples whose
//! transport distance compares features. Both are fixed points of a
//! coupled power iteration solved by non-negative least squares over a
//! basis of leaf-to-leaf paths.

pub mod baselines;
pub mod cluster_tree;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod nnls;
pub mod path_basis;
pub mod rank;
pub mod solver;
pub mod toy;
pub mod tree;
pub mod twd;
pub mod types;

pub use error::{Error, Result};
pub use tree::{tree_parameter, Tree, TreeParameter};
pub use types::{DataMatrix, DistanceMatrix, Histograms, WeightVector};

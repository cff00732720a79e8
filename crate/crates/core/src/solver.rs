//! Tree-Wasserstein singular vectors: the coupled power iteration on the
//! edge weights of a sample tree and a feature tree.
//!
//! Naming follows the data matrix: side `A` is the tree over the `n`
//! samples, side `B` the tree over the `m` features. Updating `w_A` asks the
//! sample tree metric to reproduce, on a basis of sample pairs, the TWD
//! between the corresponding row histograms measured on the feature tree.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster_tree::{build_cluster_tree, ClusterTreeParams, PointSet};
use crate::error::{Error, Result};
use crate::nnls::{NnlsOptions, NnlsSystem};
use crate::path_basis::{
    basis_by_factorization, basis_recursive, independent_pairs, rhs_pairs_diff, PathBasis,
    FACTORIZATION_LEAF_CAP,
};
use crate::tree::{merge_zero_weights, tree_parameter, Tree, TreeParameter};
use crate::twd::{twd_batch, twd_full_matrix};
use crate::types::{normalize, DataMatrix, DistanceMatrix, Histograms, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisMode {
    /// Elimination when the tree has at most `factorization_cap` leaves,
    /// otherwise the recursive construction.
    #[default]
    Auto,
    Factorization,
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    #[default]
    AFirst,
    BFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub inner_iters: usize,
    pub epsilon: f64,
    pub meta_iters: usize,
    pub k_children: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub basis_mode: BasisMode,
    pub update_order: UpdateOrder,
    /// Internal edges with learned weight `<= merge_tol` are contracted.
    pub merge_tol: f64,
    pub factorization_cap: usize,
    pub min_root_degree: usize,
    /// Accept trees whose path matrix is rank deficient (root of degree 2)
    /// and solve the under-determined system with a maximal independent
    /// pair set. Only meaningful for comparisons.
    pub allow_rank_deficient: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            inner_iters: 20,
            epsilon: 1e-6,
            meta_iters: 15,
            k_children: 4,
            max_depth: 6,
            seed: 0,
            basis_mode: BasisMode::Auto,
            update_order: UpdateOrder::AFirst,
            merge_tol: 0.0,
            factorization_cap: FACTORIZATION_LEAF_CAP,
            min_root_degree: 3,
            allow_rank_deficient: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_iters < 1 {
            return Err(Error::Invalid("inner_iters must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.meta_iters < 1 {
            return Err(Error::Invalid("meta_iters must be at least 1".into()));
        }
        if !(self.merge_tol >= 0.0) {
            return Err(Error::Invalid("merge_tol must be non-negative".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> ClusterTreeParams {
        ClusterTreeParams {
            k_children: self.k_children,
            max_depth: self.max_depth,
            seed: self.seed,
            min_root_degree: if self.allow_rank_deficient {
                self.min_root_degree
            } else {
                self.min_root_degree.max(3)
            },
        }
    }
}

/// Wall-clock seconds per phase of a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Timings {
    pub tree_build: f64,
    pub basis: f64,
    pub inner_loop: f64,
    pub distances: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.tree_build + self.basis + self.inner_loop + self.distances
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub tree_a: Tree,
    pub z_a: TreeParameter,
    pub w_a: WeightVector,
    pub tree_b: Tree,
    pub z_b: TreeParameter,
    pub w_b: WeightVector,
    /// Sample distances, normalized to maximum 1.
    pub d_a: DistanceMatrix,
    /// Feature distances, normalized to maximum 1.
    pub d_b: DistanceMatrix,
    /// Maximum entry of `d_a` and `d_b` before normalization.
    pub scale_a: f64,
    pub scale_b: f64,
    /// Max normalized weight change after each inner iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Score of every meta-iteration (empty for a plain fit).
    pub meta_scores: Vec<f64>,
    pub best_meta: usize,
    pub timings: Timings,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// Score used by [`meta_fit`] without an evaluator: converged runs rank
    /// above non-converged ones, then smaller final change wins.
    pub fn default_score(&self) -> f64 {
        let change = self.trace.last().copied().unwrap_or(f64::INFINITY);
        if self.converged {
            1.0 - change
        } else {
            -change
        }
    }
}

/// The linear system for one side: path basis, NNLS factorization and the
/// projected histogram differences feeding its right-hand side.
#[derive(Debug, Clone)]
pub struct SideSystem {
    pairs: Vec<(usize, usize)>,
    nnls: NnlsSystem,
    zdiff: DMatrix<f64>,
    n_points: usize,
}

impl SideSystem {
    /// `hists` are the histograms of this side's points, supported on the
    /// leaves of the other side's tree parameter `z_other`.
    pub fn new(basis: &PathBasis, hists: &[Vec<f64>], z_other: &TreeParameter) -> Result<Self> {
        let columns: Vec<&[usize]> = (0..basis.len()).map(|p| basis.column(p)).collect();
        let nnls = NnlsSystem::from_indicator_columns(basis.n_edges(), &columns);
        let zdiff = rhs_pairs_diff(basis.pairs(), hists, z_other)?;
        Ok(Self {
            pairs: basis.pairs().to_vec(),
            nnls,
            zdiff,
            n_points: hists.len(),
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_edges(&self) -> usize {
        self.nnls.n_unknowns()
    }

    pub fn nnls(&self) -> &NnlsSystem {
        &self.nnls
    }

    /// L-infinity normalized TWD of every basis pair under `w_other`.
    pub fn rhs(&self, w_other: &WeightVector) -> Result<Vec<f64>> {
        let mut b = twd_batch(w_other, &self.zdiff)?;
        let top = b.iter().fold(0.0f64, |m, &v| m.max(v));
        if !(top > 0.0) {
            return Err(Error::DegenerateRhs);
        }
        b.iter_mut().for_each(|v| *v /= top);
        Ok(b)
    }

    /// One weight update given the other side's weights.
    pub fn update(&self, w_other: &WeightVector) -> Result<WeightVector> {
        let b = self.rhs(w_other)?;
        let sol = self.nnls.solve_with(&b, &NnlsOptions::default())?;
        Ok(WeightVector(sol.w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    pub w_a: WeightVector,
    pub w_b: WeightVector,
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Weights after each iteration.
    pub history_a: Vec<WeightVector>,
    pub history_b: Vec<WeightVector>,
}

fn l1_change(old: &WeightVector, new: &WeightVector) -> f64 {
    old.0.iter().zip(&new.0).map(|(a, b)| (a - b).abs()).sum()
}

/// Strictly positive starting weights drawn uniformly from `[0.5, 1.5)`,
/// sample side first.
pub fn init_weights(n_edges_a: usize, n_edges_b: usize, seed: u64) -> (WeightVector, WeightVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| WeightVector((0..k).map(|_| rng.random_range(0.5..1.5)).collect());
    let a = draw(n_edges_a);
    let b = draw(n_edges_b);
    (a, b)
}

/// Alternating NNLS updates until the largest per-point L1 weight change
/// drops below `cfg.epsilon` or `cfg.inner_iters` is reached.
pub fn power_iterate(
    a: &SideSystem,
    b: &SideSystem,
    init: (WeightVector, WeightVector),
    cfg: &FitConfig,
) -> Result<PowerIteration> {
    cfg.validate()?;
    let (mut w_a, mut w_b) = init;
    for (w, s) in [(&w_a, a), (&w_b, b)] {
        if w.len() != s.n_edges() {
            return Err(Error::DimensionMismatch {
                expected: s.n_edges(),
                got: w.len(),
            });
        }
    }
    let mut out = PowerIteration {
        w_a: w_a.clone(),
        w_b: w_b.clone(),
        trace: Vec::new(),
        converged: false,
        history_a: Vec::new(),
        history_b: Vec::new(),
    };
    for it in 0..cfg.inner_iters {
        let (new_a, new_b) = match cfg.update_order {
            UpdateOrder::AFirst => {
                let na = a.update(&w_b)?;
                let nb = b.update(&na)?;
                (na, nb)
            }
            UpdateOrder::BFirst => {
                let nb = b.update(&w_a)?;
                let na = a.update(&nb)?;
                (na, nb)
            }
        };
        let change = (l1_change(&w_a, &new_a) / a.n_points as f64)
            .max(l1_change(&w_b, &new_b) / b.n_points as f64);
        log::debug!("inner iteration {}: change {change:.3e}", it + 1);
        w_a = new_a;
        w_b = new_b;
        out.history_a.push(w_a.clone());
        out.history_b.push(w_b.clone());
        out.trace.push(change);
        if change < cfg.epsilon {
            out.converged = true;
            break;
        }
    }
    out.w_a = w_a;
    out.w_b = w_b;
    Ok(out)
}

/// Path basis for one tree according to the configured mode.
pub fn choose_basis(t: &Tree, z: &TreeParameter, cfg: &FitConfig) -> Result<PathBasis> {
    if cfg.allow_rank_deficient && t.root_degree() < 3 {
        return independent_pairs(z, cfg.factorization_cap);
    }
    let use_factorization = match cfg.basis_mode {
        BasisMode::Factorization => true,
        BasisMode::Recursive => false,
        BasisMode::Auto => z.n_leaves() <= cfg.factorization_cap,
    };
    if use_factorization {
        basis_by_factorization(z, cfg.factorization_cap)
    } else {
        Ok(basis_recursive(t, z, None)?.0)
    }
}

fn check_metric(d: &DistanceMatrix, expected: usize) -> Result<()> {
    if d.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: d.len(),
        });
    }
    Ok(())
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Builds both trees, solves the power iteration and emits the learned
/// distance matrices.
///
/// Without `initial` the trees come from Euclidean distances between the
/// row (resp. column) histograms; otherwise from the given sample and
/// feature metrics.
pub fn fit(
    x: &DataMatrix,
    cfg: &FitConfig,
    initial: Option<(&DistanceMatrix, &DistanceMatrix)>,
) -> Result<FitResult> {
    cfg.validate()?;
    let hists = normalize(x);
    let mut timings = Timings::default();

    let clock = Instant::now();
    let params = cfg.tree_params();
    let (tree_a, tree_b) = match initial {
        None => (
            build_cluster_tree(PointSet::Vectors(&hists.rows), &params)?,
            build_cluster_tree(PointSet::Vectors(&hists.cols), &params)?,
        ),
        Some((da, db)) => {
            check_metric(da, hists.n_samples())?;
            check_metric(db, hists.n_features())?;
            (
                build_cluster_tree(PointSet::Distances(da), &params)?,
                build_cluster_tree(PointSet::Distances(db), &params)?,
            )
        }
    };
    let z_a = tree_parameter(&tree_a);
    let z_b = tree_parameter(&tree_b);
    timings.tree_build = elapsed(clock);

    let clock = Instant::now();
    let (sys_a, sys_b) = side_systems(&tree_a, &z_a, &tree_b, &z_b, &hists, cfg)?;
    timings.basis = elapsed(clock);

    let clock = Instant::now();
    let init = init_weights(z_a.n_edges(), z_b.n_edges(), cfg.seed);
    let pi = power_iterate(&sys_a, &sys_b, init, cfg)?;
    timings.inner_loop = elapsed(clock);
    log::info!(
        "power iteration: {} iterations, converged {}",
        pi.trace.len(),
        pi.converged
    );

    let clock = Instant::now();
    let (tree_a, z_a, w_a) = merge_zero_weights(&tree_a, &z_a, &pi.w_a, cfg.merge_tol)?;
    let (tree_b, z_b, w_b) = merge_zero_weights(&tree_b, &z_b, &pi.w_b, cfg.merge_tol)?;
    let raw_a = twd_full_matrix(&w_b, &z_b, &hists.rows)?;
    let raw_b = twd_full_matrix(&w_a, &z_a, &hists.cols)?;
    timings.distances = elapsed(clock);

    Ok(FitResult {
        scale_a: raw_a.max(),
        scale_b: raw_b.max(),
        d_a: raw_a.normalized(),
        d_b: raw_b.normalized(),
        tree_a,
        z_a,
        w_a,
        tree_b,
        z_b,
        w_b,
        trace: pi.trace,
        converged: pi.converged,
        meta_scores: Vec::new(),
        best_meta: 0,
        timings,
    })
}

/// Bases and systems for both sides of a pair of trees.
pub fn side_systems(
    tree_a: &Tree,
    z_a: &TreeParameter,
    tree_b: &Tree,
    z_b: &TreeParameter,
    hists: &Histograms,
    cfg: &FitConfig,
) -> Result<(SideSystem, SideSystem)> {
    let basis_a = choose_basis(tree_a, z_a, cfg)?;
    let basis_b = choose_basis(tree_b, z_b, cfg)?;
    Ok((
        SideSystem::new(&basis_a, &hists.rows, z_b)?,
        SideSystem::new(&basis_b, &hists.cols, z_a)?,
    ))
}

/// Repeated fits where each run rebuilds both trees from the distances
/// learned by the previous one. Returns the best-scoring run with the
/// scores of all runs attached.
///
/// `evaluator` defaults to [`FitResult::default_score`].
pub fn meta_fit(
    x: &DataMatrix,
    cfg: &FitConfig,
    evaluator: Option<&dyn Fn(&FitResult) -> f64>,
) -> Result<FitResult> {
    cfg.validate()?;
    let score = |r: &FitResult| match evaluator {
        Some(f) => f(r),
        None => r.default_score(),
    };
    let mut current = fit(x, cfg, None)?;
    let mut scores = vec![score(&current)];
    let mut best = current.clone();
    let mut best_index = 0;
    for t in 1..cfg.meta_iters {
        current = fit(x, cfg, Some((&current.d_a, &current.d_b)))?;
        let s = score(&current);
        log::info!("meta iteration {}: score {s}", t + 1);
        if s > scores[best_index] {
            best_index = t;
            best = current.clone();
        }
        scores.push(s);
    }
    best.meta_scores = scores;
    best.best_meta = best_index;
    Ok(best)
}

//! Acceptance suite. Runs every criterion in sequence (timings are not
//! disturbed by concurrent tests), prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.
//!
//! Numeric arguments restrict the run to those criteria:
//! `cargo test --test acceptance -- 5 8`.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treewsv::baselines::{exact_wasserstein, full_wsv, WsvResult};
use treewsv::evaluation::{frobenius_error, silhouette_asw};
use treewsv::io;
use treewsv::nnls::{EnteringRule, NnlsOptions, NnlsSystem};
use treewsv::path_basis::{basis_by_factorization, basis_recursive};
use treewsv::solver::{
    fit, init_weights, meta_fit, power_iterate, side_systems, FitConfig, FitResult,
};
use treewsv::toy::toy_torus;
use treewsv::twd::twd;
use treewsv::types::{normalize, permute};
use treewsv::{tree_parameter, DataMatrix, DistanceMatrix, Tree, WeightVector};

const TWD_LP_TOL: f64 = 1e-9;
const TWD_LP_TREES: usize = 500;
const TWD_LP_MAX_LEAVES: usize = 12;
const RANK_TREES: usize = 200;
const RANK_DEGREE_TWO_TREES: usize = 50;
const RANK_MAX_LEAVES: usize = 16;
const STRUCTURE_TIME_LIMIT: Duration = Duration::from_secs(60);
const NNLS_SYSTEMS: usize = 100;
const NNLS_TOL: f64 = 1e-8;
const TOY_N: usize = 80;
const TOY_M: usize = 60;
const TOY_SIGMA: f64 = 0.01;
const TOY_EPSILON: f64 = 1e-6;
const TOY_MAX_ITERATIONS: usize = 10;
const TOY_ITERATION_CAP: usize = 100;
const BASELINE_ITERATIONS: usize = 100;
const ORDERING_SEEDS: [u64; 3] = [0, 1, 2];
const SPEED_RATIO: f64 = 0.10;
const SCALING_SIZES: [usize; 4] = [250, 500, 1000, 2000];
const SCALING_FEATURES: usize = 40;
const SCALING_REPEATS: usize = 3;
const SCALING_ITERATIONS: usize = 3;
const SCALING_R2: f64 = 0.95;
const ASW_RANDOM_POINTS: usize = 200;
const ASW_RANDOM_SEEDS: u64 = 20;
const ASW_RANDOM_BOUND: f64 = 0.1;
const META_ITERATIONS: usize = 5;
const DETERMINISM_THREADS: [usize; 3] = [1, 2, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Shared expensive inputs: the unpermuted toy matrix and its full-WSV
/// baseline with the time it took.
struct Toy {
    x: DataMatrix,
    baseline: WsvResult,
    baseline_secs: f64,
}

impl Toy {
    fn new() -> Self {
        let x = toy_torus(TOY_N, TOY_M, TOY_SIGMA, true).unwrap();
        let clock = Instant::now();
        let baseline = full_wsv(&x, BASELINE_ITERATIONS, TOY_EPSILON).unwrap();
        let baseline_secs = clock.elapsed().as_secs_f64();
        Self {
            x,
            baseline,
            baseline_secs,
        }
    }
}

fn main() {
    let mut toy: Option<Toy> = None;
    let criteria: Vec<(&str, Box<dyn FnMut(&mut Option<Toy>) -> Outcome>)> = vec![
        ("tree-Wasserstein equals exact transport", Box::new(|_| twd_matches_lp())),
        ("path matrix rank law", Box::new(|_| rank_law())),
        ("recursive basis", Box::new(|_| recursive_basis())),
        ("non-negative least squares", Box::new(|_| nnls_uniqueness())),
        ("toy convergence", Box::new(|_| toy_convergence())),
        ("accuracy ordering", Box::new(|t| accuracy_ordering(t.get_or_insert_with(Toy::new)))),
        ("speed ordering", Box::new(|t| speed_ordering(t.get_or_insert_with(Toy::new)))),
        ("per-iteration scaling", Box::new(|_| complexity_scaling())),
        ("silhouette and meta scoring", Box::new(|_| silhouette_and_meta())),
        ("determinism", Box::new(|_| determinism())),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (idx, (name, mut check)) in criteria.into_iter().enumerate() {
        let n = idx + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let clock = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| check(&mut toy)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {verdict} {name}: {} [{:.1}s]",
            outcome.detail,
            clock.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

fn random_weights(rng: &mut impl Rng, k: usize) -> WeightVector {
    WeightVector::new((0..k).map(|_| rng.random_range(0.05..2.0)).collect()).unwrap()
}

fn twd_matches_lp() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for trial in 0..TWD_LP_TREES {
        let t = random_valid_tree(&mut rng, TWD_LP_MAX_LEAVES);
        let z = tree_parameter(&t);
        let w = random_weights(&mut rng, z.n_edges());
        let sparse = trial % 2 == 1;
        let x = random_histogram(&mut rng, t.n_leaves(), sparse);
        let y = random_histogram(&mut rng, t.n_leaves(), sparse);
        let lp = exact_wasserstein(&x, &y, &z.leaf_distances(&w)).unwrap();
        worst = worst.max((lp - twd(&w, &z, &x, &y).unwrap()).abs());
    }
    let secs = clock.elapsed();
    Outcome::new(
        worst <= TWD_LP_TOL && secs < STRUCTURE_TIME_LIMIT,
        format!("{TWD_LP_TREES} trees, max |twd - lp| = {worst:.2e} (tol {TWD_LP_TOL:.0e})"),
    )
}

fn rank_trees(seed: u64, count: usize, root: Option<usize>) -> Vec<Tree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(3..=RANK_MAX_LEAVES);
            let k = match root {
                Some(k) => k,
                None => rng.random_range(3..=n.min(6)),
            };
            random_tree(&mut rng, n, k)
        })
        .collect()
}

fn rank_law() -> Outcome {
    let clock = Instant::now();
    let mut bad = 0;
    for t in rank_trees(2002, RANK_TREES, None) {
        let z = tree_parameter(&t);
        if bareiss_rank(&full_path_matrix(&t, &z)) != t.n_nodes() - 1 {
            bad += 1;
        }
    }
    let mut bad_two = 0;
    for t in rank_trees(2003, RANK_DEGREE_TWO_TREES, Some(2)) {
        let z = tree_parameter(&t);
        if bareiss_rank(&full_path_matrix(&t, &z)) != t.n_nodes() - 2 {
            bad_two += 1;
        }
    }
    let secs = clock.elapsed();
    Outcome::new(
        bad == 0 && bad_two == 0 && secs < STRUCTURE_TIME_LIMIT,
        format!(
            "rank N-1 failed on {bad}/{RANK_TREES} trees, rank N-2 failed on {bad_two}/{RANK_DEGREE_TWO_TREES} degree-2-root trees"
        ),
    )
}

fn recursive_basis() -> Outcome {
    let clock = Instant::now();
    let mut bad = Vec::new();
    for (i, t) in rank_trees(2002, RANK_TREES, None).into_iter().enumerate() {
        let z = tree_parameter(&t);
        let edges = t.n_nodes() - 1;
        let (b, stats) = basis_recursive(&t, &z, Some(i as u64)).unwrap();
        let u: Vec<Vec<i128>> = b.pairs().iter().map(|&(p, q)| path_column(&t, &z, p, q)).collect();
        let full = full_path_matrix(&t, &z);
        let mut joint = full.clone();
        joint.extend(u.iter().cloned());
        let ok = b.len() == edges
            && bareiss_rank(&u) == edges
            && bareiss_rank(&joint) == bareiss_rank(&full)
            && stats.calls <= t.n_nodes() - t.n_leaves();
        if !ok {
            bad.push(i);
        }
    }
    let secs = clock.elapsed();
    Outcome::new(
        bad.is_empty() && secs < STRUCTURE_TIME_LIMIT,
        format!("{}/{RANK_TREES} trees violated size, invertibility, span or call bound", bad.len()),
    )
}

fn path_system(rng: &mut impl Rng) -> NnlsSystem {
    let t = random_valid_tree(rng, 14);
    let z = tree_parameter(&t);
    let basis = basis_by_factorization(&z, 500).unwrap();
    let cols: Vec<&[usize]> = (0..basis.len()).map(|p| basis.column(p)).collect();
    NnlsSystem::from_indicator_columns(z.n_edges(), &cols)
}

fn kkt_violation(sys: &NnlsSystem, w: &[f64], b: &[f64]) -> f64 {
    let g = sys.gradient(w, b);
    w.iter()
        .zip(&g)
        .map(|(&wk, &gk)| (-wk).max(-gk).max((wk * gk).abs()))
        .fold(0.0, f64::max)
}

fn nnls_uniqueness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    let lowest = NnlsOptions {
        entering: EnteringRule::LowestIndex,
        warm_start: false,
        ..NnlsOptions::default()
    };
    let (mut recovery, mut kkt, mut disagreement) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..NNLS_SYSTEMS {
        let sys = path_system(&mut rng);
        let planted: Vec<f64> = (0..sys.n_unknowns())
            .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.1..3.0) })
            .collect();
        let b = (sys.u().transpose() * DVector::from_column_slice(&planted)).as_slice().to_vec();
        let w = sys.solve(&b).unwrap().w;
        recovery = w.iter().zip(&planted).map(|(a, c)| (a - c).abs()).fold(recovery, f64::max);
        kkt = kkt.max(kkt_violation(&sys, &w, &b));

        // infeasible right-hand side: constraints become active
        let noisy: Vec<f64> = b.iter().map(|v| v + rng.random_range(-1.5..0.5)).collect();
        let first = sys.solve(&noisy).unwrap().w;
        let second = sys.solve_with(&noisy, &lowest).unwrap().w;
        kkt = kkt.max(kkt_violation(&sys, &first, &noisy));
        kkt = kkt.max(kkt_violation(&sys, &second, &noisy));
        disagreement = first.iter().zip(&second).map(|(a, c)| (a - c).abs()).fold(disagreement, f64::max);
    }
    Outcome::new(
        recovery <= NNLS_TOL && kkt <= NNLS_TOL && disagreement <= NNLS_TOL,
        format!(
            "{NNLS_SYSTEMS} systems: recovery {recovery:.1e}, KKT {kkt:.1e}, orderings {disagreement:.1e} (tol {NNLS_TOL:.0e})"
        ),
    )
}

fn toy_config(k: usize, seed: u64) -> FitConfig {
    FitConfig {
        k_children: k,
        seed,
        inner_iters: TOY_ITERATION_CAP,
        epsilon: TOY_EPSILON,
        meta_iters: 1,
        ..FitConfig::default()
    }
}

fn toy_convergence() -> Outcome {
    let x = toy_torus(TOY_N, TOY_M, TOY_SIGMA, true).unwrap();
    let p = permute(&x, 0);
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [3, 4] {
        let r = fit(&p.matrix, &toy_config(k, 0), None).unwrap();
        let ok = r.converged && r.iterations() < TOY_MAX_ITERATIONS;
        pass &= ok;
        parts.push(format!(
            "k={k}: {} iterations, converged {}, change after 10 = {:.1e}",
            r.iterations(),
            r.converged,
            r.trace.get(TOY_MAX_ITERATIONS - 1).copied().unwrap_or(0.0)
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

/// Mean Frobenius error of the learned sample metric against the baseline
/// over the permutation seeds.
fn mean_error(toy: &Toy, cfg_for: impl Fn(u64) -> FitConfig) -> f64 {
    let errors: Vec<f64> = ORDERING_SEEDS
        .iter()
        .map(|&s| {
            let p = permute(&toy.x, s);
            let r = fit(&p.matrix, &cfg_for(s), None).unwrap();
            frobenius_error(&r.d_a, &toy.baseline.d_a.permuted(&p.rows)).unwrap()
        })
        .collect();
    errors.iter().sum::<f64>() / errors.len() as f64
}

fn accuracy_ordering(toy: &Toy) -> Outcome {
    let three = mean_error(toy, |s| toy_config(3, s));
    let ten = mean_error(toy, |s| toy_config(10, s));
    let two = mean_error(toy, |s| FitConfig {
        min_root_degree: 2,
        allow_rank_deficient: true,
        ..toy_config(2, s)
    });
    Outcome::new(
        three <= ten && three <= two,
        format!("mean error k=3 {three:.3}, k=10 {ten:.3}, binary-root k=2 {two:.3}"),
    )
}

fn speed_ordering(toy: &Toy) -> Outcome {
    let p = permute(&toy.x, 0);
    let clock = Instant::now();
    fit(&p.matrix, &toy_config(3, 0), None).unwrap();
    let tree_secs = clock.elapsed().as_secs_f64();
    let ratio = tree_secs / toy.baseline_secs;
    Outcome::new(
        ratio <= SPEED_RATIO,
        format!(
            "tree fit {tree_secs:.3}s vs full baseline {:.1}s, ratio {ratio:.4} (bound {SPEED_RATIO})",
            toy.baseline_secs
        ),
    )
}

/// Coefficient of determination of the least-squares cubic through `(x, y)`.
fn cubic_r2(x: &[f64], y: &[f64]) -> f64 {
    let scale = x.iter().cloned().fold(0.0, f64::max);
    let a = DMatrix::from_fn(x.len(), 4, |i, p| (x[i] / scale).powi(p as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
    let fitted = &a * coef;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = (fitted - &b).iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    1.0 - ss_res / ss_tot
}

fn complexity_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let (mut sizes, mut times) = (Vec::new(), Vec::new());
    let mut means = Vec::new();
    for &n in &SCALING_SIZES {
        let x = DataMatrix::new(DMatrix::from_fn(n, SCALING_FEATURES, |_, _| {
            rng.random_range(0.01..1.0)
        }))
        .unwrap();
        let hists = normalize(&x);
        let ta = Tree::star(n).unwrap();
        let tb = Tree::star(SCALING_FEATURES).unwrap();
        let (za, zb) = (tree_parameter(&ta), tree_parameter(&tb));
        let cfg = FitConfig {
            inner_iters: SCALING_ITERATIONS,
            epsilon: f64::MIN_POSITIVE,
            ..FitConfig::default()
        };
        let (sa, sb) = side_systems(&ta, &za, &tb, &zb, &hists, &cfg).unwrap();
        let mut total = 0.0;
        for rep in 0..SCALING_REPEATS {
            let init = init_weights(za.n_edges(), zb.n_edges(), rep as u64);
            let clock = Instant::now();
            let r = power_iterate(&sa, &sb, init, &cfg).unwrap();
            let per = clock.elapsed().as_secs_f64() / r.trace.len() as f64;
            sizes.push(n as f64);
            times.push(per);
            total += per;
        }
        means.push(format!("n={n}: {:.2e}s", total / SCALING_REPEATS as f64));
    }
    let r2 = cubic_r2(&sizes, &times);
    Outcome::new(
        r2 > SCALING_R2,
        format!("per-iteration {}; cubic fit R^2 {r2:.4} (bound {SCALING_R2})", means.join(", ")),
    )
}

fn uniform_metric(rng: &mut impl Rng, n: usize) -> DistanceMatrix {
    let upper: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
    DistanceMatrix::from_pairwise(n, |i, j| upper[i.min(j) * n + i.max(j)]).unwrap()
}

fn silhouette_and_meta() -> Outcome {
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let separated =
        DistanceMatrix::from_pairwise(40, |i, j| if labels[i] == labels[j] { 0.0 } else { 1.0 })
            .unwrap();
    let perfect = silhouette_asw(&separated, &labels).unwrap();

    let mut worst: f64 = 0.0;
    for seed in 0..ASW_RANDOM_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = uniform_metric(&mut rng, ASW_RANDOM_POINTS);
        let random: Vec<usize> = (0..ASW_RANDOM_POINTS).map(|_| rng.random_range(0..3)).collect();
        worst = worst.max(silhouette_asw(&d, &random).unwrap().abs());
    }

    // arcs of the torus as labels, carried through the permutation
    let p = permute(&toy_torus(TOY_N, TOY_M, TOY_SIGMA, true).unwrap(), 0);
    let arcs: Vec<usize> = p.rows.0.iter().map(|&i| i * 4 / TOY_N).collect();
    let score = |r: &FitResult| silhouette_asw(&r.d_a, &arcs).unwrap();
    let cfg = FitConfig {
        meta_iters: META_ITERATIONS,
        ..toy_config(3, 0)
    };
    let r = meta_fit(&p.matrix, &cfg, Some(&score)).unwrap();
    let argmax = r
        .meta_scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > r.meta_scores[best] { i } else { best });
    let consistent = r.meta_scores.len() == META_ITERATIONS
        && r.best_meta == argmax
        && score(&r) == r.meta_scores[r.best_meta];

    Outcome::new(
        perfect == 1.0 && worst < ASW_RANDOM_BOUND && consistent,
        format!(
            "separated ASW {perfect}, random max |ASW| {worst:.4} over {ASW_RANDOM_SEEDS} seeds, meta best {} of scores {:?}",
            r.best_meta,
            r.meta_scores.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let x = permute(&toy_torus(TOY_N, TOY_M, TOY_SIGMA, true).unwrap(), 5).matrix;
    let small = toy_torus(16, 12, 0.05, true).unwrap();
    let cfg = FitConfig {
        meta_iters: 3,
        ..toy_config(3, 7)
    };
    let root = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (run, &threads) in DETERMINISM_THREADS.iter().chain([1usize].iter()).enumerate() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let dir = root.path().join(format!("run{run}"));
        pool.install(|| {
            let r = meta_fit(&x, &cfg, None).unwrap();
            io::save_result(&r, &dir.join("fit")).unwrap();
            let b = full_wsv(&small, 5, 1e-12).unwrap();
            io::save_baseline(&b, &dir.join("baseline")).unwrap();
        });
        let mut files = files_in(&dir.join("fit"));
        files.extend(files_in(&dir.join("baseline")));
        runs.push(files);
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    Outcome::new(
        identical,
        format!(
            "{} result files compared across thread counts {:?} and a repeat run",
            runs[0].len(),
            DETERMINISM_THREADS
        ),
    )
}

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use treewsv::baselines::full_wsv;
use treewsv::evaluation::{frobenius_error, silhouette_asw};
use treewsv::io::{self, MatrixFormat, PermutationFile};
use treewsv::solver::{meta_fit, BasisMode, FitConfig, FitResult, UpdateOrder};
use treewsv::toy::toy_torus;
use treewsv::types::{permute, DataMatrix, Permutation};
use treewsv::DistanceMatrix;

mod config;

const MANIFEST: &str = "manifest.json";
const SUBCOMMANDS: &[&str] = &["gen-toy", "fit", "baseline", "eval"];

/// Tree-Wasserstein singular vectors: unsupervised ground metrics between
/// the samples and the features of a non-negative data matrix.
#[derive(Parser, Debug)]
#[command(name = "treewsv", version, about)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the periodic toy matrix on a 1-D torus.
    #[command(args_override_self = true)]
    GenToy(GenToyArgs),
    /// Learn sample and feature metrics with tree-Wasserstein singular vectors.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Full Wasserstein singular vectors with exact transport (small inputs).
    #[command(args_override_self = true)]
    Baseline(BaselineArgs),
    /// Compare a learned metric against a reference metric and/or labels.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenToyArgs {
    /// Number of samples (rows).
    #[arg(long, default_value_t = 80)]
    n: usize,
    /// Number of features (columns).
    #[arg(long, default_value_t = 60)]
    m: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Add the half-magnitude bump shifted by half the torus.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    second_mode: bool,
    /// Shuffle rows and columns with this seed.
    #[arg(long)]
    permute_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum InputFormat {
    Csv,
    Mtx,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BasisArg {
    Auto,
    /// Exact elimination over all pairs (alias of the factorization basis).
    Svd,
    Recursive,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OrderArg {
    AFirst,
    BFirst,
}

#[derive(Args, Debug, Serialize)]
struct InputArgs {
    /// Data matrix: CSV, or Matrix Market when the extension is `.mtx`.
    #[arg(long)]
    input: PathBuf,
    /// Override the format guessed from the extension.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
}

impl InputArgs {
    fn load(&self) -> Result<DataMatrix> {
        let format = match self.format {
            Some(InputFormat::Csv) => MatrixFormat::Csv,
            Some(InputFormat::Mtx) => MatrixFormat::MatrixMarket,
            None => MatrixFormat::from_path(&self.input),
        };
        let loaded = io::load_matrix(&self.input, format)
            .with_context(|| format!("loading {}", self.input.display()))?;
        Ok(loaded.matrix)
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Children per internal node; at least 3.
    #[arg(long, default_value_t = 4)]
    k_children: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 20)]
    inner_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    meta_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = BasisArg::Auto)]
    basis: BasisArg,
    #[arg(long, value_enum, default_value_t = OrderArg::AFirst)]
    update_order: OrderArg,
    /// Contract internal edges whose learned weight is at most this.
    #[arg(long, default_value_t = 0.0)]
    merge_tol: f64,
    /// One label per sample; meta-iterations are then scored by silhouette
    /// width of the sample metric.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Also write the distance matrices in the raw binary format.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BaselineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Side {
    Samples,
    Features,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Result directory or distance CSV.
    #[arg(long)]
    learned: PathBuf,
    /// Result directory or distance CSV to compare against.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// One label per point of the evaluated side.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Side::Samples)]
    side: Side,
    /// Write the JSON report here as well as to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures that are the caller's fault rather than the data's.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<treewsv::Error>() {
            return if e.is_io() {
                4
            } else if e.is_numerical() {
                3
            } else {
                2
            };
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    2
}

/// The error chain on one line, skipping causes already spelled out by the
/// message wrapping them.
fn report(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let (args, config_path) = match config::expand(raw, SUBCOMMANDS) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}", report(&e));
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, config_path) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", report(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli, config_path: Option<PathBuf>) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!(Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = RunInfo {
        threads: cli.threads,
        config: config_path,
    };
    match &cli.command {
        Command::GenToy(a) => gen_toy(a, &ctx),
        Command::Fit(a) => fit(a, &ctx),
        Command::Baseline(a) => baseline(a, &ctx),
        Command::Eval(a) => eval(a),
    }
}

struct RunInfo {
    threads: Option<usize>,
    config: Option<PathBuf>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    flags: &impl Serialize,
    ctx: &RunInfo,
    extra: Value,
) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": ctx.threads,
        "config": ctx.config,
        "flags": flags,
        "results": extra,
    });
    io::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(())
}

fn gen_toy(a: &GenToyArgs, ctx: &RunInfo) -> Result<()> {
    let x = toy_torus(a.n, a.m, a.sigma, a.second_mode)?;
    let (x, rows, cols) = match a.permute_seed {
        Some(seed) => {
            let p = permute(&x, seed);
            (p.matrix, p.rows, p.cols)
        }
        None => (x, Permutation::identity(a.n), Permutation::identity(a.m)),
    };
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    let data = a.out.join("toy.csv");
    io::write_matrix_csv(&data, x.values())?;
    io::write_json(&a.out.join("permutation.json"), &PermutationFile::new(&rows, &cols))?;
    write_manifest(&a.out, "gen-toy", a, ctx, json!({ "data": data }))?;
    println!("wrote {} ({}x{})", data.display(), a.n, a.m);
    Ok(())
}

fn fit_config(a: &FitArgs) -> Result<FitConfig> {
    if a.k_children < 3 {
        bail!(Usage(format!(
            "--k-children must be at least 3 (got {}): the sample tree root needs degree >= 3 \
             for the weight system to have a unique solution",
            a.k_children
        )));
    }
    let cfg = FitConfig {
        inner_iters: a.inner_iters,
        epsilon: a.epsilon,
        meta_iters: a.meta_iters,
        k_children: a.k_children,
        max_depth: a.max_depth,
        seed: a.seed,
        basis_mode: match a.basis {
            BasisArg::Auto => BasisMode::Auto,
            BasisArg::Svd => BasisMode::Factorization,
            BasisArg::Recursive => BasisMode::Recursive,
        },
        update_order: match a.update_order {
            OrderArg::AFirst => UpdateOrder::AFirst,
            OrderArg::BFirst => UpdateOrder::BFirst,
        },
        merge_tol: a.merge_tol,
        ..FitConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn fit(a: &FitArgs, ctx: &RunInfo) -> Result<()> {
    let cfg = fit_config(a)?;
    let x = a.input.load()?;
    let labels = match &a.labels {
        Some(p) => Some(io::load_labels(p, x.n_samples())?),
        None => None,
    };
    let clock = Instant::now();
    let r = match &labels {
        Some(l) => {
            let score = |r: &FitResult| silhouette_asw(&r.d_a, l).unwrap_or(f64::NEG_INFINITY);
            // surface an unusable label set before spending time on fits
            silhouette_asw(&DistanceMatrix::zeros(l.len()), l)?;
            meta_fit(&x, &cfg, Some(&score))?
        }
        None => meta_fit(&x, &cfg, None)?,
    };
    let wall = clock.elapsed().as_secs_f64();
    let mut outputs = io::save_result(&r, &a.out)?;
    if a.binary {
        let pa = a.out.join("distance_samples.bin");
        let pb = a.out.join("distance_features.bin");
        io::write_distance_binary(&pa, &r.d_a)?;
        io::write_distance_binary(&pb, &r.d_b)?;
        outputs.extend([pa, pb]);
    }
    let extra = json!({
        "outputs": outputs,
        "iterations": r.iterations(),
        "converged": r.converged,
        "meta_scores": r.meta_scores,
        "best_meta": r.best_meta,
        "score": if labels.is_some() { "silhouette" } else { "convergence" },
        "timings": r.timings,
        "wall_clock": wall,
    });
    write_manifest(&a.out, "fit", a, ctx, extra)?;
    println!(
        "fit: {} inner iterations, converged {}, best meta-iteration {} of {}",
        r.iterations(),
        r.converged,
        r.best_meta + 1,
        r.meta_scores.len()
    );
    Ok(())
}

fn baseline(a: &BaselineArgs, ctx: &RunInfo) -> Result<()> {
    let x = a.input.load()?;
    let clock = Instant::now();
    let r = full_wsv(&x, a.iters, a.epsilon)?;
    let wall = clock.elapsed().as_secs_f64();
    let outputs = io::save_baseline(&r, &a.out)?;
    let extra = json!({
        "outputs": outputs,
        "iterations": r.trace.len(),
        "converged": r.converged,
        "wall_clock": wall,
    });
    write_manifest(&a.out, "baseline", a, ctx, extra)?;
    println!(
        "baseline: {} iterations, converged {}",
        r.trace.len(),
        r.converged
    );
    Ok(())
}

/// A directory resolves to the distance file of `side` inside it.
fn distance_path(p: &Path, side: Side) -> PathBuf {
    if p.is_dir() {
        p.join(match side {
            Side::Samples => io::DISTANCE_SAMPLES,
            Side::Features => io::DISTANCE_FEATURES,
        })
    } else {
        p.to_owned()
    }
}

fn wall_clock(p: &Path) -> Option<f64> {
    let dir = if p.is_dir() { p } else { p.parent()? };
    let m: Value = io::read_json(&dir.join(MANIFEST)).ok()?;
    m["results"]["wall_clock"].as_f64()
}

fn eval(a: &EvalArgs) -> Result<()> {
    if a.reference.is_none() && a.labels.is_none() {
        bail!(Usage("nothing to evaluate: give --reference and/or --labels".into()));
    }
    let learned = io::read_distance_csv(&distance_path(&a.learned, a.side))?;
    let mut report = json!({
        "learned": a.learned,
        "side": a.side,
        "wall_clock_learned": wall_clock(&a.learned),
    });
    let reference = match &a.reference {
        Some(p) => Some(io::read_distance_csv(&distance_path(p, a.side))?),
        None => None,
    };
    if let (Some(p), Some(d)) = (&a.reference, &reference) {
        report["reference"] = json!(p);
        report["frobenius"] = json!(frobenius_error(&learned, d)?);
        report["wall_clock_reference"] = json!(wall_clock(p));
    }
    if let Some(p) = &a.labels {
        let labels = io::load_labels(p, learned.len())?;
        report["asw"] = json!(silhouette_asw(&learned, &labels)?);
        if let Some(d) = &reference {
            report["asw_reference"] = json!(silhouette_asw(d, &labels)?);
        }
    }
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        io::write_json(out, &report)?;
    }
    Ok(())
}

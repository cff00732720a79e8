//! Reading data matrices and writing or reading result artifacts.
//!
//! Distance matrices are written as headerless CSV with 17 significant
//! digits, which round-trips every `f64` exactly. A raw binary layout is
//! available for large matrices: the magic `TWSVDIST`, the row and column
//! counts as little-endian `u64`, then the entries row-major as
//! little-endian `f64`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::WsvResult;
use crate::error::{Error, Result};
use crate::solver::FitResult;
use crate::tree::{tree_parameter, Tree, TreeParameter};
use crate::types::{DataMatrix, DistanceMatrix, Permutation, WeightVector};

pub const DISTANCE_SAMPLES: &str = "distance_samples.csv";
pub const DISTANCE_FEATURES: &str = "distance_features.csv";
pub const WEIGHTS_A: &str = "weights_a.json";
pub const WEIGHTS_B: &str = "weights_b.json";
pub const TRACE: &str = "trace.json";

const BINARY_MAGIC: &[u8; 8] = b"TWSVDIST";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    MatrixMarket,
}

impl MatrixFormat {
    /// `.mtx` means Matrix Market, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("mtx") => MatrixFormat::MatrixMarket,
            _ => MatrixFormat::Csv,
        }
    }
}

/// A loaded data matrix with the names found in the file, if any.
#[derive(Debug, Clone)]
pub struct LoadedMatrix {
    pub matrix: DataMatrix,
    pub row_names: Option<Vec<String>>,
    pub col_names: Option<Vec<String>>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<LoadedMatrix> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::MatrixMarket => load_matrix_market(path),
    }
}

/// Checks entries in file coordinates (1-based) before building the matrix.
fn check_entries(values: &DMatrix<f64>) -> Result<()> {
    for i in 0..values.nrows() {
        for k in 0..values.ncols() {
            let v = values[(i, k)];
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i + 1, col: k + 1 });
            }
            if v < 0.0 {
                return Err(Error::NegativeValue { row: i + 1, col: k + 1 });
            }
        }
    }
    Ok(())
}

/// CSV with an optional header row (detected by a non-numeric field) and an
/// optional leading column of row names (detected by a non-numeric first
/// field in the data rows).
pub fn load_csv(path: &Path) -> Result<LoadedMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut records: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(records.len() + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec.iter().map(str::to_owned).collect()));
    }
    if records.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        });
    }
    let has_header = records[0].1.iter().any(|f| parse_number(f).is_none());
    let header = if has_header {
        Some(records.remove(0))
    } else {
        None
    };
    let width = records
        .first()
        .map(|r| r.1.len())
        .or(header.as_ref().map(|h| h.1.len()))
        .unwrap_or(0);
    for (line, fields) in records.iter() {
        if fields.len() != width {
            return Err(Error::Parse {
                line: *line,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
    }
    let has_row_names =
        !records.is_empty() && records.iter().all(|r| parse_number(&r.1[0]).is_none());
    let skip = usize::from(has_row_names);
    let n = records.len();
    let m = width.saturating_sub(skip);
    let mut values = DMatrix::zeros(n, m);
    for (i, (line, fields)) in records.iter().enumerate() {
        for (k, f) in fields[skip..].iter().enumerate() {
            values[(i, k)] = parse_number(f).ok_or_else(|| Error::Parse {
                line: *line,
                msg: format!("field {} is not a number: {f:?}", k + skip + 1),
            })?;
        }
    }
    check_entries(&values)?;
    let col_names = header.map(|(line, h)| {
        if h.len() == m + skip {
            Ok(h[skip..].to_vec())
        } else if h.len() == m {
            Ok(h)
        } else {
            Err(Error::Parse {
                line,
                msg: format!("header has {} fields for {m} columns", h.len()),
            })
        }
    });
    let col_names = col_names.transpose()?;
    let row_names = has_row_names.then(|| records.iter().map(|r| r.1[0].clone()).collect());
    Ok(LoadedMatrix {
        matrix: DataMatrix::new(values)?,
        row_names,
        col_names,
    })
}

/// Matrix Market `coordinate` (duplicates summed; `general` or
/// `symmetric`) or dense `array` files with real or integer entries.
pub fn load_matrix_market(path: &Path) -> Result<LoadedMatrix> {
    let reader = BufReader::new(open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, banner) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let banner = banner.map_err(|e| Error::io(path, e))?.to_ascii_lowercase();
    let tokens: Vec<&str> = banner.split_whitespace().collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            msg: "missing %%MatrixMarket matrix banner".into(),
        });
    }
    let coordinate = match tokens[2] {
        "coordinate" => true,
        "array" => false,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported layout {other}"),
            })
        }
    };
    if !matches!(tokens[3], "real" | "integer" | "double") {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported field type {}", tokens[3]),
        });
    }
    let symmetric = match tokens[4] {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported symmetry {other}"),
            })
        }
    };

    let mut data = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        data.push((idx + 1, t.to_owned()));
    }
    let mut iter = data.into_iter();
    let (size_line, size) = iter.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing size line".into(),
    })?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: size_line,
            msg: e.to_string(),
        })?;
    let expected = if coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(Error::Parse {
            line: size_line,
            msg: format!("size line needs {expected} integers"),
        });
    }
    let (n, m) = (dims[0], dims[1]);
    let mut values = DMatrix::zeros(n, m);
    let bad = |line: usize, msg: String| Error::Parse { line, msg };
    if coordinate {
        let mut count = 0;
        for (line, text) in iter {
            let f: Vec<&str> = text.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(line, format!("expected 3 fields, found {}", f.len())));
            }
            let i: usize = f[0].parse().map_err(|_| bad(line, "bad row index".into()))?;
            let k: usize = f[1].parse().map_err(|_| bad(line, "bad column index".into()))?;
            let v = parse_number(f[2]).ok_or_else(|| bad(line, "bad value".into()))?;
            if i == 0 || k == 0 || i > n || k > m {
                return Err(bad(line, format!("index ({i},{k}) outside {n}x{m}")));
            }
            if v < 0.0 {
                return Err(Error::NegativeValue { row: i, col: k });
            }
            values[(i - 1, k - 1)] += v;
            if symmetric && i != k {
                values[(k - 1, i - 1)] += v;
            }
            count += 1;
        }
        if count != dims[2] {
            return Err(bad(size_line, format!("declared {} entries, found {count}", dims[2])));
        }
    } else {
        // column-major dense listing
        let mut pos = 0;
        for (line, text) in iter {
            let v = parse_number(&text).ok_or_else(|| bad(line, "bad value".into()))?;
            if pos >= n * m {
                return Err(bad(line, "too many entries".into()));
            }
            values[(pos % n, pos / n)] = v;
            pos += 1;
        }
        if pos != n * m {
            return Err(bad(size_line, format!("expected {} entries, found {pos}", n * m)));
        }
    }
    check_entries(&values)?;
    Ok(LoadedMatrix {
        matrix: DataMatrix::new(values)?,
        row_names: None,
        col_names: None,
    })
}

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Headerless numeric CSV with 17 significant digits.
pub fn write_matrix_csv(path: &Path, values: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    let mut line = String::new();
    for i in 0..values.nrows() {
        line.clear();
        for k in 0..values.ncols() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format_value(values[(i, k)]));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a headerless numeric CSV as a dense matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                parse_number(f).ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    msg: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(n, m, |i, k| rows[i][k]))
}

pub fn write_distance_csv(path: &Path, d: &DistanceMatrix) -> Result<()> {
    write_matrix_csv(path, d.values())
}

pub fn read_distance_csv(path: &Path) -> Result<DistanceMatrix> {
    DistanceMatrix::new(read_matrix_csv(path)?)
}

pub fn write_distance_binary(path: &Path, d: &DistanceMatrix) -> Result<()> {
    let mut w = create(path)?;
    let v = d.values();
    let mut buf = Vec::with_capacity(24 + 8 * v.len());
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(v.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(v.ncols() as u64).to_le_bytes());
    for i in 0..v.nrows() {
        for k in 0..v.ncols() {
            buf.extend_from_slice(&v[(i, k)].to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_distance_binary(path: &Path) -> Result<DistanceMatrix> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        line: 0,
        msg: msg.to_owned(),
    };
    if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
        return Err(bad("missing TWSVDIST header"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (n, m) = (word(8) as usize, word(16) as usize);
    if bytes.len() != 24 + 8 * n * m {
        return Err(bad("payload length does not match dimensions"));
    }
    let values = DMatrix::from_fn(n, m, |i, k| {
        let at = 24 + 8 * (i * m + k);
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
    });
    DistanceMatrix::new(values)
}

/// Serialized tree and its learned edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    /// Non-root node of each edge, in weight order.
    pub edge_nodes: Vec<usize>,
    pub weights: Vec<f64>,
    /// Parent of every node (`null` for the root).
    pub parent: Vec<Option<usize>>,
    /// Node id of every leaf, in data order.
    pub leaves: Vec<usize>,
}

impl WeightsFile {
    pub fn new(tree: &Tree, z: &TreeParameter, w: &WeightVector) -> Self {
        Self {
            edge_nodes: z.edge_nodes().to_vec(),
            weights: w.0.clone(),
            parent: tree.parents().to_vec(),
            leaves: tree.leaves().to_vec(),
        }
    }

    /// Rebuilds and validates the tree, its parameter and the weights.
    pub fn restore(&self) -> Result<(Tree, TreeParameter, WeightVector)> {
        let tree = Tree::new(self.parent.clone(), self.leaves.clone())?;
        let z = tree_parameter(&tree);
        if z.edge_nodes() != self.edge_nodes.as_slice() {
            return Err(Error::Invalid(
                "edge order does not match the tree".into(),
            ));
        }
        let w = WeightVector::new(self.weights.clone())?;
        if w.len() != z.n_edges() {
            return Err(Error::DimensionMismatch {
                expected: z.n_edges(),
                got: w.len(),
            });
        }
        Ok((tree, z, w))
    }
}

/// Convergence record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    /// Max normalized change after each inner iteration.
    pub inner: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Score of each meta-iteration (empty for a single fit).
    pub meta_scores: Vec<f64>,
    pub best_meta: usize,
    pub scale_samples: f64,
    pub scale_features: f64,
}

impl TraceFile {
    pub fn from_fit(r: &FitResult) -> Self {
        Self {
            inner: r.trace.clone(),
            iterations: r.iterations(),
            converged: r.converged,
            meta_scores: r.meta_scores.clone(),
            best_meta: r.best_meta,
            scale_samples: r.scale_a,
            scale_features: r.scale_b,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_owned(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = BufReader::new(open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Json {
        path: path.to_owned(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes the distance matrices, both weight files and the trace into
/// `dir`; returns the written paths.
pub fn save_result(r: &FitResult, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let paths: Vec<PathBuf> = [DISTANCE_SAMPLES, DISTANCE_FEATURES, WEIGHTS_A, WEIGHTS_B, TRACE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_distance_csv(&paths[0], &r.d_a)?;
    write_distance_csv(&paths[1], &r.d_b)?;
    write_json(&paths[2], &WeightsFile::new(&r.tree_a, &r.z_a, &r.w_a))?;
    write_json(&paths[3], &WeightsFile::new(&r.tree_b, &r.z_b, &r.w_b))?;
    write_json(&paths[4], &TraceFile::from_fit(r))?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTraceFile {
    pub changes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Writes full-WSV distance matrices and trace into `dir`.
pub fn save_baseline(r: &WsvResult, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let paths: Vec<PathBuf> = [DISTANCE_SAMPLES, DISTANCE_FEATURES, TRACE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_distance_csv(&paths[0], &r.d_a)?;
    write_distance_csv(&paths[1], &r.d_b)?;
    write_json(
        &paths[2],
        &BaselineTraceFile {
            changes: r.trace.clone(),
            iterations: r.trace.len(),
            converged: r.converged,
        },
    )?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationFile {
    /// `rows[new] = old`
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl PermutationFile {
    pub fn new(rows: &Permutation, cols: &Permutation) -> Self {
        Self {
            rows: rows.0.clone(),
            cols: cols.0.clone(),
        }
    }
}

/// One integer label per line; a first line that is not an integer is
/// taken as a header when the file has `n + 1` non-empty lines. For CSV
/// lines the last field is the label.
pub fn load_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let skip = usize::from(lines.len() == n + 1);
    let field = |l: &str| l.rsplit(',').next().unwrap_or("").trim().to_owned();
    let mut names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for &(line, l) in &lines[skip..] {
        let f = field(l);
        if f.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty label".into(),
            });
        }
        // integer labels keep their value, others are numbered by first use
        let id = match f.parse::<usize>() {
            Ok(v) => v,
            Err(_) => match names.iter().position(|x| *x == f) {
                Some(p) => p,
                None => {
                    names.push(f);
                    names.len() - 1
                }
            },
        };
        labels.push(id);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    Ok(labels)
}

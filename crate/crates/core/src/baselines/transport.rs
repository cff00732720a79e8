//! Exact discrete optimal transport by the transportation simplex method.
//!
//! The basis is a spanning tree of the bipartite supply/demand graph. Dual
//! potentials follow from the tree, entering cells are priced in blocks and
//! the leaving cell is found on the tree cycle closed by the entering cell.
//! After a run of degenerate pivots the method switches to Bland's rule,
//! which cannot cycle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::DistanceMatrix;

/// Marginal sums may differ by at most this much.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Optimal plan on the support of the marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    /// `(i, j, mass)` over the original indices, basic cells only.
    pub flows: Vec<(usize, usize, f64)>,
    /// Dual objective at the final basis.
    pub dual: f64,
    pub pivots: usize,
}

fn check_histogram(h: &[f64], name: &str) -> Result<()> {
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Invalid(format!(
            "{name} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// Minimum of `<P, C>` over couplings of `a` and `b`.
pub fn exact_wasserstein(a: &[f64], b: &[f64], c: &DistanceMatrix) -> Result<f64> {
    for h in [a, b] {
        if h.len() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: c.len(),
                got: h.len(),
            });
        }
    }
    Ok(transport(a, b, c.values())?.cost)
}

/// Transportation problem with a rectangular cost matrix (`a.len() x b.len()`).
pub fn transport(a: &[f64], b: &[f64], c: &DMatrix<f64>) -> Result<TransportPlan> {
    transport_from(a, b, c, None)
}

/// Like [`transport`], optionally starting from the basis of an earlier
/// plan for the same marginals. Feasibility of a basis depends only on the
/// marginals, so a plan computed under a different cost is a valid start.
/// A start that does not fit the marginals' support is ignored.
pub fn transport_from(
    a: &[f64],
    b: &[f64],
    c: &DMatrix<f64>,
    start: Option<&TransportPlan>,
) -> Result<TransportPlan> {
    if c.nrows() != a.len() || c.ncols() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len() * b.len(),
            got: c.nrows() * c.ncols(),
        });
    }
    check_histogram(a, "source histogram")?;
    check_histogram(b, "target histogram")?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite cost".into()));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > MARGINAL_TOL {
        return Err(Error::InfeasibleMarginals(sa, sb));
    }
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Ok(TransportPlan {
            cost: 0.0,
            flows: Vec::new(),
            dual: 0.0,
            pivots: 0,
        });
    }
    let supply: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let cost = DMatrix::from_fn(rows.len(), cols.len(), |r, s| c[(rows[r], cols[s])]);
    let mut simplex = start
        .and_then(|plan| Simplex::from_plan(&cost, &rows, &cols, plan))
        .unwrap_or_else(|| Simplex::new(cost, &supply, &demand));
    simplex.optimize()?;
    let primal = simplex.primal();
    let dual = simplex.dual(&supply, &demand);
    let scale = simplex.cost.amax().max(1.0);
    if (primal - dual).abs() > 1e-9 * scale {
        return Err(Error::Transport(format!(
            "duality gap {:.3e} after {} pivots",
            (primal - dual).abs(),
            simplex.pivots
        )));
    }
    let flows = simplex
        .basis
        .iter()
        .map(|cell| (rows[cell.row], cols[cell.col], cell.flow))
        .collect();
    Ok(TransportPlan {
        cost: primal,
        flows,
        dual,
        pivots: simplex.pivots,
    })
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

struct Simplex {
    cost: DMatrix<f64>,
    basis: Vec<Cell>,
    // basis index of each basic cell, usize::MAX for nonbasic
    slot: DMatrix<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
    pivots: usize,
    next_row: usize,
}

const NONBASIC: usize = usize::MAX;

impl Simplex {
    /// Least-cost initial basis: cells in increasing cost order, each one
    /// exhausting exactly one line, so the `p + q - 1` cells form a tree.
    fn new(cost: DMatrix<f64>, supply: &[f64], demand: &[f64]) -> Self {
        let (p, q) = cost.shape();
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut order: Vec<(usize, usize)> = (0..p).flat_map(|i| (0..q).map(move |j| (i, j))).collect();
        order.sort_by(|x, y| cost[*x].total_cmp(&cost[*y]).then(x.cmp(y)));
        let mut row_on = vec![true; p];
        let mut col_on = vec![true; q];
        let (mut rows_left, mut cols_left) = (p, q);
        let mut basis = Vec::with_capacity(p + q - 1);
        let mut slot = DMatrix::from_element(p, q, NONBASIC);
        for (i, j) in order {
            if !row_on[i] || !col_on[j] {
                continue;
            }
            let flow = if rows_left == 1 {
                d[j]
            } else if cols_left == 1 {
                s[i]
            } else {
                s[i].min(d[j])
            }
            .max(0.0);
            slot[(i, j)] = basis.len();
            basis.push(Cell { row: i, col: j, flow });
            s[i] -= flow;
            d[j] -= flow;
            if rows_left == 1 && cols_left == 1 {
                break;
            }
            if rows_left == 1 {
                col_on[j] = false;
                cols_left -= 1;
            } else if cols_left == 1 || s[i] <= d[j] {
                row_on[i] = false;
                rows_left -= 1;
            } else {
                col_on[j] = false;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(basis.len(), p + q - 1);
        Self {
            cost,
            basis,
            slot,
            u: vec![0.0; p],
            v: vec![0.0; q],
            pivots: 0,
            next_row: 0,
        }
    }

    fn from_plan(
        cost: &DMatrix<f64>,
        rows: &[usize],
        cols: &[usize],
        plan: &TransportPlan,
    ) -> Option<Self> {
        let (p, q) = cost.shape();
        if plan.flows.len() != p + q - 1 {
            return None;
        }
        let mut row_of = vec![NONBASIC; rows.last().map_or(0, |&r| r + 1)];
        for (r, &i) in rows.iter().enumerate() {
            row_of[i] = r;
        }
        let mut col_of = vec![NONBASIC; cols.last().map_or(0, |&c| c + 1)];
        for (c, &j) in cols.iter().enumerate() {
            col_of[j] = c;
        }
        let mut slot = DMatrix::from_element(p, q, NONBASIC);
        let mut basis = Vec::with_capacity(p + q - 1);
        for &(i, j, flow) in &plan.flows {
            let r = *row_of.get(i)?;
            let c = *col_of.get(j)?;
            if r == NONBASIC || c == NONBASIC || slot[(r, c)] != NONBASIC {
                return None;
            }
            slot[(r, c)] = basis.len();
            basis.push(Cell { row: r, col: c, flow });
        }
        Some(Self {
            cost: cost.clone(),
            basis,
            slot,
            u: vec![0.0; p],
            v: vec![0.0; q],
            pivots: 0,
            next_row: 0,
        })
    }

    fn shape(&self) -> (usize, usize) {
        self.cost.shape()
    }

    /// Adjacency of the basis tree; nodes `0..p` are rows, `p..p+q` columns.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let (p, q) = self.shape();
        let mut adj = vec![Vec::new(); p + q];
        for (k, c) in self.basis.iter().enumerate() {
            adj[c.row].push((p + c.col, k));
            adj[p + c.col].push((c.row, k));
        }
        adj
    }

    fn potentials(&mut self, adj: &[Vec<(usize, usize)>]) {
        let p = self.shape().0;
        let mut seen = vec![false; adj.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &(next, k) in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let c = self.basis[k];
                let cost = self.cost[(c.row, c.col)];
                if next >= p {
                    self.v[next - p] = cost - self.u[node];
                } else {
                    self.u[next] = cost - self.v[node - p];
                }
                stack.push(next);
            }
        }
    }

    fn reduced(&self, i: usize, j: usize) -> f64 {
        self.cost[(i, j)] - self.u[i] - self.v[j]
    }

    /// Block pricing: scan rows cyclically and return the most negative
    /// reduced cost seen once a block of cells has been examined.
    fn price_block(&mut self, tol: f64) -> Option<(usize, usize)> {
        let (p, q) = self.shape();
        let block = ((p * q) as f64).sqrt().ceil() as usize;
        let mut best: Option<(usize, usize, f64)> = None;
        let mut scanned = 0;
        for step in 0..p {
            let i = (self.next_row + step) % p;
            for j in 0..q {
                if self.slot[(i, j)] != NONBASIC {
                    continue;
                }
                let r = self.reduced(i, j);
                if r < -tol && best.is_none_or(|b| r < b.2) {
                    best = Some((i, j, r));
                }
            }
            scanned += q;
            if scanned >= block && best.is_some() {
                self.next_row = (i + 1) % p;
                break;
            }
        }
        best.map(|(i, j, _)| (i, j))
    }

    /// Bland's rule: the lowest-index cell with negative reduced cost.
    fn price_bland(&self, tol: f64) -> Option<(usize, usize)> {
        let (p, q) = self.shape();
        (0..p)
            .flat_map(|i| (0..q).map(move |j| (i, j)))
            .find(|&(i, j)| self.slot[(i, j)] == NONBASIC && self.reduced(i, j) < -tol)
    }

    /// Basis cells on the tree path from column `j` to row `i`, in order.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let p = self.shape().0;
        let start = p + j;
        let mut via = vec![(usize::MAX, usize::MAX); adj.len()];
        via[start] = (start, usize::MAX);
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if node == i {
                break;
            }
            for &(next, k) in &adj[node] {
                if via[next].0 == usize::MAX {
                    via[next] = (node, k);
                    stack.push(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = i;
        while node != start {
            let (prev, k) = via[node];
            cells.push(k);
            node = prev;
        }
        // cells now run from row i back to column j
        cells
    }

    fn optimize(&mut self) -> Result<()> {
        let (p, q) = self.shape();
        let tol = 1e-12 * self.cost.amax().max(1.0);
        let cap = 50 * (p + q) * (p + q) + 1000;
        let mut degenerate_run = 0;
        loop {
            let adj = self.adjacency();
            self.potentials(&adj);
            let bland = degenerate_run > p + q;
            let entering = if bland {
                self.price_bland(tol)
            } else {
                self.price_block(tol)
            };
            let Some((i, j)) = entering else {
                return Ok(());
            };
            if self.pivots >= cap {
                return Err(Error::Transport(format!(
                    "no optimal basis after {} pivots",
                    self.pivots
                )));
            }
            // Cycle: +(i,j), then alternating -, + along the path from row i
            // to column j. The first path cell shares row i, so it is '-'.
            let path = self.path(&adj, i, j);
            let mut leave_pos = 0;
            let mut theta = f64::INFINITY;
            for (pos, &k) in path.iter().enumerate().step_by(2) {
                let f = self.basis[k].flow;
                let better = if bland {
                    f < theta
                        || (f == theta && {
                            let a = self.basis[k];
                            let b = self.basis[path[leave_pos]];
                            (a.row, a.col) < (b.row, b.col)
                        })
                } else {
                    f < theta
                };
                if better {
                    theta = f;
                    leave_pos = pos;
                }
            }
            for (pos, &k) in path.iter().enumerate() {
                let cell = &mut self.basis[k];
                if pos % 2 == 0 {
                    cell.flow = (cell.flow - theta).max(0.0);
                } else {
                    cell.flow += theta;
                }
            }
            let k = path[leave_pos];
            let old = self.basis[k];
            self.slot[(old.row, old.col)] = NONBASIC;
            self.basis[k] = Cell {
                row: i,
                col: j,
                flow: theta,
            };
            self.slot[(i, j)] = k;
            self.pivots += 1;
            if theta > 0.0 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
        }
    }

    fn primal(&self) -> f64 {
        self.basis
            .iter()
            .map(|c| c.flow * self.cost[(c.row, c.col)])
            .sum()
    }

    fn dual(&self, supply: &[f64], demand: &[f64]) -> f64 {
        let a: f64 = supply.iter().zip(&self.u).map(|(s, u)| s * u).sum();
        let b: f64 = demand.iter().zip(&self.v).map(|(d, v)| d * v).sum();
        a + b
    }
}

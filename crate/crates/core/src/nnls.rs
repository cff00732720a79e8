//! Non-negative least squares `min || U^T w - b ||_2  s.t.  w >= 0` by the
//! Lawson–Hanson active-set method.
//!
//! The weight update solves the same `U` against a new right-hand side at
//! every power iteration, so [`NnlsSystem`] keeps the Gram matrix `U U^T` and
//! an LU factorization of `U^T` around. The unconstrained solution is tried
//! first; when it has non-positive entries the active-set iteration starts
//! from its positive support.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{Error, Result};

/// Which inactive index enters the passive set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnteringRule {
    /// Largest dual value (the classical rule).
    #[default]
    MaxDual,
    /// Lowest index with a positive dual value.
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    pub entering: EnteringRule,
    /// Start from the positive support of the unconstrained solution.
    pub warm_start: bool,
    /// Dual values below `dual_tol * max(1, |U b|_inf)` count as zero.
    pub dual_tol: f64,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        Self {
            entering: EnteringRule::MaxDual,
            warm_start: true,
            dual_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub w: Vec<f64>,
    /// `|| U^T w - b ||_2`
    pub residual: f64,
    /// Active-set iterations (0 when the unconstrained solution was feasible).
    pub iterations: usize,
}

/// Factorizations of a fixed coefficient matrix `U` (`p x q`).
#[derive(Debug, Clone)]
pub struct NnlsSystem {
    u: DMatrix<f64>,
    gram: DMatrix<f64>,
    ut_lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl NnlsSystem {
    pub fn new(u: DMatrix<f64>) -> Self {
        let gram = &u * u.transpose();
        Self::with_gram(u, gram)
    }

    /// Builds the system from a sparse 0/1 matrix given by the row indices of
    /// the ones in each column.
    pub fn from_indicator_columns(p: usize, columns: &[&[usize]]) -> Self {
        let mut u = DMatrix::zeros(p, columns.len());
        let mut gram = DMatrix::zeros(p, p);
        for (k, col) in columns.iter().enumerate() {
            for &a in col.iter() {
                u[(a, k)] = 1.0;
                for &b in col.iter() {
                    gram[(a, b)] += 1.0;
                }
            }
        }
        Self::with_gram(u, gram)
    }

    fn with_gram(u: DMatrix<f64>, gram: DMatrix<f64>) -> Self {
        let ut_lu = (u.nrows() == u.ncols()).then(|| u.transpose().lu());
        let ut_lu = ut_lu.filter(|lu| lu.is_invertible());
        Self { u, gram, ut_lu }
    }

    pub fn n_unknowns(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_equations(&self) -> usize {
        self.u.ncols()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `2 U (U^T w - b)`, the gradient of the squared residual.
    pub fn gradient(&self, w: &[f64], b: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(w);
        let r = self.u.tr_mul(&w) - DVector::from_column_slice(b);
        (&self.u * r * 2.0).as_slice().to_vec()
    }

    pub fn residual(&self, w: &[f64], b: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        (self.u.tr_mul(&w) - DVector::from_column_slice(b)).norm()
    }

    pub fn solve(&self, b: &[f64]) -> Result<NnlsSolution> {
        self.solve_with(b, &NnlsOptions::default())
    }

    pub fn solve_with(&self, b: &[f64], opts: &NnlsOptions) -> Result<NnlsSolution> {
        let p = self.n_unknowns();
        if b.len() != self.n_equations() {
            return Err(Error::DimensionMismatch {
                expected: self.n_equations(),
                got: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite right-hand side".into()));
        }
        let bv = DVector::from_column_slice(b);
        let c = &self.u * &bv;
        let tol = opts.dual_tol * c.amax().max(1.0);

        let mut x = DVector::<f64>::zeros(p);
        let mut passive = vec![false; p];
        let mut factor = PassiveFactor::new(p);

        if opts.warm_start {
            if let Some(lu) = &self.ut_lu {
                if let Some(x0) = lu.solve(&bv) {
                    if x0.iter().all(|&v| v > 0.0) {
                        let w = x0.as_slice().to_vec();
                        let residual = self.residual(&w, b);
                        return Ok(NnlsSolution {
                            w,
                            residual,
                            iterations: 0,
                        });
                    }
                    for i in 0..p {
                        passive[i] = x0[i] > 0.0 && factor.push(&self.gram, i);
                    }
                    // shrink the support until the restricted solution is positive
                    while !factor.is_empty() {
                        let s = factor.solve(&c);
                        let leaving: Vec<usize> = factor
                            .indices()
                            .iter()
                            .copied()
                            .filter(|&i| s[i] <= 0.0)
                            .collect();
                        if leaving.is_empty() {
                            x = s;
                            break;
                        }
                        for i in leaving {
                            factor.remove(i);
                            passive[i] = false;
                        }
                    }
                }
            }
        }

        let cap = 3 * p * p.max(1);
        let mut iterations = 0;
        let mut blocked = vec![false; p];
        loop {
            let dual = &c - &self.gram * &x;
            let candidate = (0..p).filter(|&i| !passive[i] && !blocked[i] && dual[i] > tol);
            let entering = match opts.entering {
                EnteringRule::MaxDual => {
                    candidate.fold(None, |best: Option<usize>, i| match best {
                        Some(j) if dual[j] >= dual[i] => Some(j),
                        _ => Some(i),
                    })
                }
                EnteringRule::LowestIndex => candidate.into_iter().next(),
            };
            let Some(j) = entering else { break };
            if !factor.push(&self.gram, j) {
                // column already in the span of the passive set
                blocked[j] = true;
                continue;
            }
            passive[j] = true;

            loop {
                iterations += 1;
                if iterations > cap {
                    let w = x.as_slice().to_vec();
                    return Err(Error::NnlsNotConverged {
                        iterations,
                        residual: self.residual(&w, b),
                    });
                }
                let s = factor.solve(&c);
                if passive[j] && s[j] <= 0.0 && x[j] == 0.0 {
                    // entering variable cannot move: numerical dead end for this index
                    factor.remove(j);
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
                if factor.indices().iter().all(|&i| s[i] > 0.0) {
                    x = s;
                    blocked.iter_mut().for_each(|f| *f = false);
                    break;
                }
                let mut alpha = f64::INFINITY;
                for &i in factor.indices() {
                    if s[i] <= 0.0 {
                        let a = x[i] / (x[i] - s[i]);
                        if a < alpha {
                            alpha = a;
                        }
                    }
                }
                x += (&s - &x) * alpha;
                let leaving: Vec<usize> = factor
                    .indices()
                    .iter()
                    .copied()
                    .filter(|&i| x[i] <= 0.0 || (s[i] <= 0.0 && x[i] <= f64::EPSILON * alpha))
                    .collect();
                for i in leaving {
                    factor.remove(i);
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
        let w: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let residual = self.residual(&w, b);
        Ok(NnlsSolution {
            w,
            residual,
            iterations,
        })
    }
}

/// Cholesky factor `L L^T` of the Gram matrix restricted to the passive set,
/// updated in place as indices enter and leave.
struct PassiveFactor {
    indices: Vec<usize>,
    /// `L^T`, so rows of `L` are contiguous columns here.
    r: DMatrix<f64>,
}

impl PassiveFactor {
    fn new(p: usize) -> Self {
        Self {
            indices: Vec::with_capacity(p),
            r: DMatrix::zeros(p, p),
        }
    }

    fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Appends index `j`; refuses it when its column is numerically dependent
    /// on the current ones.
    fn push(&mut self, gram: &DMatrix<f64>, j: usize) -> bool {
        let k = self.indices.len();
        let mut row = vec![0.0; k];
        for a in 0..k {
            let mut s = gram[(self.indices[a], j)];
            for (b, v) in row.iter().enumerate().take(a) {
                s -= self.r[(b, a)] * v;
            }
            row[a] = s / self.r[(a, a)];
        }
        let d2 = gram[(j, j)] - row.iter().map(|v| v * v).sum::<f64>();
        if d2.is_nan() || d2 <= 1e-12 * gram[(j, j)] {
            return false;
        }
        for (b, v) in row.into_iter().enumerate() {
            self.r[(b, k)] = v;
        }
        self.r[(k, k)] = d2.sqrt();
        self.indices.push(j);
        true
    }

    fn remove(&mut self, j: usize) {
        let Some(r) = self.indices.iter().position(|&i| i == j) else {
            return;
        };
        let k = self.indices.len();
        for a in r..k - 1 {
            for b in 0..=a + 1 {
                self.r[(b, a)] = self.r[(b, a + 1)];
            }
        }
        for b in 0..k {
            self.r[(b, k - 1)] = 0.0;
        }
        // the shifted rows carry one entry above the diagonal; rotate it away
        for a in r..k - 1 {
            let (x, y) = (self.r[(a, a)], self.r[(a + 1, a)]);
            let h = x.hypot(y);
            let (c, s) = (x / h, y / h);
            for row in a..k - 1 {
                let (u, w) = (self.r[(a, row)], self.r[(a + 1, row)]);
                self.r[(a, row)] = c * u + s * w;
                self.r[(a + 1, row)] = c * w - s * u;
            }
        }
        self.indices.remove(r);
    }

    /// Least squares on the passive set for the normal-equation right-hand
    /// side `c`, scattered back to full length with zeros elsewhere.
    fn solve(&self, c: &DVector<f64>) -> DVector<f64> {
        let k = self.indices.len();
        let mut y: Vec<f64> = self.indices.iter().map(|&i| c[i]).collect();
        for a in 0..k {
            let mut s = y[a];
            for (b, v) in y.iter().enumerate().take(a) {
                s -= self.r[(b, a)] * v;
            }
            y[a] = s / self.r[(a, a)];
        }
        for a in (0..k).rev() {
            let mut s = y[a];
            for (b, v) in y.iter().enumerate().skip(a + 1) {
                s -= self.r[(a, b)] * v;
            }
            y[a] = s / self.r[(a, a)];
        }
        let mut out = DVector::zeros(c.len());
        for (a, &i) in self.indices.iter().enumerate() {
            out[i] = y[a];
        }
        out
    }
}

/// One-shot NNLS for `U^T w = b`.
pub fn nnls(u: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    Ok(NnlsSystem::new(u.clone()).solve(b)?.w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let b = [0.5, 0.0, 2.0];
        assert_eq!(nnls(&DMatrix::identity(3, 3), &b).unwrap(), b.to_vec());
    }

    #[test]
    fn scalar_active_constraint() {
        let u = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(nnls(&u, &[-1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn mixed_signs() {
        // U^T = [[1, 1], [0, 1]], b = (1, -1): unconstrained w = (2, -1)
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let sys = NnlsSystem::new(u);
        for opts in [
            NnlsOptions::default(),
            NnlsOptions {
                entering: EnteringRule::LowestIndex,
                warm_start: false,
                ..Default::default()
            },
        ] {
            let s = sys.solve_with(&[1.0, -1.0], &opts).unwrap();
            // minimize (w0 + w1 - 1)^2 + (w1 + 1)^2 over w >= 0 -> w = (1, 0)
            assert!((s.w[0] - 1.0).abs() < 1e-12 && s.w[1] == 0.0, "{:?}", s.w);
            assert!((s.residual - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rhs() {
        let sys = NnlsSystem::new(DMatrix::identity(2, 2));
        assert!(sys.solve(&[1.0]).is_err());
        assert!(sys.solve(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn rectangular_underdetermined() {
        // two unknowns, one equation: w0 + w1 = 1
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let s = NnlsSystem::new(u).solve(&[1.0]).unwrap();
        assert!(s.residual < 1e-12);
        assert!(s.w.iter().all(|&v| v >= 0.0));
    }
}

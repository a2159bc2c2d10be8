//! Dense regularized linear least squares.
//!
//! Minimizes `||A x - b||^2 + ridge ||x||^2` through a column-pivoted Householder
//! QR of the stacked matrix `[A; sqrt(ridge) I]`. The factorization can be kept
//! and reused for many right-hand sides, which is how the Picard driver and the
//! forward stepper use it: their matrices never change between steps.

use faer::linalg::solvers::SolveLstsq;

use faer::Mat;

use crate::error::{Error, Result};

/// Relative threshold on `|R_ii| / |R_00|` below which a column counts as dependent.
const RANK_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub ridge: f64,
}

impl LinearSystem {
    pub fn new(matrix: Mat<f64>, rhs: Vec<f64>, ridge: f64) -> Self {
        Self { matrix, rhs, ridge }
    }

    pub fn from_rows(rows: &[Vec<f64>], rhs: Vec<f64>, ridge: f64) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::invalid("ragged matrix rows"));
        }
        let matrix = Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        Ok(Self::new(matrix, rhs, ridge))
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub x: Vec<f64>,
    /// `||A x - b||`, excluding the ridge term.
    pub residual_norm: f64,
}

/// A reusable factorization of `[A; sqrt(ridge) I]`.
pub struct LeastSquares {
    matrix: Mat<f64>,
    ridge: f64,
    qr: faer::linalg::solvers::ColPivQr<f64>,
    rank: usize,
}

impl LeastSquares {
    pub fn factor(matrix: Mat<f64>, ridge: f64) -> Result<Self> {
        let (m, n) = matrix.shape();
        if m == 0 || n == 0 {
            return Err(Error::invalid(format!("empty least-squares matrix {m}x{n}")));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge must be finite and nonnegative, got {ridge}")));
        }
        for j in 0..n {
            if matrix.col(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite entry in column {j}")));
            }
        }
        let extra = if ridge > 0.0 { n } else { 0 };
        let stacked = if extra > 0 {
            let s = ridge.sqrt();
            Mat::from_fn(m + n, n, |i, j| {
                if i < m {
                    matrix[(i, j)]
                } else if i - m == j {
                    s
                } else {
                    0.0
                }
            })
        } else {
            matrix.clone()
        };
        if stacked.nrows() < n {
            return Err(Error::RankDeficient { rank: stacked.nrows(), cols: n });
        }
        let qr = stacked.col_piv_qr();
        let diag = qr.thin_R().diagonal().column_vector().to_owned();
        let lead = diag[0].abs();
        let rank = if lead == 0.0 {
            0
        } else {
            diag.iter().take_while(|d| d.abs() > RANK_TOL * lead).count()
        };
        if rank < n {
            return Err(Error::RankDeficient { rank, cols: n });
        }
        Ok(Self { matrix, ridge, qr, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<LsqSolution> {
        let (m, n) = self.matrix.shape();
        if rhs.len() != m {
            return Err(Error::invalid(format!("rhs has {} entries, matrix has {m} rows", rhs.len())));
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite right-hand side"));
        }
        let extra = if self.ridge > 0.0 { n } else { 0 };
        let b = Mat::from_fn(m + extra, 1, |i, _| if i < m { rhs[i] } else { 0.0 });
        let sol = self.qr.solve_lstsq(&b);
        let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        let residual_norm = residual(&self.matrix, &x, rhs)
            .iter()
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt();
        Ok(LsqSolution { x, residual_norm })
    }

    /// `||(A^T A + ridge I) x - A^T b|| / ||A^T b||`.
    pub fn normal_equation_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        normal_equation_residual(&self.matrix, self.ridge, x, rhs)
    }
}

/// One-shot solve of a [`LinearSystem`].
pub fn solve(sys: &LinearSystem) -> Result<LsqSolution> {
    if sys.rhs.len() != sys.nrows() {
        return Err(Error::invalid(format!(
            "rhs has {} entries, matrix has {} rows",
            sys.rhs.len(),
            sys.nrows()
        )));
    }
    LeastSquares::factor(sys.matrix.clone(), sys.ridge)?.solve(&sys.rhs)
}

fn residual(a: &Mat<f64>, x: &[f64], b: &[f64]) -> Vec<f64> {
    let xm = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    let ax = a * &xm;
    (0..b.len()).map(|i| ax[(i, 0)] - b[i]).collect()
}

pub fn normal_equation_residual(a: &Mat<f64>, ridge: f64, x: &[f64], b: &[f64]) -> f64 {
    let r = residual(a, x, b);
    let rm = Mat::from_fn(r.len(), 1, |i, _| r[i]);
    let bm = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let atr = a.transpose() * &rm;
    let atb = a.transpose() * &bm;
    let num: f64 = (0..x.len())
        .map(|i| (atr[(i, 0)] + ridge * x[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = (0..x.len()).map(|i| atb[(i, 0)].powi(2)).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

//! Carleman-Picard reconstruction of the initial density from boundary data.
//!
//! Each step freezes the collision term at the previous iterate and minimizes
//! the Carleman-weighted quadratic functional for the mode functions
//! `f_0..f_N` on `[0, L]`. The functional is discretized as a stacked
//! least-squares system whose rows, squared and summed, reproduce it:
//!
//! * residual rows `sqrt(w dv) (-f_m'' + b f_m' + sum_n s_mn f_n - Q_m)` at interior nodes,
//! * four penalty rows per mode for the boundary values and slopes,
//! * `sqrt(eps dv) D_k f_m`, `k = 0..3`, at every node for the `H^3` term.
//!
//! Only the right-hand side depends on the iterate and the data, so the matrix
//! is factored once per configuration.

use faer::Mat;
use log::{debug, warn};

use crate::basis::{BasisSet, CoeffVector};
use crate::carleman::{CarlemanParams, WeightTable};
use crate::collision::{ModeVector, ProjectedCollision, StateField};
use crate::error::{Error, Result};
use crate::forward::{BoundaryData, InitialProfile};
use crate::grid::{trapezoid, SizeGrid, TimeGrid};
use crate::kernels::{Drift, Kernel};
use crate::lsq::{LeastSquares, LinearSystem};

#[derive(Debug, Clone)]
pub struct InverseConfig {
    pub n: usize,
    pub lambda: f64,
    pub beta: f64,
    pub eps: f64,
    pub k_max: usize,
    pub v0: f64,
    pub l: f64,
    /// Nodes of the reconstruction grid on `[0, L]`.
    pub nv_rec: usize,
    pub ext: f64,
    /// Radius of the admissible set. Recorded, not imposed.
    pub m_bound: Option<f64>,
    pub drift: Drift,
    pub coag: Kernel,
    pub frag: Kernel,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            n: 20,
            lambda: 2.0,
            beta: 10.0,
            eps: 10f64.powf(-6.5),
            k_max: 9,
            v0: -1.0,
            l: 2.0,
            nv_rec: 49,
            ext: 8.0,
            m_bound: None,
            drift: Drift::constant(1.0),
            coag: Kernel::sum(),
            frag: Kernel::sum(),
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("eps", self.eps),
            ("L", self.l),
            ("ext", self.ext),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.nv_rec < 6 {
            return Err(Error::invalid(format!(
                "reconstruction grid needs at least 6 nodes, got {}",
                self.nv_rec
            )));
        }
        CarlemanParams::new(self.lambda, self.beta, self.v0)?;
        Ok(())
    }

    pub fn rec_grid(&self) -> Result<SizeGrid> {
        SizeGrid::new(self.l, self.nv_rec)
    }

    pub fn carleman(&self) -> Result<CarlemanParams> {
        CarlemanParams::new(self.lambda, self.beta, self.v0)
    }

    /// Rows of the stacked system: residual, penalty, regularization.
    pub fn row_count(&self) -> usize {
        let (m, p) = (self.n + 1, self.nv_rec);
        m * (p - 2) + 4 * m + 4 * m * p
    }
}

/// Projected boundary data; `phi0` is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCoefficients {
    pub phi0: CoeffVector,
    pub phi_l: CoeffVector,
    pub psi0: CoeffVector,
    pub psi_l: CoeffVector,
}

pub fn data_coefficients(bd: &BoundaryData, basis: &BasisSet) -> Result<DataCoefficients> {
    if &bd.tgrid != basis.grid() {
        return Err(Error::invalid(format!(
            "boundary data has {} time nodes on [0, {}], basis grid has {} on [0, {}]",
            bd.tgrid.len(),
            bd.tgrid.t_final(),
            basis.grid().len(),
            basis.t_final()
        )));
    }
    Ok(DataCoefficients {
        phi0: CoeffVector::zeros(basis.size()),
        phi_l: basis.project(&bd.phi_l)?,
        psi0: basis.project(&bd.psi0)?,
        psi_l: basis.project(&bd.psi_l)?,
    })
}

/// Finite-difference weights for derivatives `0..=max_order` at `x0` on
/// arbitrary nodes (Fornberg's recursion). Returns `[order][node]`.
pub fn fd_weights(x0: f64, xs: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Window placement for a second-order stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placement {
    /// Centered where it fits, otherwise shifted against the nearest boundary.
    Biased,
    /// Centered where it fits, otherwise starting at `i` and pointing inward.
    Inward,
}

/// Second-order accurate stencil for derivative `order` at node `i` of `p`
/// uniform nodes with spacing `h`: `(first node, weights)`.
fn stencil(order: usize, i: usize, p: usize, h: f64, placement: Placement) -> (usize, Vec<f64>) {
    if order == 0 {
        return (i, vec![1.0]);
    }
    let centered = if order % 2 == 0 { order + 1 } else { order + 2 };
    let half = centered / 2;
    let (start, width) = if i >= half && i + half < p && !(placement == Placement::Inward && (i == 1 || i == p - 2)) {
        (i - half, centered)
    } else {
        let width = order + 2;
        let left = i < p / 2;
        let start = match (placement, left) {
            (Placement::Inward, true) => i,
            (Placement::Inward, false) => i + 1 - width,
            (Placement::Biased, true) => 0,
            (Placement::Biased, false) => p - width,
        };
        (start, width)
    };
    let xs: Vec<f64> = (start..start + width).map(|j| j as f64 - i as f64).collect();
    let w = fd_weights(0.0, &xs, order);
    let scale = h.powi(order as i32);
    (start, w[order].iter().map(|c| c / scale).collect())
}

/// Owns the factored step matrix and everything needed to form right-hand sides.
pub struct Reconstructor {
    cfg: InverseConfig,
    basis: BasisSet,
    grid: SizeGrid,
    weights: WeightTable,
    collision: ProjectedCollision,
    matrix_rows: usize,
    solver: LeastSquares,
    residual_scale: Vec<f64>,
    penalty_scale: [f64; 2],
}

impl Reconstructor {
    pub fn new(cfg: InverseConfig, tgrid: &TimeGrid) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.rec_grid()?;
        cfg.drift.check_bound(grid.nodes())?;
        let basis = BasisSet::new(cfg.n, tgrid)?;
        let params = cfg.carleman()?;
        let weights = WeightTable::new(params, &grid);
        let collision = ProjectedCollision::new(&grid, cfg.ext, &cfg.coag, &cfg.frag)?;
        let residual_scale: Vec<f64> = weights.values().iter().map(|w| (w * grid.dv()).sqrt()).collect();
        let penalty_scale = [params.penalty_row_scale(0.0), params.penalty_row_scale(cfg.l)];
        let matrix = assemble_matrix(&cfg, &basis, &grid, &residual_scale, penalty_scale);
        let matrix_rows = matrix.nrows();
        debug!("factoring {}x{} Carleman-Picard matrix", matrix.nrows(), matrix.ncols());
        let solver = LeastSquares::factor(matrix, 0.0).map_err(|e| Error::NumericalFailure {
            module: "picard",
            step: 0,
            reason: e.to_string(),
        })?;
        Ok(Self {
            cfg,
            basis,
            grid,
            weights,
            collision,
            matrix_rows,
            solver,
            residual_scale,
            penalty_scale,
        })
    }

    pub fn config(&self) -> &InverseConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn weights(&self) -> &WeightTable {
        &self.weights
    }

    pub fn data_coefficients(&self, bd: &BoundaryData) -> Result<DataCoefficients> {
        data_coefficients(bd, &self.basis)
    }

    /// `Q_m(prev)` on the reconstruction grid.
    pub fn projected_collision(&self, prev: &ModeVector) -> Result<Vec<Vec<f64>>> {
        self.collision.project(prev, &self.basis)
    }

    fn rhs(&self, q: &[Vec<f64>], dc: &DataCoefficients) -> Vec<f64> {
        let (nm, p) = (self.basis.size(), self.grid.len());
        let mut b = vec![0.0; self.matrix_rows];
        for m in 0..nm {
            for i in 1..p - 1 {
                b[m * (p - 2) + i - 1] = self.residual_scale[i] * q[m][i];
            }
        }
        let base = nm * (p - 2);
        let [s0, sl] = self.penalty_scale;
        for m in 0..nm {
            b[base + 4 * m] = s0 * dc.phi0.0[m];
            b[base + 4 * m + 1] = sl * dc.phi_l.0[m];
            b[base + 4 * m + 2] = s0 * dc.psi0.0[m];
            b[base + 4 * m + 3] = sl * dc.psi_l.0[m];
        }
        b
    }

    /// The full stacked system for one step, for inspection and testing.
    pub fn assemble_system(&self, prev: &ModeVector, dc: &DataCoefficients) -> Result<LinearSystem> {
        let q = self.projected_collision(prev)?;
        Ok(LinearSystem::new(self.solver.matrix().clone(), self.rhs(&q, dc), 0.0))
    }

    pub fn picard_step(&self, prev: &ModeVector, dc: &DataCoefficients, step: usize) -> Result<ModeVector> {
        let q = self.projected_collision(prev)?;
        let sol = self.solver.solve(&self.rhs(&q, dc)).map_err(|e| Error::NumericalFailure {
            module: "picard",
            step,
            reason: e.to_string(),
        })?;
        if sol.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                module: "picard",
                step,
                reason: "non-finite iterate".into(),
            });
        }
        ModeVector::from_flat(self.grid.clone(), self.basis.size(), &sol.x)
    }

    /// `f^rec(v) = sum_n f_n(v) Psi_n(0)`.
    pub fn initial_density(&self, mv: &ModeVector) -> Vec<f64> {
        mv.combine(&self.basis.psi_at_zero())
    }

    /// `K_max` Picard steps from the zero guess.
    pub fn run(&self, bd: &BoundaryData) -> Result<(IterateHistory, ReconstructionResult)> {
        let dc = self.data_coefficients(bd)?;
        let mut iterates = vec![ModeVector::zeros(self.grid.clone(), self.basis.size())];
        let mut f0 = vec![self.initial_density(&iterates[0])];
        let mut consec_errors = Vec::with_capacity(self.cfg.k_max);
        for k in 0..self.cfg.k_max {
            let next = self.picard_step(&iterates[k], &dc, k + 1)?;
            let rec = self.initial_density(&next);
            let e = rec
                .iter()
                .zip(&f0[k])
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            debug!("picard step {}: consecutive error {e:.3e}", k + 1);
            if let Some(m) = self.cfg.m_bound {
                if next.max_abs() > m {
                    warn!("iterate {} leaves the admissible ball (max {} > {m})", k + 1, next.max_abs());
                }
            }
            consec_errors.push(e);
            iterates.push(next);
            f0.push(rec);
        }
        let modes = iterates.last().cloned().expect("history holds the initial guess");
        let f_rec = self.synthesize(&modes)?;
        let f0_rec = f0.last().cloned().expect("history holds the initial guess");
        Ok((
            IterateHistory {
                iterates,
                consec_errors,
            },
            ReconstructionResult { modes, f_rec, f0_rec },
        ))
    }

    /// `f(v, t) = sum_n f_n(v) Psi_n(t)` on the reconstruction grid.
    pub fn synthesize(&self, mv: &ModeVector) -> Result<StateField> {
        let nt = self.basis.grid().len();
        let slices = (0..nt)
            .map(|j| {
                let w: Vec<f64> = (0..self.basis.size()).map(|n| self.basis.psi_table(n)[j]).collect();
                mv.combine(&w)
            })
            .collect();
        StateField::from_slices(self.grid.clone(), self.basis.grid().clone(), slices)
    }
}

fn assemble_matrix(
    cfg: &InverseConfig,
    basis: &BasisSet,
    grid: &SizeGrid,
    residual_scale: &[f64],
    penalty_scale: [f64; 2],
) -> Mat<f64> {
    let (nm, p, h) = (basis.size(), grid.len(), grid.dv());
    let mut a = Mat::<f64>::zeros(cfg.row_count(), nm * p);
    let col = |m: usize, i: usize| m * p + i;

    for m in 0..nm {
        for i in 1..p - 1 {
            let row = m * (p - 2) + i - 1;
            let s = residual_scale[i];
            let b = cfg.drift.eval(grid.nodes()[i]);
            let (s2, w2) = stencil(2, i, p, h, Placement::Inward);
            for (k, w) in w2.iter().enumerate() {
                a[(row, col(m, s2 + k))] -= s * w;
            }
            let (s1, w1) = stencil(1, i, p, h, Placement::Inward);
            for (k, w) in w1.iter().enumerate() {
                a[(row, col(m, s1 + k))] += s * b * w;
            }
            for n in 0..nm {
                a[(row, col(n, i))] += s * basis.stiffness(m, n);
            }
        }
    }

    let base = nm * (p - 2);
    let [s0, sl] = penalty_scale;
    let (d0_start, d0) = stencil(1, 0, p, h, Placement::Biased);
    let (dl_start, dl) = stencil(1, p - 1, p, h, Placement::Biased);
    for m in 0..nm {
        a[(base + 4 * m, col(m, 0))] = s0;
        a[(base + 4 * m + 1, col(m, p - 1))] = sl;
        for (k, w) in d0.iter().enumerate() {
            a[(base + 4 * m + 2, col(m, d0_start + k))] = s0 * w;
        }
        for (k, w) in dl.iter().enumerate() {
            a[(base + 4 * m + 3, col(m, dl_start + k))] = sl * w;
        }
    }

    let base = base + 4 * nm;
    let s = (cfg.eps * h).sqrt();
    for m in 0..nm {
        for order in 0..4 {
            for i in 0..p {
                let row = base + (m * 4 + order) * p + i;
                let (start, w) = stencil(order, i, p, h, Placement::Biased);
                for (k, w) in w.iter().enumerate() {
                    a[(row, col(m, start + k))] = s * w;
                }
            }
        }
    }
    a
}

#[derive(Debug, Clone)]
pub struct IterateHistory {
    /// `K_max + 1` iterates, the first being the zero guess.
    pub iterates: Vec<ModeVector>,
    /// `E_k = max_v |f^rec,(k+1) - f^rec,(k)|`, `k = 0..K_max-1`.
    pub consec_errors: Vec<f64>,
}

/// Consecutive errors below this fraction of the largest one count as converged.
const ROUNDOFF_FLOOR: f64 = 1e-12;

impl IterateHistory {
    /// `rho_k = E_{k+1} / E_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.consec_errors
            .windows(2)
            .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
            .collect()
    }

    /// True when `rho_k < 1` for every `k >= from`, ignoring errors at roundoff level.
    pub fn decays_from(&self, from: usize) -> bool {
        let top = self.consec_errors.iter().cloned().fold(0.0, f64::max);
        let floor = ROUNDOFF_FLOOR * top;
        self.consec_errors
            .windows(2)
            .skip(from)
            .all(|w| w[1] <= floor || w[1] < w[0])
    }

    /// Geometric-mean contraction factor over `k >= 2`, or over all steps when
    /// fewer are available. Zero when the iteration is stationary.
    pub fn empirical_rho(&self) -> f64 {
        let e = &self.consec_errors;
        let top = e.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 || e.len() < 2 {
            return 0.0;
        }
        let floor = ROUNDOFF_FLOOR * top;
        let from = if e.len() > 3 { 2 } else { 0 };
        let mut last = e.len() - 1;
        while last > from && e[last] <= floor {
            last -= 1;
        }
        if last == from || e[from] == 0.0 {
            return 0.0;
        }
        (e[last] / e[from]).powf(1.0 / (last - from) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub modes: ModeVector,
    pub f_rec: StateField,
    pub f0_rec: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub rel_l2: f64,
    pub rel_linf: f64,
    /// `|f_true - f_rec| / max |f_true|` on the reconstruction grid.
    pub pointwise_err: Option<StateField>,
}

/// Relative errors of a reconstructed initial density on `grid`.
pub fn initial_errors(grid: &SizeGrid, f0_rec: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if f0_rec.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::invalid("density samples do not match the grid"));
    }
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * x).collect() };
    let diff: Vec<f64> = f0_rec.iter().zip(truth).map(|(a, b)| a - b).collect();
    let norm_l2 = trapezoid(&sq(truth), grid.dv()).sqrt();
    let norm_inf = truth.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if norm_l2 == 0.0 || norm_inf == 0.0 {
        return Err(Error::invalid("true initial density vanishes on the reconstruction grid"));
    }
    let err_l2 = trapezoid(&sq(&diff), grid.dv()).sqrt();
    let err_inf = diff.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok((err_l2 / norm_l2, err_inf / norm_inf))
}

pub fn metrics(
    result: &ReconstructionResult,
    truth: &InitialProfile,
    true_field: Option<&StateField>,
) -> Result<Metrics> {
    let grid = result.modes.grid();
    let (rel_l2, rel_linf) = initial_errors(grid, &result.f0_rec, &truth.sample(grid.nodes()))?;
    let pointwise_err = match true_field {
        None => None,
        Some(tf) => {
            if tf.grid() != result.f_rec.grid() || tf.tgrid() != result.f_rec.tgrid() {
                return Err(Error::invalid("true field grids differ from the reconstruction grids"));
            }
            let scale = tf.max_abs();
            if scale == 0.0 {
                return Err(Error::invalid("true field vanishes identically"));
            }
            let slices = (0..tf.tgrid().len())
                .map(|n| {
                    tf.slice(n)
                        .iter()
                        .zip(result.f_rec.slice(n))
                        .map(|(a, b)| (a - b).abs() / scale)
                        .collect()
                })
                .collect();
            Some(StateField::from_slices(tf.grid().clone(), tf.tgrid().clone(), slices)?)
        }
    };
    Ok(Metrics {
        rel_l2,
        rel_linf,
        pointwise_err,
    })
}

/// Relative sup-norm truncation error of the `phiL` expansion for each `N`.
pub fn phi_of_n(bd: &BoundaryData, n_values: &[usize]) -> Result<Vec<f64>> {
    let n_max = *n_values
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("empty N range"))?;
    let scale = bd.phi_l.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::invalid("phiL vanishes identically"));
    }
    // Psi_n does not depend on N, so one basis serves every truncation
    let basis = BasisSet::new(n_max, &bd.tgrid)?;
    let c = basis.project(&bd.phi_l)?;
    Ok(n_values
        .iter()
        .map(|&n| {
            let partial = basis.synthesize_on_grid(&c.0[..=n]);
            let err = partial
                .iter()
                .zip(&bd.phi_l)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            err / scale
        })
        .collect())
}

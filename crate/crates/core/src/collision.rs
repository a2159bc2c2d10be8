//! Discrete coagulation and fragmentation operators.
//!
//! All size integrals are composite trapezoid sums over grid nodes. On a
//! uniform grid the shifted arguments `v_i - v*` and `v_i + v*` are themselves
//! nodes, so no interpolation is involved. Values beyond the grid end are zero.

use rayon::prelude::*;

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::grid::{trapezoid_weights, SizeGrid, TimeGrid};
use crate::kernels::Kernel;

/// Space-time table `F(v_i, t_n)`, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: SizeGrid,
    tgrid: TimeGrid,
    values: Vec<f64>,
}

impl StateField {
    pub fn zeros(grid: SizeGrid, tgrid: TimeGrid) -> Self {
        let values = vec![0.0; grid.len() * tgrid.len()];
        Self { grid, tgrid, values }
    }

    /// Builds a field from `f(v, t)`.
    pub fn from_fn(grid: SizeGrid, tgrid: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len() * tgrid.len());
        for &t in tgrid.nodes() {
            values.extend(grid.nodes().iter().map(|&v| f(v, t)));
        }
        Self { grid, tgrid, values }
    }

    /// Builds a field from time slices, one `Vec` of length `Nv` per time node.
    pub fn from_slices(grid: SizeGrid, tgrid: TimeGrid, slices: Vec<Vec<f64>>) -> Result<Self> {
        if slices.len() != tgrid.len() || slices.iter().any(|s| s.len() != grid.len()) {
            return Err(Error::invalid("slice dimensions do not match the grids"));
        }
        Ok(Self {
            grid,
            tgrid,
            values: slices.concat(),
        })
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize) -> f64 {
        self.values[n * self.grid.len() + i]
    }

    pub fn set(&mut self, i: usize, n: usize, value: f64) {
        let nv = self.grid.len();
        self.values[n * nv + i] = value;
    }

    /// Values at time node `n`, indexed by size node.
    pub fn slice(&self, n: usize) -> &[f64] {
        let nv = self.grid.len();
        &self.values[n * nv..(n + 1) * nv]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        let nv = self.grid.len();
        &mut self.values[n * nv..(n + 1) * nv]
    }

    /// Time series at size node `i`.
    pub fn series(&self, i: usize) -> Vec<f64> {
        (0..self.tgrid.len()).map(|n| self.at(i, n)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Restriction to the first `len` size nodes.
    pub fn restrict(&self, len: usize) -> Result<StateField> {
        if len < 2 || len > self.grid.len() {
            return Err(Error::invalid(format!("cannot restrict {} nodes to {len}", self.grid.len())));
        }
        let grid = SizeGrid::new(self.grid.nodes()[len - 1], len)?;
        let slices = (0..self.tgrid.len()).map(|n| self.slice(n)[..len].to_vec()).collect();
        StateField::from_slices(grid, self.tgrid.clone(), slices)
    }

    /// Linear interpolation in `v` onto `grid`, which must lie inside this field's grid.
    /// Exact at shared nodes.
    pub fn resample(&self, grid: &SizeGrid) -> Result<StateField> {
        if grid.v_max() > self.grid.v_max() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "cannot resample a field on [0, {}] onto [0, {}]",
                self.grid.v_max(),
                grid.v_max()
            )));
        }
        let h = self.grid.dv();
        let last = self.grid.len() - 1;
        let stencil: Vec<(usize, f64)> = grid
            .nodes()
            .iter()
            .map(|&v| {
                let x = v / h;
                let r = x.round();
                if (x - r).abs() < 1e-9 {
                    return ((r as usize).min(last), 0.0);
                }
                let j = (x.floor() as usize).min(last - 1);
                (j, x - j as f64)
            })
            .collect();
        let slices = (0..self.tgrid.len())
            .map(|n| {
                let f = self.slice(n);
                stencil
                    .iter()
                    .map(|&(j, a)| if a == 0.0 { f[j] } else { (1.0 - a) * f[j] + a * f[j + 1] })
                    .collect()
            })
            .collect();
        StateField::from_slices(grid.clone(), self.tgrid.clone(), slices)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `N + 1` spatial mode functions `f_n(v_i)` on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    grid: SizeGrid,
    modes: Vec<Vec<f64>>,
}

impl ModeVector {
    pub fn new(grid: SizeGrid, modes: Vec<Vec<f64>>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::invalid("mode vector needs at least one mode"));
        }
        if let Some(bad) = modes.iter().position(|m| m.len() != grid.len()) {
            return Err(Error::invalid(format!(
                "mode {bad} has {} samples, grid has {}",
                modes[bad].len(),
                grid.len()
            )));
        }
        Ok(Self { grid, modes })
    }

    pub fn zeros(grid: SizeGrid, n_modes: usize) -> Self {
        let modes = vec![vec![0.0; grid.len()]; n_modes];
        Self { grid, modes }
    }

    /// Unflattens a mode-major vector `(f_0(v_0..), f_1(v_0..), ...)`.
    pub fn from_flat(grid: SizeGrid, n_modes: usize, flat: &[f64]) -> Result<Self> {
        let p = grid.len();
        if flat.len() != n_modes * p {
            return Err(Error::invalid(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                n_modes * p
            )));
        }
        let modes = flat.chunks(p).map(<[f64]>::to_vec).collect();
        Ok(Self { grid, modes })
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    /// Right endpoint `L`.
    pub fn l(&self) -> f64 {
        self.grid.v_max()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, n: usize) -> &[f64] {
        &self.modes[n]
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.modes.concat()
    }

    /// `sum_n f_n(v_i) c_n` at every node, e.g. with `c_n = Psi_n(t)`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (mode, w) in self.modes.iter().zip(weights) {
            for (o, f) in out.iter_mut().zip(mode) {
                *o += w * f;
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|m| m.iter().map(|v| a * v).collect())
            .collect();
        Self { grid: self.grid.clone(), modes }
    }

    pub fn max_abs(&self) -> f64 {
        self.modes.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Continues each mode past `L` by `f_n(L) e^{-(v - L)}` onto `ext_grid`.
pub fn extend_modes(mv: &ModeVector, ext_grid: &SizeGrid) -> Result<ModeVector> {
    let p = mv.grid.len();
    let l = mv.l();
    let aligned = ext_grid.index_of(l) == Some(p - 1)
        && (ext_grid.dv() - mv.grid.dv()).abs() <= 1e-12 * mv.grid.dv();
    if !aligned || ext_grid.v_max() < l {
        return Err(Error::invalid(format!(
            "extension grid (dv = {}, end = {}) is not aligned with L = {l}",
            ext_grid.dv(),
            ext_grid.v_max()
        )));
    }
    let tail: Vec<f64> = ext_grid.nodes()[p..]
        .iter()
        .map(|v| (-(v - l)).exp())
        .collect();
    let modes = mv
        .modes
        .iter()
        .map(|m| {
            let end = m[p - 1];
            m.iter().copied().chain(tail.iter().map(|e| end * e)).collect()
        })
        .collect();
    Ok(ModeVector {
        grid: ext_grid.clone(),
        modes,
    })
}

struct CoagTables {
    // gain[tri(i) + j] = w_j K(v_i - v_j, v_j), j <= i, trapezoid over [0, v_i]
    gain: Vec<f64>,
    // loss[i * nv + j] = w_j K(v_i, v_j), trapezoid over [0, v_max]
    loss: Vec<f64>,
}

struct FragTables {
    // trapezoid over [0, v_i] of V(v_i - v*, v_i)
    loss_rate: Vec<f64>,
    // gain[tri_rev(i) + j] = w_j V(v_i, v_j), j <= nv - 1 - i
    gain: Vec<f64>,
    gain_offsets: Vec<usize>,
}

/// Tabulated `Q_coag + Q_frag` on a fixed size grid.
pub struct CollisionOperator {
    grid: SizeGrid,
    coag: Option<CoagTables>,
    frag: Option<FragTables>,
}

#[inline]
fn tri(i: usize) -> usize {
    i * (i + 1) / 2
}

impl CollisionOperator {
    pub fn new(grid: &SizeGrid, coag: &Kernel, frag: &Kernel) -> Result<Self> {
        let coag = if coag.is_zero() { None } else { Some(coag_tables(grid, coag)?) };
        let frag = if frag.is_zero() { None } else { Some(frag_tables(grid, frag)?) };
        Ok(Self {
            grid: grid.clone(),
            coag,
            frag,
        })
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn coag_slice(&self, f: &[f64], out: &mut [f64]) {
        let nv = self.grid.len();
        let Some(t) = &self.coag else { return };
        for i in 0..nv {
            let g = &t.gain[tri(i)..tri(i) + i + 1];
            let gain: f64 = (0..=i).map(|j| g[j] * f[i - j] * f[j]).sum();
            let row = &t.loss[i * nv..(i + 1) * nv];
            let loss: f64 = row.iter().zip(f).map(|(k, fj)| k * fj).sum();
            out[i] += 0.5 * gain - f[i] * loss;
        }
    }

    pub fn frag_slice(&self, f: &[f64], out: &mut [f64]) {
        let nv = self.grid.len();
        let Some(t) = &self.frag else { return };
        for i in 0..nv {
            let off = t.gain_offsets[i];
            let g = &t.gain[off..off + nv - i];
            let gain: f64 = g.iter().zip(&f[i..]).map(|(w, fv)| w * fv).sum();
            out[i] += 2.0 * gain - f[i] * t.loss_rate[i];
        }
    }

    /// `Q(F)` for one size profile.
    pub fn apply_slice(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.coag_slice(f, &mut out);
        self.frag_slice(f, &mut out);
        out
    }

    fn map_field(&self, field: &StateField, op: impl Fn(&[f64], &mut [f64]) + Sync) -> Result<StateField> {
        if field.grid() != &self.grid {
            return Err(Error::invalid("field grid does not match the operator grid"));
        }
        let slices: Vec<Vec<f64>> = (0..field.tgrid().len())
            .into_par_iter()
            .map(|n| {
                let mut out = vec![0.0; self.grid.len()];
                op(field.slice(n), &mut out);
                out
            })
            .collect();
        StateField::from_slices(self.grid.clone(), field.tgrid().clone(), slices)
    }

    pub fn apply_field(&self, field: &StateField) -> Result<StateField> {
        self.map_field(field, |f, out| {
            self.coag_slice(f, out);
            self.frag_slice(f, out);
        })
    }
}

fn check_rate(kernel: &Kernel, v: f64, w: f64) -> Result<f64> {
    let k = kernel.eval(v, w);
    if !(k >= 0.0) || !k.is_finite() {
        return Err(kernel.invalid_kernel(format!("rate {k} at ({v}, {w})")));
    }
    Ok(k)
}

fn coag_tables(grid: &SizeGrid, kernel: &Kernel) -> Result<CoagTables> {
    let nv = grid.len();
    let v = grid.nodes();
    let h = grid.dv();
    let mut gain = vec![0.0; tri(nv)];
    for i in 0..nv {
        let w = trapezoid_weights(i + 1, h);
        for j in 0..=i {
            gain[tri(i) + j] = w[j] * check_rate(kernel, v[i - j], v[j])?;
        }
    }
    let w = trapezoid_weights(nv, h);
    let mut loss = vec![0.0; nv * nv];
    for i in 0..nv {
        for j in 0..nv {
            loss[i * nv + j] = w[j] * check_rate(kernel, v[i], v[j])?;
        }
    }
    Ok(CoagTables { gain, loss })
}

fn frag_tables(grid: &SizeGrid, kernel: &Kernel) -> Result<FragTables> {
    let nv = grid.len();
    let v = grid.nodes();
    let h = grid.dv();
    let mut loss_rate = vec![0.0; nv];
    for i in 0..nv {
        let w = trapezoid_weights(i + 1, h);
        for j in 0..=i {
            // second argument is v itself, matching the loss term as written in the model
            loss_rate[i] += w[j] * check_rate(kernel, v[i - j], v[i])?;
        }
    }
    let mut gain = Vec::with_capacity(tri(nv));
    let mut gain_offsets = Vec::with_capacity(nv);
    for i in 0..nv {
        gain_offsets.push(gain.len());
        let w = trapezoid_weights(nv - i, h);
        for j in 0..nv - i {
            gain.push(w[j] * check_rate(kernel, v[i], v[j])?);
        }
    }
    Ok(FragTables {
        loss_rate,
        gain,
        gain_offsets,
    })
}

/// Coagulation operator applied at every time node.
pub fn q_coag(field: &StateField, kernel: &Kernel) -> Result<StateField> {
    let op = CollisionOperator::new(field.grid(), kernel, &Kernel::zero())?;
    op.map_field(field, |f, out| op.coag_slice(f, out))
}

/// Fragmentation operator applied at every time node.
pub fn q_frag(field: &StateField, kernel: &Kernel) -> Result<StateField> {
    let op = CollisionOperator::new(field.grid(), &Kernel::zero(), kernel)?;
    op.map_field(field, |f, out| op.frag_slice(f, out))
}

/// Time-projected collision operator `Q_m(f)` on `[0, L]`, evaluated with the
/// exponential tail extension on `[0, L + ext]`.
pub struct ProjectedCollision {
    rec_grid: SizeGrid,
    ext_grid: SizeGrid,
    op: CollisionOperator,
}

impl ProjectedCollision {
    pub fn new(rec_grid: &SizeGrid, ext: f64, coag: &Kernel, frag: &Kernel) -> Result<Self> {
        if !(ext > 0.0) {
            return Err(Error::invalid(format!("extension length must be positive, got {ext}")));
        }
        let ext_grid = SizeGrid::with_spacing(rec_grid.v_max() + ext, rec_grid.dv()).map_err(|_| {
            Error::invalid(format!(
                "extension length {ext} is not a multiple of the reconstruction spacing {}",
                rec_grid.dv()
            ))
        })?;
        let op = CollisionOperator::new(&ext_grid, coag, frag)?;
        Ok(Self {
            rec_grid: rec_grid.clone(),
            ext_grid,
            op,
        })
    }

    pub fn ext_grid(&self) -> &SizeGrid {
        &self.ext_grid
    }

    /// Returns `Q_m(f)(v_i)` for `m = 0..=N` and every reconstruction node.
    pub fn project(&self, mv: &ModeVector, basis: &BasisSet) -> Result<Vec<Vec<f64>>> {
        if mv.grid() != &self.rec_grid {
            return Err(Error::invalid("mode vector grid does not match the reconstruction grid"));
        }
        if mv.n_modes() != basis.size() {
            return Err(Error::invalid(format!(
                "{} modes but the basis has {} functions",
                mv.n_modes(),
                basis.size()
            )));
        }
        let ext = extend_modes(mv, &self.ext_grid)?;
        let nt = basis.grid().len();
        let slices: Vec<Vec<f64>> = (0..nt)
            .into_par_iter()
            .map(|j| {
                let weights: Vec<f64> = (0..basis.size()).map(|n| basis.psi_table(n)[j]).collect();
                let f = ext.combine(&weights);
                self.op.apply_slice(&f)
            })
            .collect();
        let p = self.rec_grid.len();
        let mut out = vec![vec![0.0; p]; basis.size()];
        for i in 0..p {
            let series: Vec<f64> = slices.iter().map(|s| s[i]).collect();
            let c = basis.project_unchecked(&series);
            for (m, cm) in c.into_iter().enumerate() {
                out[m][i] = cm;
            }
        }
        Ok(out)
    }
}

/// One-shot `Q_m` evaluation; see [`ProjectedCollision`].
pub fn project_q(
    mv: &ModeVector,
    basis: &BasisSet,
    coag: &Kernel,
    frag: &Kernel,
    ext: f64,
) -> Result<Vec<Vec<f64>>> {
    ProjectedCollision::new(mv.grid(), ext, coag, frag)?.project(mv, basis)
}

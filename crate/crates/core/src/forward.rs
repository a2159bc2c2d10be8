//! Forward solver for the diffusive coagulation-fragmentation equation and the
//! synthetic boundary observations derived from it.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collision::{CollisionOperator, StateField};
use crate::error::{Error, Result};
use crate::grid::{SizeGrid, TimeGrid};
use crate::io;
use crate::kernels::{Drift, Kernel};
use crate::lsq::LeastSquares;

/// Ridge added to the forward least-squares step.
const FORWARD_RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Test1,
    Test2,
    Test3,
    Test4,
    Custom,
}

/// Initial density `f^0(v)`.
#[derive(Clone)]
pub struct InitialProfile {
    kind: ProfileKind,
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// `B(a, b)` for positive integers.
fn beta_int(a: u32, b: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(a - 1) * fact(b - 1) / fact(a + b - 1)
}

impl InitialProfile {
    pub fn test1() -> Self {
        Self::builtin(ProfileKind::Test1, "test1", |v| {
            if (0.0..=1.0).contains(&v) { 0.5 * PI * (PI * v).sin() } else { 0.0 }
        })
    }

    pub fn test2() -> Self {
        let (mu, sigma) = (0.7, 0.2);
        Self::builtin(ProfileKind::Test2, "test2", move |v| {
            if v < 0.0 {
                return 0.0;
            }
            (-(v - mu) * (v - mu) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
        })
    }

    pub fn test3() -> Self {
        Self::builtin(ProfileKind::Test3, "test3", |v| if (0.6..=1.0).contains(&v) { 2.5 } else { 0.0 })
    }

    pub fn test4() -> Self {
        let c = 1.0 / (2.0 * beta_int(3, 7));
        Self::builtin(ProfileKind::Test4, "test4", move |v| {
            if (0.0..=2.0).contains(&v) {
                let s = v / 2.0;
                c * s * s * (1.0 - s).powi(6)
            } else {
                0.0
            }
        })
    }

    pub fn custom(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: ProfileKind::Custom,
            label: label.into(),
            f: Arc::new(f),
        }
    }

    fn builtin(kind: ProfileKind, label: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind,
            label: label.to_string(),
            f: Arc::new(f),
        }
    }

    /// `"test1"` through `"test4"`, or `"1"` through `"4"`.
    pub fn from_selector(selector: &str) -> Result<Self> {
        match selector.trim().trim_start_matches("test") {
            "1" => Ok(Self::test1()),
            "2" => Ok(Self::test2()),
            "3" => Ok(Self::test3()),
            "4" => Ok(Self::test4()),
            _ => Err(Error::invalid(format!("unknown initial profile `{selector}`"))),
        }
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.f)(v)
    }

    pub fn sample(&self, nodes: &[f64]) -> Vec<f64> {
        nodes.iter().map(|&v| self.eval(v)).collect()
    }
}

impl fmt::Debug for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialProfile").field("label", &self.label).finish()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardConfig {
    pub r: f64,
    pub nv: usize,
    pub t_final: f64,
    pub nt: usize,
    pub drift: Drift,
    pub coag: Kernel,
    pub frag: Kernel,
    pub profile: InitialProfile,
}

impl ForwardConfig {
    /// Defaults of the numerical study: `R = 10`, `Nv = 241`, `T = 0.5`, `Nt = 301`,
    /// unit drift and sum kernels.
    pub fn new(profile: InitialProfile) -> Self {
        Self {
            r: 10.0,
            nv: 241,
            t_final: 0.5,
            nt: 301,
            drift: Drift::constant(1.0),
            coag: Kernel::sum(),
            frag: Kernel::sum(),
            profile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nv < 3 || self.nt < 3 {
            return Err(Error::invalid(format!(
                "forward grids need at least 3 nodes (Nv = {}, Nt = {})",
                self.nv, self.nt
            )));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::invalid(format!("R must be positive, got {}", self.r)));
        }
        SizeGrid::new(self.r, self.nv)?;
        TimeGrid::new(self.t_final, self.nt)?;
        Ok(())
    }

    pub fn size_grid(&self) -> Result<SizeGrid> {
        SizeGrid::new(self.r, self.nv)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_final, self.nt)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub field: StateField,
}

/// Implicit step matrix: interior rows `f/dt + b D1 f - D2 f`, then the two boundary rows.
fn step_matrix(grid: &SizeGrid, dt: f64, drift: &Drift) -> Mat<f64> {
    let nv = grid.len();
    let h = grid.dv();
    let mut a = Mat::<f64>::zeros(nv, nv);
    for i in 1..nv - 1 {
        let row = i - 1;
        let b = drift.eval(grid.nodes()[i]);
        a[(row, i)] += 1.0 / dt + 2.0 / (h * h);
        a[(row, i - 1)] -= 1.0 / (h * h);
        a[(row, i + 1)] -= 1.0 / (h * h);
        // upwind in the direction of transport
        if b >= 0.0 {
            a[(row, i)] += b / h;
            a[(row, i - 1)] -= b / h;
        } else {
            a[(row, i + 1)] += b / h;
            a[(row, i)] -= b / h;
        }
    }
    a[(nv - 2, 0)] = 1.0;
    a[(nv - 1, nv - 1)] = 1.0;
    a
}

pub fn solve_forward(cfg: &ForwardConfig) -> Result<ForwardSolution> {
    cfg.validate()?;
    let grid = cfg.size_grid()?;
    let tgrid = cfg.time_grid()?;
    cfg.drift.check_bound(grid.nodes())?;
    let nv = grid.len();
    let dt = tgrid.dt();
    let op = CollisionOperator::new(&grid, &cfg.coag, &cfg.frag)?;
    let solver = LeastSquares::factor(step_matrix(&grid, dt, &cfg.drift), FORWARD_RIDGE).map_err(|e| {
        Error::NumericalFailure {
            module: "forward",
            step: 0,
            reason: e.to_string(),
        }
    })?;

    let mut field = StateField::zeros(grid.clone(), tgrid.clone());
    field.slice_mut(0).copy_from_slice(&cfg.profile.sample(grid.nodes()));
    let mut rhs = vec![0.0; nv];
    for n in 0..tgrid.len() - 1 {
        let prev = field.slice(n);
        let q = op.apply_slice(prev);
        for i in 1..nv - 1 {
            rhs[i - 1] = prev[i] / dt + q[i];
        }
        rhs[nv - 2] = 0.0;
        rhs[nv - 1] = 0.0;
        let sol = solver.solve(&rhs).map_err(|e| Error::NumericalFailure {
            module: "forward",
            step: n + 1,
            reason: e.to_string(),
        })?;
        if let Some(bad) = sol.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                module: "forward",
                step: n + 1,
                reason: format!("non-finite value at size node {bad}"),
            });
        }
        field.slice_mut(n + 1).copy_from_slice(&sol.x);
    }
    Ok(ForwardSolution { field })
}

/// The four boundary observation series on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub tgrid: TimeGrid,
    pub phi0: Vec<f64>,
    pub phi_l: Vec<f64>,
    pub psi0: Vec<f64>,
    pub psi_l: Vec<f64>,
    pub noise_level: f64,
    pub seed: Option<u64>,
}

pub const BOUNDARY_HEADER: [&str; 5] = ["t", "phi0", "phiL", "psi0", "psiL"];

impl BoundaryData {
    pub fn zeros(tgrid: TimeGrid) -> Self {
        let nt = tgrid.len();
        Self {
            tgrid,
            phi0: vec![0.0; nt],
            phi_l: vec![0.0; nt],
            psi0: vec![0.0; nt],
            psi_l: vec![0.0; nt],
            noise_level: 0.0,
            seed: None,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        io::format_csv(
            &BOUNDARY_HEADER,
            &[self.tgrid.nodes(), &self.phi0, &self.phi_l, &self.psi0, &self.psi_l],
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_csv()?)
    }

    /// Parses the CSV layout written by [`BoundaryData::to_csv`]. The time
    /// column must be a uniform grid starting at 0.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (header, cols) = io::parse_csv(text)?;
        if header != BOUNDARY_HEADER {
            return Err(Error::invalid(format!(
                "boundary data header must be `{}`, found `{}`",
                BOUNDARY_HEADER.join(","),
                header.join(",")
            )));
        }
        let t = &cols[0];
        if t.len() < 2 {
            return Err(Error::invalid("boundary data needs at least two time nodes"));
        }
        let tgrid = TimeGrid::new(t[t.len() - 1], t.len())?;
        let tol = 1e-9 * tgrid.t_final();
        if t.iter().zip(tgrid.nodes()).any(|(a, b)| (a - b).abs() > tol) {
            return Err(Error::invalid("boundary data time column is not a uniform grid from 0"));
        }
        Ok(Self {
            tgrid,
            phi0: cols[1].clone(),
            phi_l: cols[2].clone(),
            psi0: cols[3].clone(),
            psi_l: cols[4].clone(),
            noise_level: 0.0,
            seed: None,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn max_abs(&self) -> f64 {
        [&self.phi0, &self.phi_l, &self.psi0, &self.psi_l]
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Clean observations at `v = 0` and `v = L`, with second-order one-sided
/// derivatives that use only values inside `[0, L]`.
pub fn extract_boundary_data(sol: &ForwardSolution, l: f64) -> Result<BoundaryData> {
    let field = &sol.field;
    let grid = field.grid();
    let h = grid.dv();
    let il = grid
        .index_of(l)
        .ok_or_else(|| Error::invalid(format!("L = {l} is not a node of the forward grid (dv = {h})")))?;
    if il < 2 {
        return Err(Error::invalid(format!("L = {l} leaves fewer than three nodes in [0, L]")));
    }
    let nt = field.tgrid().len();
    let mut bd = BoundaryData::zeros(field.tgrid().clone());
    for n in 0..nt {
        let f = field.slice(n);
        bd.phi_l[n] = f[il];
        bd.psi0[n] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
        bd.psi_l[n] = (3.0 * f[il] - 4.0 * f[il - 1] + f[il - 2]) / (2.0 * h);
    }
    Ok(bd)
}

/// Multiplies `phiL`, `psi0`, `psiL` by `1 + delta * xi` with `xi ~ U[-1, 1]`
/// i.i.d. per time node, one independent stream per series.
pub fn add_noise(bd: &BoundaryData, delta: f64, seed: u64) -> Result<BoundaryData> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {delta}")));
    }
    let mut out = bd.clone();
    out.noise_level = delta;
    out.seed = Some(seed);
    if delta == 0.0 {
        return Ok(out);
    }
    for (stream, series) in [&mut out.phi_l, &mut out.psi0, &mut out.psi_l].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64 + 1);
        for g in series.iter_mut() {
            let xi: f64 = rng.gen_range(-1.0..=1.0);
            *g *= 1.0 + delta * xi;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_values() {
        assert!((InitialProfile::test1().eval(0.5) - PI / 2.0).abs() < 1e-15);
        assert_eq!(InitialProfile::test1().eval(1.5), 0.0);
        assert_eq!(InitialProfile::test3().eval(0.3), 0.0);
        assert_eq!(InitialProfile::test3().eval(0.8), 2.5);
        assert!((beta_int(3, 7) - 1.0 / 252.0).abs() < 1e-18);
        assert!(InitialProfile::from_selector("test5").is_err());
        assert_eq!(InitialProfile::from_selector("2").unwrap().kind(), ProfileKind::Test2);
    }

    #[test]
    fn profiles_are_densities() {
        // Simpson on a fine grid as an independent quadrature
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
            }
            s * h / 3.0
        };
        let t4 = InitialProfile::test4();
        assert!((simpson(&|v| t4.eval(v), 0.0, 2.0) - 1.0).abs() < 1e-6);
        let t1 = InitialProfile::test1();
        assert!((simpson(&|v| t1.eval(v), 0.0, 1.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_profile_stays_zero() {
        let mut cfg = ForwardConfig::new(InitialProfile::custom("zero", |_| 0.0));
        cfg.nv = 49;
        cfg.nt = 21;
        let sol = solve_forward(&cfg).unwrap();
        assert_eq!(sol.field.max_abs(), 0.0);
    }

    #[test]
    fn boundary_rows_hold() {
        let mut cfg = ForwardConfig::new(InitialProfile::test2());
        cfg.nv = 121;
        cfg.nt = 31;
        let sol = solve_forward(&cfg).unwrap();
        for n in 1..cfg.nt {
            assert!(sol.field.at(0, n).abs() <= 1e-10);
            assert!(sol.field.at(cfg.nv - 1, n).abs() <= 1e-10);
        }
    }

    #[test]
    fn psi_stencils_exact_on_linear_field() {
        let grid = SizeGrid::new(10.0, 241).unwrap();
        let tgrid = TimeGrid::new(0.5, 11).unwrap();
        let field = StateField::from_fn(grid, tgrid.clone(), |v, t| v * (-t).exp());
        let bd = extract_boundary_data(&ForwardSolution { field }, 2.0).unwrap();
        for (n, t) in tgrid.nodes().iter().enumerate() {
            assert!((bd.psi0[n] - (-t).exp()).abs() < 1e-12);
            assert!((bd.psi_l[n] - (-t).exp()).abs() < 1e-12);
            assert!((bd.phi_l[n] - 2.0 * (-t).exp()).abs() < 1e-12);
            assert_eq!(bd.phi0[n], 0.0);
        }
    }

    #[test]
    fn off_grid_l_rejected() {
        let field = StateField::zeros(SizeGrid::new(10.0, 241).unwrap(), TimeGrid::new(0.5, 3).unwrap());
        assert!(extract_boundary_data(&ForwardSolution { field }, 2.01).is_err());
    }

    #[test]
    fn noise_properties() {
        let tgrid = TimeGrid::new(0.5, 101).unwrap();
        let mut bd = BoundaryData::zeros(tgrid);
        bd.phi_l = (0..101).map(|i| 1.0 + i as f64).collect();
        bd.psi0 = vec![2.0; 101];
        bd.psi_l = vec![-3.0; 101];
        assert_eq!(add_noise(&bd, 0.0, 9).unwrap().phi_l, bd.phi_l);
        let a = add_noise(&bd, 0.05, 9).unwrap();
        let b = add_noise(&bd, 0.05, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.phi0, bd.phi0);
        for (noisy, clean) in [(&a.phi_l, &bd.phi_l), (&a.psi0, &bd.psi0), (&a.psi_l, &bd.psi_l)] {
            for (x, y) in noisy.iter().zip(clean.iter()) {
                assert!(((x - y) / y).abs() <= 0.05 + 1e-15);
            }
        }
        // the three streams differ
        let r1: Vec<f64> = a.psi0.iter().map(|x| x / 2.0).collect();
        let r2: Vec<f64> = a.psi_l.iter().map(|x| x / -3.0).collect();
        assert_ne!(r1, r2);
        assert!(add_noise(&bd, -0.1, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut bd = BoundaryData::zeros(TimeGrid::new(0.5, 5).unwrap());
        bd.phi_l = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let text = bd.to_csv().unwrap();
        assert!(text.starts_with("t,phi0,phiL,psi0,psiL\n0,0,0.1,0,0\n"));
        assert_eq!(BoundaryData::from_csv(&text).unwrap(), bd);
        assert!(BoundaryData::from_csv("t,a\n0,1\n").is_err());
    }
}

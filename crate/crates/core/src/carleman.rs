//! Carleman weight `e^{2 lambda r(v)^{-beta}}`, `r(v) = v - v0`, and the
//! quantities built from it.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collision::ModeVector;
use crate::error::{Error, Result};
use crate::grid::{trapezoid, SizeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanParams {
    lambda: f64,
    beta: f64,
    v0: f64,
}

impl CarlemanParams {
    pub fn new(lambda: f64, beta: f64, v0: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !(v0.is_finite() && v0 < 0.0) {
            return Err(Error::invalid(format!("v0 must be negative, got {v0}")));
        }
        Ok(Self { lambda, beta, v0 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// `lambda r(v)^{-beta}`, half the weight exponent.
    fn half_exponent(&self, v: f64) -> f64 {
        self.lambda * (v - self.v0).powf(-self.beta)
    }

    pub fn weight(&self, v: f64) -> f64 {
        (2.0 * self.half_exponent(v)).exp()
    }

    /// `lambda^4 e^{2 lambda r(v)^{-beta}}`.
    pub fn penalty(&self, v: f64) -> f64 {
        self.lambda.powi(4) * self.weight(v)
    }

    /// Square root of [`CarlemanParams::penalty`], the scale of a penalty row.
    pub fn penalty_row_scale(&self, v: f64) -> f64 {
        self.lambda * self.lambda * self.half_exponent(v).exp()
    }
}

/// Weights sampled on a size grid `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    grid: SizeGrid,
    params: CarlemanParams,
    w: Vec<f64>,
    pub boundary_penalty_0: f64,
    pub boundary_penalty_l: f64,
}

impl WeightTable {
    pub fn new(params: CarlemanParams, grid: &SizeGrid) -> Self {
        let w = grid.nodes().iter().map(|&v| params.weight(v)).collect();
        Self {
            grid: grid.clone(),
            params,
            w,
            boundary_penalty_0: params.penalty(0.0),
            boundary_penalty_l: params.penalty(grid.v_max()),
        }
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn params(&self) -> &CarlemanParams {
        &self.params
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }
}

/// `trapz sum_n w |f_n|^2 + w(L) |f(L)|^2`.
pub fn weighted_norm_sq(mv: &ModeVector, params: &CarlemanParams) -> f64 {
    let grid = mv.grid();
    let w: Vec<f64> = grid.nodes().iter().map(|&v| params.weight(v)).collect();
    let last = grid.len() - 1;
    let mut dens = vec![0.0; grid.len()];
    let mut end = 0.0;
    for mode in mv.modes() {
        for (d, (f, wi)) in dens.iter_mut().zip(mode.iter().zip(&w)) {
            *d += wi * f * f;
        }
        end += mode[last] * mode[last];
    }
    trapezoid(&dens, grid.dv()) + w[last] * end
}

pub fn weighted_norm(mv: &ModeVector, params: &CarlemanParams) -> f64 {
    weighted_norm_sq(mv, params).sqrt()
}

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth function on `[0, L]` with its first two derivatives.
#[derive(Clone)]
pub struct TestFunction {
    pub u: Scalar,
    pub du: Scalar,
    pub d2u: Scalar,
}

impl TestFunction {
    pub fn new(
        u: impl Fn(f64) -> f64 + Send + Sync + 'static,
        du: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2u: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            u: Arc::new(u),
            du: Arc::new(du),
            d2u: Arc::new(d2u),
        }
    }

    /// `sin^2(pi v / L) h(v)` with `h = a0 + sum_k a_k sin(k pi v / L + p_k)`,
    /// which has vanishing value and slope at both ends.
    pub fn bump(l: f64, a0: f64, terms: &[(f64, f64)]) -> Self {
        let c = PI / l;
        let terms: Arc<[(f64, f64)]> = terms.into();
        let h = {
            let t = terms.clone();
            move |v: f64| -> [f64; 3] {
                let mut out = [a0, 0.0, 0.0];
                for (k, &(a, p)) in t.iter().enumerate() {
                    let kc = (k + 1) as f64 * c;
                    let arg = kc * v + p;
                    out[0] += a * arg.sin();
                    out[1] += a * kc * arg.cos();
                    out[2] -= a * kc * kc * arg.sin();
                }
                out
            }
        };
        // s = sin^2(c v), s' = c sin(2 c v), s'' = 2 c^2 cos(2 c v)
        let s = move |v: f64| [(c * v).sin().powi(2), c * (2.0 * c * v).sin(), 2.0 * c * c * (2.0 * c * v).cos()];
        let (h0, h1, h2) = (h.clone(), h.clone(), h);
        Self::new(
            move |v| s(v)[0] * h0(v)[0],
            move |v| {
                let (s, h) = (s(v), h1(v));
                s[1] * h[0] + s[0] * h[1]
            },
            move |v| {
                let (s, h) = (s(v), h2(v));
                s[2] * h[0] + 2.0 * s[1] * h[1] + s[0] * h[2]
            },
        )
    }
}

/// Nodes used by the ratio probe.
const PROBE_NODES: usize = 4001;

/// `int w |u''|^2 / int w (lambda^3 u^2 + lambda u'^2)` on `[0, L]`.
pub fn carleman_ratio_probe(params: &CarlemanParams, l: f64, f: &TestFunction) -> Result<f64> {
    let traces = [(f.u)(0.0), (f.u)(l), (f.du)(0.0), (f.du)(l)];
    if let Some(t) = traces.iter().find(|t| t.abs() > 1e-10) {
        return Err(Error::invalid(format!("test function has a nonvanishing boundary trace {t}")));
    }
    let grid = SizeGrid::new(l, PROBE_NODES)?;
    let lam = params.lambda();
    let mut num = Vec::with_capacity(PROBE_NODES);
    let mut den = Vec::with_capacity(PROBE_NODES);
    for &v in grid.nodes() {
        let w = params.weight(v);
        let (u, du, d2u) = ((f.u)(v), (f.du)(v), (f.d2u)(v));
        num.push(w * d2u * d2u);
        den.push(w * (lam.powi(3) * u * u + lam * du * du));
    }
    let den = trapezoid(&den, grid.dv());
    if den <= 0.0 {
        return Err(Error::invalid("test function vanishes identically"));
    }
    Ok(trapezoid(&num, grid.dv()) / den)
}

/// Seeded family of trace-free bumps on `[0, L]`.
pub fn trace_free_suite(l: f64, count: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a0 = rng.gen_range(0.5..2.0);
            let terms: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
                .collect();
            TestFunction::bump(l, a0, &terms)
        })
        .collect()
}

/// Minimum probe ratio over a function family.
pub fn min_ratio(params: &CarlemanParams, l: f64, suite: &[TestFunction]) -> Result<f64> {
    suite
        .iter()
        .map(|f| carleman_ratio_probe(params, l, f))
        .try_fold(f64::INFINITY, |m, r| r.map(|r| m.min(r)))
}

//! Legendre polynomial-exponential time basis.
//!
//! `Psi_n(t) = e^t Q_n(t)` where `Q_n(t) = sqrt((2n+1)/T) P_n(2t/T - 1)` is the
//! rescaled Legendre polynomial. The family is orthonormal in `L^2(0, T)` under
//! the weight `e^{-2t}`, and no `Psi_n'` vanishes identically (the constant
//! Legendre mode gets a nonzero derivative from the exponential factor).

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Legendre polynomial `P_n(x)` with a checked degree.
pub fn legendre_eval(n: i64, x: f64) -> Result<f64> {
    if n < 0 {
        return Err(Error::invalid(format!("negative Legendre degree {n}")));
    }
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre(n as usize, x))
}

/// `P_n(x)` by the three-term recurrence `(k+1)P_{k+1} = (2k+1)xP_k - kP_{k-1}`.
pub fn legendre(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Values and derivatives of `P_0..=P_nmax` at `x`.
///
/// Derivatives use `P'_{k+1} = P'_{k-1} + (2k+1) P_k`, which avoids the
/// `1/(1 - x^2)` singularity of the closed-form derivative at the endpoints.
pub fn legendre_table(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; nmax + 1];
    let mut dp = vec![0.0; nmax + 1];
    p[0] = 1.0;
    if nmax >= 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 1..nmax {
        p[k + 1] = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
        dp[k + 1] = dp[k - 1] + (2 * k + 1) as f64 * p[k];
    }
    (p, dp)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_table(n, x);
            dp = d[n];
            let dx = p[n] / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_table(n, x);
        dp = if d[n] != 0.0 { d[n] } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Truncated coefficient vector `c_0..=c_N` in the time basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector(pub Vec<f64>);

impl CoeffVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn unit(len: usize, k: usize) -> Self {
        let mut v = vec![0.0; len];
        v[k] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Empirical coefficient decay: `n^l |c_n|` for every mode.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub scaled: Vec<f64>,
    pub max: f64,
    pub argmax: usize,
}

/// Tabulated Legendre-exponential basis `Psi_0..=Psi_N` on a time grid.
#[derive(Debug, Clone)]
pub struct BasisSet {
    n_max: usize,
    t_final: f64,
    grid: TimeGrid,
    // psi[n][j] = Psi_n(t_j)
    psi: Vec<Vec<f64>>,
    dpsi: Vec<Vec<f64>>,
    gauss_nodes: Vec<f64>,
    gauss_weights: Vec<f64>,
    // row-major (N+1)x(N+1), stiffness[m*(N+1)+n] = s_{mn}
    stiffness: Vec<f64>,
    // projection[m][j]: weight of the sample at t_j in c_m
    projection: Vec<Vec<f64>>,
}

impl BasisSet {
    pub fn new(n_max: usize, grid: &TimeGrid) -> Result<Self> {
        let t_final = grid.t_final();
        let size = n_max + 1;

        let mut psi = vec![Vec::with_capacity(grid.len()); size];
        let mut dpsi = vec![Vec::with_capacity(grid.len()); size];
        for &t in grid.nodes() {
            let (vals, ders) = psi_all(n_max, t_final, t);
            for n in 0..size {
                psi[n].push(vals[n]);
                dpsi[n].push(ders[n]);
            }
        }

        let (xg, wg) = gauss_legendre(size);
        let gauss_nodes: Vec<f64> = xg.iter().map(|x| 0.5 * t_final * (x + 1.0)).collect();
        let gauss_weights: Vec<f64> = wg.iter().map(|w| 0.5 * t_final * w).collect();

        // s_{mn} = int e^{-2t} Psi_n' Psi_m dt = int (Q_n + Q_n') Q_m dt, degree <= 2N.
        let mut stiffness = vec![0.0; size * size];
        for (&t, &w) in gauss_nodes.iter().zip(&gauss_weights) {
            let (q, dq) = q_all(n_max, t_final, t);
            for m in 0..size {
                for n in 0..size {
                    stiffness[m * size + n] += w * (q[n] + dq[n]) * q[m];
                }
            }
        }

        let projection = product_weights(n_max, grid);

        Ok(Self {
            n_max,
            t_final,
            grid: grid.clone(),
            psi,
            dpsi,
            gauss_nodes,
            gauss_weights,
            stiffness,
            projection,
        })
    }

    /// Truncation index `N`; the basis has `N + 1` functions.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn size(&self) -> usize {
        self.n_max + 1
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn psi_table(&self, n: usize) -> &[f64] {
        &self.psi[n]
    }

    pub fn dpsi_table(&self, n: usize) -> &[f64] {
        &self.dpsi[n]
    }

    pub fn gauss_rule(&self) -> (&[f64], &[f64]) {
        (&self.gauss_nodes, &self.gauss_weights)
    }

    /// `s_{mn}`.
    pub fn stiffness(&self, m: usize, n: usize) -> f64 {
        self.stiffness[m * self.size() + n]
    }

    pub fn stiffness_matrix(&self) -> &[f64] {
        &self.stiffness
    }

    /// `Psi_n(t)` evaluated directly.
    pub fn psi(&self, n: usize, t: f64) -> f64 {
        let (q, _) = q_all(n, self.t_final, t);
        t.exp() * q[n]
    }

    /// `Psi_n'(t) = e^t (Q_n + Q_n')`.
    pub fn dpsi(&self, n: usize, t: f64) -> f64 {
        let (q, dq) = q_all(n, self.t_final, t);
        t.exp() * (q[n] + dq[n])
    }

    /// `Psi_n(0)` for every mode.
    pub fn psi_at_zero(&self) -> Vec<f64> {
        (0..self.size()).map(|n| self.psi[n][0]).collect()
    }

    /// Gram matrix `<Psi_m, Psi_n>_{e^{-2t}}` by the Gauss rule.
    pub fn gram(&self) -> Vec<f64> {
        let size = self.size();
        let mut g = vec![0.0; size * size];
        for (&t, &w) in self.gauss_nodes.iter().zip(&self.gauss_weights) {
            let (q, _) = q_all(self.n_max, self.t_final, t);
            for m in 0..size {
                for n in 0..size {
                    g[m * size + n] += w * q[m] * q[n];
                }
            }
        }
        g
    }

    /// Weighted coefficients `c_m = int_0^T e^{-2t} u(t) Psi_m(t) dt`, with `u`
    /// replaced by its piecewise quintic interpolant through the grid samples.
    pub fn project(&self, series: &[f64]) -> Result<CoeffVector> {
        if series.len() != self.grid.len() {
            return Err(Error::invalid(format!(
                "series has {} samples, time grid has {}",
                series.len(),
                self.grid.len()
            )));
        }
        Ok(CoeffVector(self.project_unchecked(series)))
    }

    pub(crate) fn project_unchecked(&self, series: &[f64]) -> Vec<f64> {
        self.projection
            .iter()
            .map(|row| row.iter().zip(series).map(|(w, u)| w * u).sum())
            .collect()
    }

    /// `sum_n c_n Psi_n(t)`.
    pub fn synthesize(&self, coeffs: &CoeffVector, t: f64) -> f64 {
        let (q, _) = q_all(self.n_max, self.t_final, t);
        t.exp() * coeffs.0.iter().zip(&q).map(|(c, q)| c * q).sum::<f64>()
    }

    /// `sum_n c_n Psi_n(t_j)` on every grid node.
    pub fn synthesize_on_grid(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (c, row) in coeffs.iter().zip(&self.psi) {
            if *c == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(row) {
                *o += c * p;
            }
        }
        out
    }

    /// Scaled coefficient sequence `n^l |c_n|` and its maximum.
    pub fn coefficient_decay_check(&self, series: &[f64], ell: u32) -> Result<DecayReport> {
        let c = self.project(series)?;
        let scaled: Vec<f64> = c
            .0
            .iter()
            .enumerate()
            .map(|(n, v)| (n as f64).powi(ell as i32) * v.abs())
            .collect();
        let (argmax, max) = scaled
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        Ok(DecayReport { scaled, max, argmax })
    }

    /// `||Psi_n'||_{e^{-2t}} / n^{3/2}` for `n = 1..=N`, by an exact Gauss rule.
    pub fn derivative_growth(&self) -> Vec<f64> {
        let (xg, wg) = gauss_legendre(self.size() + 1);
        let mut sums = vec![0.0; self.size()];
        for (x, w) in xg.iter().zip(&wg) {
            let t = 0.5 * self.t_final * (x + 1.0);
            let (q, dq) = q_all(self.n_max, self.t_final, t);
            for n in 0..self.size() {
                let d = q[n] + dq[n];
                sums[n] += 0.5 * self.t_final * w * d * d;
            }
        }
        (1..self.size())
            .map(|n| sums[n].sqrt() / (n as f64).powf(1.5))
            .collect()
    }
}

/// `Q_n(t)` and `Q_n'(t)` for `n = 0..=nmax`.
/// Samples per local interpolant in [`product_weights`].
const INTERP_POINTS: usize = 6;
/// Gauss points per grid interval in [`product_weights`].
const INTERVAL_GAUSS: usize = 8;

/// Product-integration weights: the data are interpolated on each grid interval
/// by the Lagrange polynomial through `INTERP_POINTS` nearby samples, and the
/// product with `e^{-2t} Psi_m = e^{-t} Q_m` is integrated by a Gauss rule.
/// Only the data are approximated, so the accuracy does not degrade with `m`
/// the way a node rule applied to `Psi_m u` does.
fn product_weights(n_max: usize, grid: &TimeGrid) -> Vec<Vec<f64>> {
    let (nt, h, t_final) = (grid.len(), grid.dt(), grid.t_final());
    let k = INTERP_POINTS.min(nt);
    let (xg, wg) = gauss_legendre(INTERVAL_GAUSS);
    let mut w = vec![vec![0.0; nt]; n_max + 1];
    let mut ell = vec![0.0; k];
    for j in 0..nt - 1 {
        let start = (j + 1).saturating_sub(k / 2).min(nt - k);
        for (x, wq) in xg.iter().zip(&wg) {
            // local coordinate in units of h from the first stencil node
            let s = (j - start) as f64 + 0.5 * (x + 1.0);
            let t = grid.nodes()[start] + s * h;
            for (a, l) in ell.iter_mut().enumerate() {
                *l = (0..k)
                    .filter(|&b| b != a)
                    .map(|b| (s - b as f64) / (a as f64 - b as f64))
                    .product();
            }
            let (q, _) = q_all(n_max, t_final, t);
            let scale = 0.5 * h * wq * (-t).exp();
            for (row, qm) in w.iter_mut().zip(&q) {
                for (a, l) in ell.iter().enumerate() {
                    row[start + a] += scale * qm * l;
                }
            }
        }
    }
    w
}

fn q_all(nmax: usize, t_final: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let x = 2.0 * t / t_final - 1.0;
    let (mut p, mut dp) = legendre_table(nmax, x);
    for n in 0..=nmax {
        let scale = ((2 * n + 1) as f64 / t_final).sqrt();
        p[n] *= scale;
        dp[n] *= scale * 2.0 / t_final;
    }
    (p, dp)
}

fn psi_all(nmax: usize, t_final: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let (q, dq) = q_all(nmax, t_final, t);
    let e = t.exp();
    let psi = q.iter().map(|v| e * v).collect();
    let dpsi = q.iter().zip(&dq).map(|(v, d)| e * (v + d)).collect();
    (psi, dpsi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize, t: f64, nt: usize) -> BasisSet {
        BasisSet::new(n, &TimeGrid::new(t, nt).unwrap()).unwrap()
    }

    #[test]
    fn legendre_low_degrees() {
        assert_eq!(legendre_eval(0, 0.7).unwrap(), 1.0);
        assert_eq!(legendre_eval(1, 0.3).unwrap(), 0.3);
        assert!((legendre_eval(2, 0.5).unwrap() + 0.125).abs() < 1e-15);
        assert!(legendre_eval(-1, 0.0).is_err());
        assert!(legendre_eval(2, 1.5).is_err());
    }

    #[test]
    fn legendre_recurrence_degree_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: f64 = rng.gen_range(-1.0..=1.0);
            let (p3, p4, p5) = (legendre(3, x), legendre(4, x), legendre(5, x));
            assert!((5.0 * p5 - (9.0 * x * p4 - 4.0 * p3)).abs() < 1e-13);
        }
    }

    #[test]
    fn legendre_derivative_matches_closed_form() {
        // P_3' = (15x^2 - 3)/2
        for &x in &[-1.0, -0.3, 0.0, 0.8, 1.0] {
            let (_, dp) = legendre_table(4, x);
            assert!((dp[3] - (15.0 * x * x - 3.0) / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact up to degree 9
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((integral - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gram_is_identity() {
        for &(n, t) in &[(0usize, 1.0), (5, 0.5), (20, 0.5), (30, 2.0)] {
            let b = basis(n, t, 11);
            let g = b.gram();
            let size = n + 1;
            for m in 0..size {
                for k in 0..size {
                    let target = if m == k { 1.0 } else { 0.0 };
                    assert!((g[m * size + k] - target).abs() < 1e-10, "N={n} ({m},{k})");
                }
            }
        }
    }

    #[test]
    fn stiffness_spot_values() {
        assert!((basis(0, 0.7, 5).stiffness(0, 0) - 1.0).abs() < 1e-12);
        let b = basis(1, 0.5, 5);
        assert!((b.stiffness(0, 1) - 4.0 * 3f64.sqrt()).abs() < 1e-10);
        assert!((b.stiffness(1, 1) - 1.0).abs() < 1e-12);
        assert!(b.stiffness(1, 0).abs() < 1e-12);
    }

    #[test]
    fn psi_zero_at_origin() {
        let b = basis(3, 0.5, 11);
        let c = CoeffVector::unit(4, 0);
        assert!((b.synthesize(&c, 0.0) - 1.0 / 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(b.synthesize(&CoeffVector::zeros(4), 0.3), 0.0);
    }

    #[test]
    fn derivative_never_vanishes() {
        let b = basis(20, 0.5, 301);
        for n in 0..=20 {
            let m = b.dpsi_table(n).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(m > 0.0, "mode {n}");
        }
        // constant mode: Psi_0' = Psi_0
        assert!((b.dpsi(0, 0.2) - b.psi(0, 0.2)).abs() < 1e-14);
    }

    #[test]
    fn derivative_tables_match_finite_differences() {
        let b = basis(10, 0.5, 31);
        let h = 1e-5;
        for n in 0..=10 {
            let scale = b.dpsi_table(n).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for &t in b.grid().nodes().iter().skip(1).take(29) {
                let fd = (b.psi(n, t + h) - b.psi(n, t - h)) / (2.0 * h);
                assert!((fd - b.dpsi(n, t)).abs() <= 1e-6 * scale, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn derivative_growth_bounded() {
        let growth = basis(30, 0.5, 11).derivative_growth();
        let max = growth.iter().cloned().fold(0.0, f64::max);
        assert!(max.is_finite() && max > 0.0);
        // the tail of the sequence should not blow up relative to its head
        assert!(growth[29] <= 2.0 * growth[..5].iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn project_zero_and_length_mismatch() {
        let b = basis(5, 0.5, 101);
        assert!(b.project(&vec![0.0; 101]).unwrap().0.iter().all(|c| *c == 0.0));
        assert!(b.project(&[1.0; 5]).is_err());
    }

    #[test]
    fn project_recovers_unit_mode() {
        let b = basis(20, 0.5, 301);
        let c = b.project(b.psi_table(3)).unwrap();
        for (m, v) in c.0.iter().enumerate() {
            let target = if m == 3 { 1.0 } else { 0.0 };
            assert!((v - target).abs() <= 1e-4, "m={m} v={v}");
        }
    }

    #[test]
    fn project_sine_matches_fine_trapezoid() {
        let t_final = 0.5;
        let b = basis(20, t_final, 301);
        let u: Vec<f64> = b.grid().nodes().iter().map(|t| (std::f64::consts::PI * t).sin()).collect();
        let c = b.project(&u).unwrap();
        let nf = 10_001;
        let hf = t_final / (nf - 1) as f64;
        for m in 0..=20 {
            let vals: Vec<f64> = (0..nf)
                .map(|j| {
                    let t = j as f64 * hf;
                    (-2.0 * t).exp() * (std::f64::consts::PI * t).sin() * b.psi(m, t)
                })
                .collect();
            let fine = crate::grid::trapezoid(&vals, hf);
            assert!((c.0[m] - fine).abs() < 1e-6, "m={m}: {} vs {fine}", c.0[m]);
        }
    }

    #[test]
    fn project_synthesize_round_trip() {
        let b = basis(20, 0.5, 301);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = b.project(&b.synthesize_on_grid(&coeffs)).unwrap();
        let worst = back.0.iter().zip(&coeffs).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        println!("round-trip error {worst:.3e}");
        assert!(worst < 1e-4);
    }

    #[test]
    fn projection_is_exact_for_quintic_data() {
        let b = basis(25, 0.5, 41);
        let u = |t: f64| 1.0 + t - 2.0 * t.powi(5);
        let samples: Vec<f64> = b.grid().nodes().iter().map(|&t| u(t)).collect();
        let c = b.project(&samples).unwrap();
        // independent oracle: 200-point Gauss rule on the whole interval
        let (x, w) = gauss_legendre(200);
        for m in 0..=25 {
            let oracle: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| {
                    let t = 0.25 * (x + 1.0);
                    0.25 * w * (-2.0 * t).exp() * u(t) * b.psi(m, t)
                })
                .sum();
            assert!((c.0[m] - oracle).abs() < 1e-12, "m={m}: {} vs {oracle}", c.0[m]);
        }
    }

    #[test]
    fn trapezoid_projection_would_be_too_coarse() {
        // plain trapezoid on the same grid leaves endpoint errors growing like m^2
        let b = basis(20, 0.5, 301);
        let w = b.grid().trapezoid_weights();
        let samples: Vec<Vec<f64>> = b.grid().nodes().iter().map(|&t| q_all(20, 0.5, t).0).collect();
        let g = |m: usize, n: usize| -> f64 { samples.iter().zip(&w).map(|(s, w)| w * s[m] * s[n]).sum() };
        assert!(g(3, 19).abs() > 1e-2);
        let c = b.project(b.psi_table(19)).unwrap();
        assert!(c.0[3].abs() < 1e-4);
    }

    #[test]
    fn decay_of_pure_exponential() {
        let b = basis(20, 0.5, 301);
        let u: Vec<f64> = b.grid().nodes().iter().map(|t| t.exp()).collect();
        let c = b.project(&u).unwrap();
        assert!((c.0[0] - 0.5f64.sqrt()).abs() < 1e-12);
        for n in 1..=20 {
            assert!(c.0[n].abs() < 1e-5, "n={n}: {}", c.0[n]);
        }
        let zero = b.coefficient_decay_check(&vec![0.0; 301], 3).unwrap();
        assert!(zero.scaled.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn decay_of_smooth_sine() {
        let b = basis(20, 0.5, 301);
        let u: Vec<f64> = b
            .grid()
            .nodes()
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * t).sin())
            .collect();
        let rep = b.coefficient_decay_check(&u, 3).unwrap();
        assert!(rep.max.is_finite());
        assert!(rep.argmax <= 8, "argmax {}", rep.argmax);
    }
}

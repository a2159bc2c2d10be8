//! Coagulation / fragmentation kernels and the size-drift coefficient.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::trapezoid;

type RateFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A symmetric, nonnegative rate function `(v, v*) -> rate`.
#[derive(Clone)]
pub struct Kernel {
    label: String,
    rate: Arc<RateFn>,
    zero: bool,
}

impl Kernel {
    pub fn from_fn(label: impl Into<String>, rate: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            rate: Arc::new(rate),
            zero: false,
        }
    }

    /// `K(v, v*) = v + v*`.
    pub fn sum() -> Self {
        Self::from_fn("sum", |v, w| v + w)
    }

    /// `K(v, v*) = v v*`.
    pub fn product() -> Self {
        Self::from_fn("product", |v, w| v * w)
    }

    /// Constant kernel.
    pub fn constant(c: f64) -> Self {
        Self::from_fn(format!("constant({c})"), move |_, _| c)
    }

    pub fn zero() -> Self {
        Self {
            label: "zero".into(),
            rate: Arc::new(|_, _| 0.0),
            zero: true,
        }
    }

    /// Look up a shipped kernel by its configuration label.
    pub fn by_label(label: &str) -> Result<Self> {
        match label.trim() {
            "sum" => Ok(Self::sum()),
            "product" => Ok(Self::product()),
            "zero" => Ok(Self::zero()),
            other => match other.strip_prefix("constant:") {
                Some(c) => c
                    .trim()
                    .parse::<f64>()
                    .map(Self::constant)
                    .map_err(|_| Error::invalid(format!("bad constant kernel `{other}`"))),
                None => Err(Error::invalid(format!("unknown kernel label `{other}`"))),
            },
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    #[inline]
    pub fn eval(&self, v: f64, w: f64) -> f64 {
        (self.rate)(v, w)
    }

    /// Checks symmetry and nonnegativity on the given pairs.
    pub fn check_pairs(&self, pairs: &[(f64, f64)]) -> Result<()> {
        for &(v, w) in pairs {
            let a = self.eval(v, w);
            let b = self.eval(w, v);
            if !(a >= 0.0) {
                return Err(self.invalid_kernel(format!("negative rate {a} at ({v}, {w})")));
            }
            if a != b {
                return Err(self.invalid_kernel(format!("asymmetric at ({v}, {w}): {a} vs {b}")));
            }
        }
        Ok(())
    }

    pub(crate) fn invalid_kernel(&self, reason: String) -> Error {
        Error::InvalidKernel {
            label: self.label.clone(),
            reason,
        }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel").field("label", &self.label).finish()
    }
}

/// Size-drift coefficient `b(v)` with a known sup bound.
#[derive(Clone)]
pub struct Drift {
    value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    sup_bound: f64,
    label: String,
}

impl Drift {
    pub fn constant(b: f64) -> Self {
        Self {
            value: Arc::new(move |_| b),
            sup_bound: b.abs(),
            label: format!("{b}"),
        }
    }

    pub fn from_fn(
        label: impl Into<String>,
        sup_bound: f64,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            sup_bound,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        (self.value)(v)
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Verifies `|b(v)| <= sup_bound` on the given nodes.
    pub fn check_bound(&self, nodes: &[f64]) -> Result<()> {
        match nodes.iter().find(|&&v| self.eval(v).abs() > self.sup_bound) {
            Some(v) => Err(Error::invalid(format!(
                "drift {} exceeds its bound {} at v = {v}",
                self.eval(*v),
                self.sup_bound
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drift")
            .field("label", &self.label)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

/// Numerically estimated suprema of the kernel growth conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// `sup_v int K^2 e^{-2(v*-L)_+}`
    pub coag_square: f64,
    /// `sup_v int K e^{-(v*-L)_+}`
    pub coag_tail: f64,
    /// `sup_v int V^2 e^{-2v*}`
    pub frag_square: f64,
    /// `sup_v int V e^{-v*}`
    pub frag_tail: f64,
    pub pass: bool,
}

impl AdmissibilityReport {
    fn values(&self) -> [f64; 4] {
        [self.coag_square, self.coag_tail, self.frag_square, self.frag_tail]
    }
}

const PROBE_STEP: f64 = 0.005;
const PROBE_V_NODES: usize = 101;
const SATURATION_TOL: f64 = 1e-3;

/// Evaluates the four growth integrals for `kernel` in both the coagulation and
/// the fragmentation role, truncated at `tail_cutoff`.
///
/// The report passes when every supremum is finite and the suprema at the
/// cutoff agree with those at the halfway cutoff `L + (cutoff - L)/2`.
pub fn admissibility_probe(kernel: &Kernel, l: f64, tail_cutoff: f64) -> Result<AdmissibilityReport> {
    if !(l > 0.0) {
        return Err(Error::invalid(format!("L must be positive, got {l}")));
    }
    if !(tail_cutoff > l) {
        return Err(Error::invalid(format!("tail cutoff {tail_cutoff} must exceed L = {l}")));
    }
    let full = probe_suprema(kernel, l, tail_cutoff);
    let half = probe_suprema(kernel, l, l + 0.5 * (tail_cutoff - l));
    let finite = full.iter().all(|v| v.is_finite());
    let saturated = full
        .iter()
        .zip(&half)
        .all(|(a, b)| (a - b).abs() <= SATURATION_TOL * a.abs().max(f64::MIN_POSITIVE));
    let report = AdmissibilityReport {
        coag_square: full[0],
        coag_tail: full[1],
        frag_square: full[2],
        frag_tail: full[3],
        pass: finite && saturated,
    };
    if !report.pass {
        log::warn!(
            "kernel `{}` failed the admissibility probe: {:?}",
            kernel.label(),
            report.values()
        );
    }
    Ok(report)
}

fn probe_suprema(kernel: &Kernel, l: f64, cutoff: f64) -> [f64; 4] {
    let n = (cutoff / PROBE_STEP).ceil() as usize + 1;
    let h = cutoff / (n - 1) as f64;
    let ws: Vec<f64> = (0..n).map(|j| j as f64 * h).collect();
    let mut sup = [0.0f64; 4];
    let mut buf = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..PROBE_V_NODES {
        let v = l * i as f64 / (PROBE_V_NODES - 1) as f64;
        for (j, &w) in ws.iter().enumerate() {
            let k = kernel.eval(v, w);
            let tail = (-(w - l).max(0.0)).exp();
            let decay = (-w).exp();
            buf[0][j] = k * k * tail * tail;
            buf[1][j] = k * tail;
            buf[2][j] = k * k * decay * decay;
            buf[3][j] = k * decay;
        }
        for (s, b) in sup.iter_mut().zip(&buf) {
            *s = s.max(trapezoid(b, h));
        }
    }
    sup
}

/// `sup_{v in [0, L]} int_0^v V(v - v*, v) dv*`, the fragmentation loss rate bound.
pub fn fragmentation_loss_bound(kernel: &Kernel, l: f64, nodes: usize) -> f64 {
    let nodes = nodes.max(2);
    (0..nodes)
        .map(|i| {
            let v = l * i as f64 / (nodes - 1) as f64;
            let n = nodes.max(2);
            let h = v / (n - 1) as f64;
            let vals: Vec<f64> = (0..n)
                .map(|j| kernel.eval(v - j as f64 * h, v))
                .collect();
            trapezoid(&vals, h)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pairs(n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)))
            .collect()
    }

    #[test]
    fn sum_kernel_values() {
        let k = Kernel::sum();
        assert_eq!(k.eval(0.0, 0.0), 0.0);
        assert_eq!(k.eval(1.0, 2.0), 3.0);
        for (a, b) in random_pairs(100, 1) {
            assert_eq!(k.eval(a, b), k.eval(b, a));
        }
    }

    #[test]
    fn shipped_kernels_symmetric() {
        let pairs = random_pairs(1000, 2);
        for label in ["sum", "product", "zero", "constant: 2.5"] {
            Kernel::by_label(label).unwrap().check_pairs(&pairs).unwrap();
        }
        assert!(Kernel::by_label("gelling").is_err());
    }

    #[test]
    fn asymmetric_and_negative_kernels_rejected() {
        let pairs = random_pairs(10, 3);
        let skew = Kernel::from_fn("skew", |v, w| 2.0 * v + w);
        assert!(matches!(skew.check_pairs(&pairs), Err(Error::InvalidKernel { .. })));
        let neg = Kernel::from_fn("neg", |v, w| -(v + w) - 1.0);
        assert!(neg.check_pairs(&pairs).is_err());
    }

    #[test]
    fn zero_kernel_probe() {
        let r = admissibility_probe(&Kernel::zero(), 2.0, 20.0).unwrap();
        assert_eq!(r.values(), [0.0; 4]);
    }

    #[test]
    fn sum_kernel_probe_saturates() {
        let a = admissibility_probe(&Kernel::sum(), 2.0, 20.0).unwrap();
        let b = admissibility_probe(&Kernel::sum(), 2.0, 40.0).unwrap();
        assert!(a.pass && b.pass);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-3 * x.abs(), "{x} vs {y}");
        }
        // closed form at v = L for the tail integral: int_0^L (L+w) dw + int_L^inf (L+w) e^{-(w-L)} dw
        let l = 2.0f64;
        let closed = 1.5 * l * l + (2.0 * l + 1.0);
        assert!((a.coag_tail - closed).abs() < 1e-3, "{} vs {closed}", a.coag_tail);
    }

    #[test]
    fn product_kernel_probe_closed_form() {
        let r = admissibility_probe(&Kernel::product(), 2.0, 30.0).unwrap();
        assert!(r.pass);
        // sup at v = L: int_0^inf (L w)^2 e^{-2w} dw = L^2 / 4, int L w e^{-w} = L
        assert!((r.frag_square - 1.0).abs() < 1e-4, "{}", r.frag_square);
        assert!((r.frag_tail - 2.0).abs() < 1e-4, "{}", r.frag_tail);
        // int_0^L (L w)^2 dw + int_L^inf (L w)^2 e^{-2(w-L)} dw
        let coag_sq = 4.0 * 8.0 / 3.0 + 4.0 * (4.0 / 2.0 + 2.0 * 2.0 / 4.0 + 2.0 / 8.0);
        assert!((r.coag_square - coag_sq).abs() < 1e-3 * coag_sq, "{} vs {coag_sq}", r.coag_square);
    }

    #[test]
    fn probe_rejects_bad_domain() {
        assert!(admissibility_probe(&Kernel::sum(), 2.0, 1.0).is_err());
        assert!(admissibility_probe(&Kernel::sum(), 0.0, 1.0).is_err());
    }

    #[test]
    fn growing_kernel_fails_saturation() {
        let k = Kernel::from_fn("exp", |v, w| (v + w).exp());
        let r = admissibility_probe(&k, 2.0, 20.0).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn fragmentation_loss_closed_form() {
        // int_0^v (2v - s) ds = 3v^2/2 -> 6 at v = 2
        let b = fragmentation_loss_bound(&Kernel::sum(), 2.0, 201);
        assert!((b - 6.0).abs() < 1e-6);
    }

    #[test]
    fn drift_bound() {
        let b = Drift::constant(1.0);
        assert!(b.check_bound(&[0.0, 1.0, 5.0]).is_ok());
        let bad = Drift::from_fn("x", 1.0, |v| v);
        assert!(bad.check_bound(&[0.0, 2.0]).is_err());
    }
}

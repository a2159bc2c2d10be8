//! Uniform one-dimensional grids in time and in particle size.

use crate::error::{Error, Result};

/// Uniform grid `t_n = n * T / (Nt - 1)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
        }
        if nt < 2 {
            return Err(Error::invalid(format!("time grid needs at least 2 nodes, got {nt}")));
        }
        Ok(Self {
            t_final,
            nodes: uniform_nodes(t_final, nt),
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.t_final / (self.nodes.len() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Composite trapezoid weights on the grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nodes.len(), self.dt())
    }
}

/// Uniform grid `v_i = i * v_max / (Nv - 1)` on `[0, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeGrid {
    v_max: f64,
    nodes: Vec<f64>,
}

impl SizeGrid {
    pub fn new(v_max: f64, nv: usize) -> Result<Self> {
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::invalid(format!("size endpoint must be positive, got {v_max}")));
        }
        if nv < 2 {
            return Err(Error::invalid(format!("size grid needs at least 2 nodes, got {nv}")));
        }
        Ok(Self {
            v_max,
            nodes: uniform_nodes(v_max, nv),
        })
    }

    /// Grid on `[0, v_max]` with the given spacing; `v_max` must be a multiple of `dv`.
    pub fn with_spacing(v_max: f64, dv: f64) -> Result<Self> {
        let cells = v_max / dv;
        let rounded = cells.round();
        if rounded < 1.0 || (cells - rounded).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::invalid(format!(
                "endpoint {v_max} is not a multiple of the spacing {dv}"
            )));
        }
        Self::new(v_max, rounded as usize + 1)
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dv(&self) -> f64 {
        self.v_max / (self.nodes.len() - 1) as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the node located at `v`, if `v` lies on the grid.
    pub fn index_of(&self, v: f64) -> Option<usize> {
        let pos = v / self.dv();
        let idx = pos.round();
        if idx < 0.0 || idx as usize >= self.nodes.len() {
            return None;
        }
        ((pos - idx).abs() <= 1e-9).then_some(idx as usize)
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nodes.len(), self.dv())
    }
}

fn uniform_nodes(end: f64, n: usize) -> Vec<f64> {
    let h = end / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    nodes[n - 1] = end;
    nodes
}

/// Trapezoid weights for `n` equispaced points with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            w
        }
    }
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_endpoints() {
        let g = TimeGrid::new(0.5, 301).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 0.5);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(0.5, 1).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
    }

    #[test]
    fn size_grid_node_lookup() {
        let g = SizeGrid::new(10.0, 241).unwrap();
        assert_eq!(g.index_of(2.0), Some(48));
        assert_eq!(g.index_of(0.0), Some(0));
        assert_eq!(g.index_of(2.01), None);
        assert_eq!(g.index_of(11.0), None);
        let r = SizeGrid::with_spacing(2.0, g.dv()).unwrap();
        assert_eq!(r.len(), 49);
        assert!(SizeGrid::with_spacing(2.0, 0.3).is_err());
    }

    #[test]
    fn trapezoid_exact_on_linear() {
        let h = 0.1;
        let vals: Vec<f64> = (0..11).map(|i| 3.0 * i as f64 * h + 1.0).collect();
        assert!((trapezoid(&vals, h) - 2.5).abs() < 1e-12);
    }
}

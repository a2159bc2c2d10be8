use coagrecon::basis::{BasisSet, CoeffVector};
use coagrecon::carleman::{min_ratio, trace_free_suite, CarlemanParams};
use coagrecon::cli::Settings;
use coagrecon::error::Error;
use coagrecon::forward::{self, extract_boundary_data, solve_forward};
use coagrecon::grid::TimeGrid;
use coagrecon::picard::{self, initial_errors, Reconstructor};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_config_error() => PyValueError::new_err(e.to_string()),
        e => PyArithmeticError::new_err(e.to_string()),
    }
}

/// Settings keys are the CLI `--set` keys; values go through `str()`.
fn settings(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Settings> {
    let mut s = Settings::default();
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            s.set(&key, &v.str()?.to_string()).map_err(py_err)?;
        }
    }
    s.validate().map_err(py_err)?;
    Ok(s)
}

/// Orthonormal basis `Psi_n = e^t Q_n` on `[0, t_final]`, projecting data sampled on `nt` nodes.
#[pyclass(frozen)]
struct Basis {
    inner: BasisSet,
}

#[pymethods]
impl Basis {
    #[new]
    #[pyo3(signature = (n_max, t_final = 0.5, nt = 301))]
    fn new(n_max: usize, t_final: f64, nt: usize) -> PyResult<Self> {
        let grid = TimeGrid::new(t_final, nt).map_err(py_err)?;
        Ok(Self {
            inner: BasisSet::new(n_max, &grid).map_err(py_err)?,
        })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.grid().nodes().to_vec()
    }

    fn psi(&self, n: usize, t: f64) -> PyResult<f64> {
        if n >= self.inner.size() {
            return Err(PyValueError::new_err(format!("mode {n} out of range")));
        }
        Ok(self.inner.psi(n, t))
    }

    fn stiffness(&self, m: usize, n: usize) -> PyResult<f64> {
        if m >= self.inner.size() || n >= self.inner.size() {
            return Err(PyValueError::new_err(format!("index ({m}, {n}) out of range")));
        }
        Ok(self.inner.stiffness(m, n))
    }

    /// Gram matrix as a list of rows.
    fn gram(&self) -> Vec<Vec<f64>> {
        let n = self.inner.size();
        self.inner.gram().chunks(n).map(|r| r.to_vec()).collect()
    }

    fn project(&self, series: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.project(&series).map_err(py_err)?.0)
    }

    fn synthesize(&self, coeffs: Vec<f64>, t: f64) -> PyResult<f64> {
        if coeffs.len() != self.inner.size() {
            return Err(PyValueError::new_err(format!(
                "expected {} coefficients, got {}",
                self.inner.size(),
                coeffs.len()
            )));
        }
        Ok(self.inner.synthesize(&CoeffVector(coeffs), t))
    }
}

#[pyclass(frozen)]
#[derive(Clone)]
struct BoundaryData {
    inner: forward::BoundaryData,
}

#[pymethods]
impl BoundaryData {
    #[staticmethod]
    #[pyo3(signature = (t_final = 0.5, nt = 301))]
    fn zeros(t_final: f64, nt: usize) -> PyResult<Self> {
        let grid = TimeGrid::new(t_final, nt).map_err(py_err)?;
        Ok(Self {
            inner: forward::BoundaryData::zeros(grid),
        })
    }

    #[staticmethod]
    fn read_csv(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: forward::BoundaryData::read_csv(&path).map_err(py_err)?,
        })
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(py_err)
    }

    /// Copy with multiplicative uniform noise of level `delta`.
    fn with_noise(&self, delta: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: forward::add_noise(&self.inner, delta, seed).map_err(py_err)?,
        })
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.tgrid.nodes().to_vec()
    }

    #[getter]
    fn phi0(&self) -> Vec<f64> {
        self.inner.phi0.clone()
    }

    #[getter(phiL)]
    fn phi_l(&self) -> Vec<f64> {
        self.inner.phi_l.clone()
    }

    #[getter]
    fn psi0(&self) -> Vec<f64> {
        self.inner.psi0.clone()
    }

    #[getter(psiL)]
    fn psi_l(&self) -> Vec<f64> {
        self.inner.psi_l.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.tgrid.len()
    }
}

#[pyclass(frozen, get_all)]
struct Reconstruction {
    v: Vec<f64>,
    f0_rec: Vec<f64>,
    /// Sampled true initial density, when a test profile was named.
    f0_true: Option<Vec<f64>>,
    consec_errors: Vec<f64>,
    empirical_rho: f64,
    rel_l2: Option<f64>,
    rel_linf: Option<f64>,
}

#[pymethods]
impl Reconstruction {
    fn __repr__(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or("None".to_string(), |v| format!("{v:.4}"));
        format!(
            "Reconstruction(nodes={}, steps={}, empirical_rho={:.4}, rel_l2={}, rel_linf={})",
            self.v.len(),
            self.consec_errors.len(),
            self.empirical_rho,
            fmt(self.rel_l2),
            fmt(self.rel_linf)
        )
    }
}

/// Forward solve of the chosen test, boundary extraction and noise.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn generate_data(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<BoundaryData> {
    let s = settings(kwargs)?;
    let inner = py
        .allow_threads(|| {
            let sol = solve_forward(&s.forward_config()?)?;
            forward::add_noise(&extract_boundary_data(&sol, s.inverse.l)?, s.noise, s.seed)
        })
        .map_err(py_err)?;
    Ok(BoundaryData { inner })
}

/// Carleman-Picard reconstruction from boundary data. Errors against the
/// true initial density are filled in when `test` is given.
#[pyfunction]
#[pyo3(signature = (data, **kwargs))]
fn reconstruct(py: Python<'_>, data: &BoundaryData, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Reconstruction> {
    let with_truth = match kwargs {
        Some(kw) => kw.contains("test")?,
        None => false,
    };
    let s = settings(kwargs)?;
    let bd = data.inner.clone();
    py.allow_threads(|| {
        let rec = Reconstructor::new(s.inverse_config()?, &bd.tgrid)?;
        let (hist, res) = rec.run(&bd)?;
        let v = rec.grid().nodes().to_vec();
        let (f0_true, errors) = if with_truth {
            let truth = s.profile()?.sample(&v);
            let e = initial_errors(rec.grid(), &res.f0_rec, &truth)?;
            (Some(truth), Some(e))
        } else {
            (None, None)
        };
        Ok(Reconstruction {
            v,
            f0_rec: res.f0_rec,
            f0_true,
            empirical_rho: hist.empirical_rho(),
            consec_errors: hist.consec_errors,
            rel_l2: errors.map(|e| e.0),
            rel_linf: errors.map(|e| e.1),
        })
    })
    .map_err(py_err)
}

/// Relative sup-norm truncation error of the `phiL` expansion for each `N`.
#[pyfunction]
fn phi_of_n(data: &BoundaryData, ns: Vec<usize>) -> PyResult<Vec<f64>> {
    picard::phi_of_n(&data.inner, &ns).map_err(py_err)
}

/// Smallest Carleman ratio over `count` random trace-free functions on `[0, l]`.
#[pyfunction]
#[pyo3(signature = (lam, beta = 10.0, v0 = -1.0, l = 2.0, count = 20, seed = 0))]
fn carleman_min_ratio(lam: f64, beta: f64, v0: f64, l: f64, count: usize, seed: u64) -> PyResult<f64> {
    let params = CarlemanParams::new(lam, beta, v0).map_err(py_err)?;
    min_ratio(&params, l, &trace_free_suite(l, count, seed)).map_err(py_err)
}

#[pymodule]
fn _coagrecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Basis>()?;
    m.add_class::<BoundaryData>()?;
    m.add_class::<Reconstruction>()?;
    m.add_function(wrap_pyfunction!(generate_data, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(phi_of_n, m)?)?;
    m.add_function(wrap_pyfunction!(carleman_min_ratio, m)?)?;
    Ok(())
}

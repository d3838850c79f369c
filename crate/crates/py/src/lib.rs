//! Python bindings for `gspq`.
//!
//! ```python
//! import gspq
//! s = gspq.Spectrum(k=0.5, T=1.0, count=1000)
//! pq = gspq.ProductQuantizer(s, budget=64)
//! lower, upper = pq.distortion()
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gspq_core::funcquant::{self, allocate, codebook_paths, exact_distortion};
use gspq_core::mc::{self, McConfig};
use gspq_core::{gauss1d, rate, spectrum, AllocMethod, CSeqEntry, DistortionTable, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } | Error::QuantizerNoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn alloc_method(name: &str) -> PyResult<AllocMethod> {
    match name {
        "exhaustive" => Ok(AllocMethod::Exhaustive),
        "greedy" => Ok(AllocMethod::Greedy),
        _ => Err(PyValueError::new_err(format!(
            "method must be 'exhaustive' or 'greedy', got {name:?}"
        ))),
    }
}

/// Parameters `(k, T)` of `Z_t = W_{k+t}` on `[0, T]`.
#[pyclass(name = "ProcessParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyProcessParams(gspq_core::ProcessParams);

#[pymethods]
impl PyProcessParams {
    #[new]
    #[pyo3(signature = (k, T=1.0))]
    #[allow(non_snake_case)]
    fn new(k: f64, T: f64) -> PyResult<Self> {
        gspq_core::ProcessParams::new(k, T).map(Self).map_err(to_py)
    }

    #[getter]
    fn k(&self) -> f64 {
        self.0.k()
    }

    #[getter(T)]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    fn covariance(&self, t: f64, s: f64) -> PyResult<f64> {
        self.0.covariance(t, s).map_err(to_py)
    }

    fn trace(&self) -> f64 {
        self.0.trace()
    }

    fn __repr__(&self) -> String {
        format!("ProcessParams(k={}, T={})", self.0.k(), self.0.horizon())
    }
}

/// First `count` Karhunen–Loève eigenpairs.
#[pyclass(name = "Spectrum", frozen)]
struct PySpectrum(spectrum::Spectrum);

#[pymethods]
impl PySpectrum {
    #[new]
    #[pyo3(signature = (k, T=1.0, count=1000, tol=spectrum::DEFAULT_TOL))]
    #[allow(non_snake_case)]
    fn new(py: Python<'_>, k: f64, T: f64, count: usize, tol: f64) -> PyResult<Self> {
        let params = gspq_core::ProcessParams::new(k, T).map_err(to_py)?;
        py.detach(|| spectrum::spectrum_batch(&params, count, tol))
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn params(&self) -> PyProcessParams {
        PyProcessParams(*self.0.params())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Eigenvalues `λ_1 ≥ λ_2 ≥ …`.
    fn lambdas(&self) -> Vec<f64> {
        self.0.lambdas().collect()
    }

    /// Roots `x_ℓ` of `cot(x) = (k/T) x`.
    fn roots(&self) -> Vec<f64> {
        self.0.pairs().iter().map(|p| p.x).collect()
    }

    fn c_sequence(&self) -> Vec<f64> {
        self.0.c_sequence().iter().map(|e| e.c).collect()
    }

    /// `(lower, upper)` for the sum of the eigenvalues not computed.
    fn tail_bounds(&self) -> (f64, f64) {
        let t = self.0.tail_bounds();
        (t.lower, t.upper)
    }

    fn partial_sum(&self) -> f64 {
        self.0.partial_sum().0
    }

    /// Normalized eigenfunction `φ_ℓ` evaluated at each of `t`.
    fn eigenfunction(&self, ell: usize, t: Vec<f64>) -> PyResult<Vec<f64>> {
        let pair = self
            .0
            .pair(ell)
            .ok_or_else(|| PyValueError::new_err(format!("ell must be in 1..={}", self.0.len())))?;
        t.iter()
            .map(|&t| pair.eigenfunction(self.0.params(), t).map_err(to_py))
            .collect()
    }

    fn __repr__(&self) -> String {
        let p = self.0.params();
        format!("Spectrum(k={}, T={}, count={})", p.k(), p.horizon(), self.0.len())
    }
}

/// Optimal quadratic quantizer of `N(0, 1)` with `n` levels.
#[pyclass(name = "ScalarQuantizer", frozen)]
struct PyScalarQuantizer(gauss1d::ScalarQuantizer);

#[pymethods]
impl PyScalarQuantizer {
    #[new]
    #[pyo3(signature = (n, tol=gauss1d::DEFAULT_TOL, max_iter=gauss1d::DEFAULT_MAX_ITER))]
    fn new(n: usize, tol: f64, max_iter: usize) -> PyResult<Self> {
        gauss1d::optimize(n, tol, max_iter).map(Self).map_err(to_py)
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.0.points().to_vec()
    }

    #[getter]
    fn boundaries(&self) -> Vec<f64> {
        self.0.boundaries().to_vec()
    }

    #[getter]
    fn distortion(&self) -> f64 {
        self.0.distortion()
    }

    fn nearest_index(&self, z: f64) -> usize {
        self.0.nearest_index(z)
    }

    fn __len__(&self) -> usize {
        self.0.levels()
    }
}

/// Product codebook over the KL coordinates of a spectrum.
#[pyclass(name = "ProductQuantizer", frozen)]
struct PyProductQuantizer(funcquant::ProductQuantizer);

#[pymethods]
impl PyProductQuantizer {
    #[new]
    #[pyo3(signature = (spectrum, budget, method="exhaustive"))]
    fn new(py: Python<'_>, spectrum: &PySpectrum, budget: usize, method: &str) -> PyResult<Self> {
        let method = alloc_method(method)?;
        let s = &spectrum.0;
        py.detach(|| {
            let table = DistortionTable::build(budget.clamp(1, gauss1d::DEFAULT_TABLE_CAP))?;
            let allocation = allocate(s, &table, budget, method)?;
            funcquant::build(s, &allocation, &table)
        })
        .map(Self)
        .map_err(to_py)
    }

    #[getter]
    fn levels(&self) -> Vec<usize> {
        self.0.allocation().levels().to_vec()
    }

    #[getter]
    fn codebook_size(&self) -> usize {
        self.0.codebook_size()
    }

    /// `(lower, upper)` bracket of the expected squared `L²` error.
    fn distortion(&self) -> (f64, f64) {
        let b = exact_distortion(&self.0);
        (b.lower, b.upper)
    }

    /// Codepoints of coordinate `j` (0-based), scaled by `√λ_j`.
    fn codepoints(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.0.allocation().len() {
            return Err(PyValueError::new_err(format!(
                "coordinate {j} out of range (0..{})",
                self.0.allocation().len()
            )));
        }
        Ok(self.0.codepoints(j))
    }

    /// Codeword index tuple nearest to a path with KL coordinates
    /// `coefficients`.
    fn nearest(&self, coefficients: Vec<f64>) -> PyResult<Vec<usize>> {
        funcquant::nearest(&self.0, &coefficients).map_err(to_py)
    }

    /// Every codeword rendered on `grid`, as `(index, values)` pairs.
    fn paths(&self, grid: Vec<f64>) -> PyResult<Vec<(Vec<usize>, Vec<f64>)>> {
        Ok(codebook_paths(&self.0, &grid)
            .map_err(to_py)?
            .into_iter()
            .map(|p| (p.index, p.values))
            .collect())
    }

    /// Monte Carlo estimate `(mean, stderr)` of the distortion.
    #[pyo3(signature = (samples, seed=0, truncation=64))]
    fn monte_carlo(&self, py: Python<'_>, samples: usize, seed: u64, truncation: usize) -> PyResult<(f64, f64)> {
        let cfg = McConfig {
            samples,
            seed,
            truncation: truncation.max(self.0.allocation().len()),
            grid: 64,
        };
        py.detach(|| mc::estimate_distortion(&self.0, &cfg))
            .map(|e| (e.mean, e.stderr))
            .map_err(to_py)
    }
}

/// Root `x_ℓ` of `cot(x) = (k/T) x` in `((ℓ−1)π, (2ℓ−1)π/2]`.
#[pyfunction]
#[pyo3(signature = (k, T, ell, tol=spectrum::DEFAULT_TOL))]
#[allow(non_snake_case)]
fn solve_root(k: f64, T: f64, ell: usize, tol: f64) -> PyResult<f64> {
    let p = gspq_core::ProcessParams::new(k, T).map_err(to_py)?;
    spectrum::solve_root(&p, ell, tol).map_err(to_py)
}

#[pyfunction]
#[allow(non_snake_case)]
fn eigenvalue(k: f64, T: f64, ell: usize) -> PyResult<f64> {
    let p = gspq_core::ProcessParams::new(k, T).map_err(to_py)?;
    spectrum::eigenvalue(&p, ell).map_err(to_py)
}

/// `[(n, d_n)]` for `n = 1..=max_n`.
#[pyfunction]
fn distortion_table(max_n: usize) -> PyResult<Vec<(usize, f64)>> {
    gauss1d::distortion_table(max_n).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (r=2, d=1))]
fn zador_limit(r: u32, d: u32) -> PyResult<f64> {
    gauss1d::zador_limit(r, d).map_err(to_py)
}

/// `(C, p, q)` with `e_n ∼ C (ln n)^{-p} (ln ln n)^{-q}`.
#[pyfunction]
fn sharp_constant(c: f64, b: f64, a: f64) -> PyResult<(f64, f64, f64)> {
    let s = rate::sharp_constant(&rate::RegVarying::new(c, b, a).map_err(to_py)?);
    Ok((s.coefficient, s.log_exponent, s.loglog_exponent))
}

#[pyfunction]
#[allow(non_snake_case)]
fn theta_bounds(k: f64, T: f64, n: u64) -> PyResult<(f64, f64)> {
    let p = gspq_core::ProcessParams::new(k, T).map_err(to_py)?;
    rate::theta_bounds(&p, n).map_err(to_py)
}

#[pyfunction]
#[allow(non_snake_case)]
fn remark_constant(c_inf: f64, T: f64) -> PyResult<f64> {
    rate::remark_constant(c_inf, T).map_err(to_py)
}

/// `(estimate, halfwidth, slope)` from `c_1, c_2, …`.
#[pyfunction]
#[pyo3(signature = (cseq, window=0.5))]
fn estimate_c_inf(cseq: Vec<f64>, window: f64) -> PyResult<(f64, f64, f64)> {
    let entries: Vec<CSeqEntry> = cseq
        .into_iter()
        .enumerate()
        .map(|(i, c)| CSeqEntry { ell: i + 1, c })
        .collect();
    let e = rate::estimate_c_inf(&entries, window).map_err(to_py)?;
    Ok((e.estimate, e.halfwidth, e.slope))
}

/// `(coefficient, exponent, r2)` of `distortion ≈ C (ln n)^exponent`.
#[pyfunction]
fn fit_rate(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = rate::fit_rate(&points).map_err(to_py)?;
    Ok((f.coefficient, f.exponent, f.r2))
}

#[pymodule]
fn gspq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProcessParams>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyScalarQuantizer>()?;
    m.add_class::<PyProductQuantizer>()?;
    m.add_function(wrap_pyfunction!(solve_root, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(distortion_table, m)?)?;
    m.add_function(wrap_pyfunction!(zador_limit, m)?)?;
    m.add_function(wrap_pyfunction!(sharp_constant, m)?)?;
    m.add_function(wrap_pyfunction!(theta_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(remark_constant, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_c_inf, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

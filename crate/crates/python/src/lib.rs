//! Python bindings: model engines, the diagnostics and the figure runner.

use std::path::Path;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use scramble::diagnostics::{self, DiagnosticSeries, TimeGrid};
use scramble::dynamics::EvolutionEngine;
use scramble::experiment::{self, OpSpec, RawConfig, RunConfig};
use scramble::linalg::ComplexMatrix;
use scramble::models::{self, ModelSpec, NamedState, PerturbationKind, PerturbationSpec, TCSpec, TFIMSpec};

fn err(e: scramble::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid(spec: &str) -> PyResult<TimeGrid> {
    spec.parse().map_err(err)
}

fn op(spec: &str) -> PyResult<scramble::hilbert::LocalOperator> {
    Ok(spec.parse::<OpSpec>().map_err(err)?.local())
}

fn series_dict<'py>(py: Python<'py>, s: &DiagnosticSeries) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", &s.kind)?;
    d.set_item("t", s.times())?;
    d.set_item("re", s.values.iter().map(|v| v.re).collect::<Vec<_>>())?;
    d.set_item("im", s.values.iter().map(|v| v.im).collect::<Vec<_>>())?;
    d.set_item("flag", s.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>())?;
    Ok(d)
}

fn to_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<ComplexMatrix> {
    ComplexMatrix::from_rows(&rows).map_err(err)
}

fn from_matrix(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.dim()).map(|r| (0..m.dim()).map(|c| m[(r, c)]).collect()).collect()
}

fn named(n: &str, sites: usize) -> PyResult<ComplexMatrix> {
    let s: NamedState = n.parse().map_err(err)?;
    models::named_initial_state(s, sites).map_err(err)
}

/// A built model with its forward and backward propagators.
#[pyclass(name = "Engine", module = "scramble_py")]
struct PyEngine {
    inner: EvolutionEngine,
}

impl PyEngine {
    fn build(spec: ModelSpec, perturbation: &str, omega_d: f64) -> PyResult<Self> {
        let kind: PerturbationKind = perturbation.parse().map_err(err)?;
        let model = models::build(&spec).map_err(err)?;
        let delta = models::build_perturbation(&PerturbationSpec::new(kind, omega_d), &spec).map_err(err)?;
        Ok(Self {
            inner: EvolutionEngine::new(model, delta).map_err(err)?,
        })
    }

    fn rho(&self) -> ComplexMatrix {
        self.inner.model().rho_s0.clone()
    }
}

#[pymethods]
impl PyEngine {
    #[staticmethod]
    #[pyo3(signature = (b_field=0.5, j_coupling=0.8, theta=std::f64::consts::FRAC_PI_2, n_system=4, n_bath=4, perturbation="none", omega_d=0.0))]
    fn tfim(b_field: f64, j_coupling: f64, theta: f64, n_system: usize, n_bath: usize, perturbation: &str, omega_d: f64) -> PyResult<Self> {
        let spec = ModelSpec::Tfim(TFIMSpec {
            b_field,
            j_coupling,
            theta,
            n_system,
            n_bath,
        });
        Self::build(spec, perturbation, omega_d)
    }

    #[staticmethod]
    #[pyo3(signature = (n_atoms=4, omega0=2.0, omega_c=2.0, lambda_=2.0, j_s=0.0, temperature=10.0, fock_cutoff=30, perturbation="none", omega_d=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn tc(n_atoms: usize, omega0: f64, omega_c: f64, lambda_: f64, j_s: f64, temperature: f64, fock_cutoff: usize, perturbation: &str, omega_d: f64) -> PyResult<Self> {
        let spec = ModelSpec::Tc(TCSpec {
            n_atoms,
            omega0,
            omega_c,
            lambda: lambda_,
            j_s,
            temperature,
            fock_cutoff,
        });
        Self::build(spec, perturbation, omega_d)
    }

    #[getter]
    fn system_dim(&self) -> usize {
        self.inner.system_dim()
    }

    #[getter]
    fn env_dim(&self) -> usize {
        self.inner.env_dim()
    }

    /// `ξ_f(t)` applied to a system matrix given as nested lists.
    fn forward_map(&self, x: Vec<Vec<Complex64>>, t: f64) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(from_matrix(&self.inner.forward_map(&to_matrix(x)?, t).map_err(err)?))
    }

    fn backward_map(&self, x: Vec<Vec<Complex64>>, t: f64) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(from_matrix(&self.inner.backward_map(&to_matrix(x)?, t).map_err(err)?))
    }

    fn heisenberg_operator(&self, a: Vec<Vec<Complex64>>, t: f64) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(from_matrix(&self.inner.heisenberg_operator(&to_matrix(a)?, t).map_err(err)?))
    }

    fn fotoc<'py>(&self, py: Python<'py>, a: &str, b: &str, grid_spec: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = diagnostics::f_otoc_direct(&self.inner, &op(a)?, &op(b)?, &self.rho(), &grid(grid_spec)?).map_err(err)?;
        series_dict(py, &s)
    }

    fn fotoc_protocol<'py>(&self, py: Python<'py>, a: &str, b: &str, grid_spec: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = diagnostics::f_otoc_protocol(&self.inner, &op(a)?, &op(b)?, &self.rho(), &grid(grid_spec)?).map_err(err)?;
        series_dict(py, &s)
    }

    fn corrected_fotoc<'py>(&self, py: Python<'py>, a: &str, b: &str, grid_spec: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = diagnostics::corrected_f_otoc(&self.inner, &op(a)?, &op(b)?, &self.rho(), &grid(grid_spec)?).map_err(err)?;
        series_dict(py, &s)
    }

    fn commutator_norm<'py>(&self, py: Python<'py>, a: &str, b: &str, grid_spec: &str) -> PyResult<Bound<'py, PyDict>> {
        let s = diagnostics::commutator_growth(&self.inner, &op(a)?, &op(b)?, &grid(grid_spec)?).map_err(err)?;
        series_dict(py, &s)
    }

    /// Dict with keys `c`, `d`, `i`, `f`.
    fn correlators<'py>(&self, py: Python<'py>, a: &str, b: &str, grid_spec: &str) -> PyResult<Bound<'py, PyDict>> {
        let c = diagnostics::correlator_decomposition(&self.inner, &op(a)?, &op(b)?, &grid(grid_spec)?).map_err(err)?;
        let d = PyDict::new(py);
        for (k, s) in [("c", &c.c), ("d", &c.d), ("i", &c.i), ("f", &c.f)] {
            d.set_item(k, series_dict(py, s)?)?;
        }
        Ok(d)
    }

    /// Echo of the model's own states unless named states are given. A
    /// named bath state only applies to the TFIM.
    #[pyo3(signature = (grid_spec, normalize=true, state=None, bath_state=None))]
    fn loschmidt<'py>(&self, py: Python<'py>, grid_spec: &str, normalize: bool, state: Option<&str>, bath_state: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner.model();
        let rho_s = state.map(|s| named(s, m.layout.system_count())).transpose()?.unwrap_or_else(|| m.rho_s0.clone());
        let n_env = m.layout.factor_count() - m.layout.system_count();
        let rho_e = bath_state.map(|s| named(s, n_env)).transpose()?.unwrap_or_else(|| m.rho_e0.clone());
        let s = diagnostics::loschmidt_echo(&self.inner, &rho_s, &rho_e, &grid(grid_spec)?, normalize).map_err(err)?;
        series_dict(py, &s)
    }

    fn blp<'py>(&self, py: Python<'py>, state1: &str, state2: &str, grid_spec: &str) -> PyResult<Bound<'py, PyDict>> {
        let n = self.inner.model().layout.system_count();
        let s = diagnostics::blp_trace_distance(&self.inner, &named(state1, n)?, &named(state2, n)?, &grid(grid_spec)?).map_err(err)?;
        series_dict(py, &s)
    }
}

/// Runs a JSON configuration and returns the written file paths.
#[pyfunction]
#[pyo3(signature = (config_json, threads=None))]
fn run_config(config_json: &str, threads: Option<usize>) -> PyResult<Vec<String>> {
    let config = RunConfig::from_raw(&RawConfig::from_json(config_json).map_err(err)?).map_err(err)?;
    let out = experiment::run(&config, threads).map_err(err)?;
    Ok(out.manifest.files.iter().map(|f| f.path.display().to_string()).collect())
}

#[pyfunction]
#[pyo3(signature = (name, out, threads=None))]
fn run_figure(name: &str, out: &str, threads: Option<usize>) -> PyResult<Vec<String>> {
    let fig = experiment::run_figure(name, Path::new(out), threads).map_err(err)?;
    Ok(fig.files.iter().map(|f| f.path.display().to_string()).collect())
}

#[pymodule]
fn scramble_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_figure, m)?)?;
    m.add("FIGURES", experiment::FIGURES.to_vec())?;
    Ok(())
}

//! Python bindings: paths, models from the built-in registry, inversion,
//! likelihoods, and the fOU closed forms.

use std::sync::Arc;

use nalgebra::DVector;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use roughlik::estimators::{hierarchical_mle, ParameterSpace};
use roughlik::fbm::FbmIncrementModel;
use roughlik::field::{FieldRegistry, ParametricVectorField};
use roughlik::flow::respond_increments;
use roughlik::fou::{fou_mle as closed_form_mle, DiffusionStats};
use roughlik::grid::{self, Partition, PiecewiseLinearPath};
use roughlik::inverse::{invert_dataset, jacobian_log_det, CoordinateSplit, NewtonOptions};
use roughlik::likelihood::{log_likelihood, log_likelihood_marginal, MarginalOptions, ScaledLogLik};

fn err(e: roughlik::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Piecewise-linear path on a partition of `[0, T]`.
#[pyclass(name = "Path", module = "roughlik_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPath {
    inner: PiecewiseLinearPath,
}

#[pymethods]
impl PyPath {
    /// `values` holds one row per time point.
    #[new]
    fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let partition = Partition::new(times).map_err(err)?;
        let inner = PiecewiseLinearPath::from_rows(partition, values).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn dyadic(level: u32, t_end: f64, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let partition = grid::dyadic_grid(level, t_end).map_err(err)?;
        let inner = PiecewiseLinearPath::from_rows(partition, values).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.partition().times().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.values().iter().map(|v| v.as_slice().to_vec()).collect()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn increments(&self) -> Vec<Vec<f64>> {
        self.inner.increments().raw().iter().map(|v| v.as_slice().to_vec()).collect()
    }

    fn restrict(&self, times: Vec<f64>) -> PyResult<Self> {
        let coarse = Partition::new(times).map_err(err)?;
        Ok(Self {
            inner: self.inner.restrict(&coarse).map_err(err)?,
        })
    }

    fn refine(&self, times: Vec<f64>) -> PyResult<Self> {
        let fine = Partition::new(times).map_err(err)?;
        Ok(Self {
            inner: self.inner.refine(&fine).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Path(points={}, dim={}, t_end={})",
            self.inner.values().len(),
            self.inner.dim(),
            self.inner.partition().t_end()
        )
    }
}

/// A model from the built-in registry (`fou`, `rotation2d`, ...).
#[pyclass(name = "Model", module = "roughlik_py", frozen)]
struct PyModel {
    id: String,
    field: Arc<dyn ParametricVectorField>,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        let field = FieldRegistry::with_builtins().get(id).map_err(err)?;
        Ok(Self { id: id.to_string(), field })
    }

    #[staticmethod]
    fn available() -> Vec<String> {
        FieldRegistry::with_builtins().ids().map(String::from).collect()
    }

    #[getter]
    fn id(&self) -> &str {
        &self.id
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.field.state_dim()
    }

    #[getter]
    fn driver_dim(&self) -> usize {
        self.field.driver_dim()
    }

    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.field.param_names()
    }

    /// Samples an fBm driver on the dyadic grid and returns `(driver, response)`.
    #[pyo3(signature = (theta, h, level, t_end, seed, y0, steps=16))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        theta: Vec<f64>,
        h: f64,
        level: u32,
        t_end: f64,
        seed: u64,
        y0: Vec<f64>,
        steps: usize,
    ) -> PyResult<(PyPath, PyPath)> {
        self.field.validate(&theta).map_err(err)?;
        let field = self.field.clone();
        py.detach(move || {
            let partition = grid::dyadic_grid(level, t_end)?;
            let noise = FbmIncrementModel::new(h, partition)?;
            let dx = noise.sample(field.driver_dim(), seed);
            let x = dx.cumsum(&DVector::zeros(field.driver_dim()))?;
            let y = respond_increments(field.as_ref(), &DVector::from_vec(y0), &dx, &theta, steps)?;
            Ok((PyPath { inner: x }, PyPath { inner: y }))
        })
        .map_err(err)
    }

    /// Response to a driver path.
    #[pyo3(signature = (driver, theta, y0, steps=16))]
    fn respond(&self, driver: &PyPath, theta: Vec<f64>, y0: Vec<f64>, steps: usize) -> PyResult<PyPath> {
        self.field.validate(&theta).map_err(err)?;
        let y = respond_increments(
            self.field.as_ref(),
            &DVector::from_vec(y0),
            &driver.inner.increments(),
            &theta,
            steps,
        )
        .map_err(err)?;
        Ok(PyPath { inner: y })
    }

    /// Driver increments recovered from observations, with per-interval
    /// determinants and the log-Jacobian.
    #[pyo3(signature = (obs, theta, steps=16))]
    fn invert<'py>(
        &self,
        py: Python<'py>,
        obs: &PyPath,
        theta: Vec<f64>,
        steps: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        self.field.validate(&theta).map_err(err)?;
        let field = self.field.clone();
        let data = obs.inner.clone();
        let (inv, log_det) = py
            .detach(move || {
                let inv = invert_dataset(&data, &theta, field.as_ref(), &NewtonOptions::with_steps(steps))?;
                let log_det = jacobian_log_det(&inv)?;
                Ok((inv, log_det))
            })
            .map_err(err)?;
        let out = PyDict::new(py);
        let increments: Vec<Vec<f64>> = inv.increments.raw().iter().map(|v| v.as_slice().to_vec()).collect();
        out.set_item("increments", increments)?;
        out.set_item("z_dets", inv.z_dets)?;
        out.set_item("newton_iters", inv.newton_iters)?;
        out.set_item("residuals", inv.residuals)?;
        out.set_item("jacobian_log_det", log_det)?;
        Ok(out)
    }

    /// Exact log-likelihood for `m = d`; Monte-Carlo marginal otherwise.
    #[pyo3(signature = (obs, theta, h, steps=16, samples=1000, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn loglik(
        &self,
        py: Python<'_>,
        obs: &PyPath,
        theta: Vec<f64>,
        h: f64,
        steps: usize,
        samples: usize,
        seed: u64,
    ) -> PyResult<f64> {
        self.field.validate(&theta).map_err(err)?;
        let field = self.field.clone();
        let data = obs.inner.clone();
        py.detach(move || {
            let noise = FbmIncrementModel::new(h, data.partition().clone())?;
            let newton = NewtonOptions::with_steps(steps);
            let (d, m) = (field.state_dim(), field.driver_dim());
            if m > d {
                let opts = MarginalOptions {
                    samples,
                    seed,
                    split: CoordinateSplit::leading(d, m)?,
                    newton,
                };
                Ok(log_likelihood_marginal(&data, &theta, field.as_ref(), &noise, &opts)?.value)
            } else {
                Ok(log_likelihood(&data, &theta, field.as_ref(), &noise, &newton)?.loglik)
            }
        })
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.id)
    }
}

/// Closed-form `(σ̂², λ̂)` for a scalar fOU path with Brownian noise.
#[pyfunction]
fn fou_mle(obs: &PyPath) -> PyResult<(f64, f64)> {
    closed_form_mle(&obs.inner).map_err(err)
}

/// Scale-ordered estimate of `(λ, σ)` on the given grids.
#[pyfunction]
fn fou_hierarchical_mle(py: Python<'_>, obs: &PyPath, lambdas: Vec<f64>, sigmas: Vec<f64>) -> PyResult<(f64, f64)> {
    let stats = DiffusionStats::from_path(&obs.inner).map_err(err)?;
    let space = ParameterSpace::new(vec!["lambda".into(), "sigma".into()], vec![lambdas, sigmas]).map_err(err)?;
    let mle = py
        .detach(move || hierarchical_mle(&ScaledLogLik::fou(stats), &space))
        .map_err(err)?;
    Ok((mle.theta[0], mle.theta[1]))
}

/// p-variation of the polygon through `points`.
#[pyfunction]
fn p_variation(points: Vec<Vec<f64>>, p: f64) -> PyResult<f64> {
    let pts: Vec<DVector<f64>> = points.into_iter().map(DVector::from_vec).collect();
    grid::p_variation(&pts, p).map_err(err)
}

/// p-variation distance between two paths over the union of their grids.
#[pyfunction]
fn p_variation_distance(a: &PyPath, b: &PyPath, p: f64) -> PyResult<f64> {
    grid::p_variation_distance(&a.inner, &b.inner, p).map_err(err)
}

#[pyfunction]
fn dyadic_grid(level: u32, t_end: f64) -> PyResult<Vec<f64>> {
    Ok(grid::dyadic_grid(level, t_end).map_err(err)?.times().to_vec())
}

#[pymodule]
fn roughlik_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPath>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fou_mle, m)?)?;
    m.add_function(wrap_pyfunction!(fou_hierarchical_mle, m)?)?;
    m.add_function(wrap_pyfunction!(p_variation, m)?)?;
    m.add_function(wrap_pyfunction!(p_variation_distance, m)?)?;
    m.add_function(wrap_pyfunction!(dyadic_grid, m)?)?;
    Ok(())
}

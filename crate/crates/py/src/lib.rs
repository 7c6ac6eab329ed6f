//! Python bindings for the wPINN core: presets, training configuration,
//! single and ensemble training, prediction, error metrics, and the
//! finite-volume reference solver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wpinn::net::{Activation, OptimizerKind};
use wpinn::oracle::{
    exact_solution, fv_solve, relative_errors, sine_solution, ExperimentPreset, PresetId,
    ReferenceKind,
};
use wpinn::train::{
    average_predict, run_ensemble, train_one, LossWeighting, ResidualForm, SamplerKind,
    TrainedModel, TrainingConfig,
};

fn err(e: wpinn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One of the four benchmark experiments for the Burgers equation.
#[pyclass(name = "Preset", frozen)]
struct PyPreset {
    inner: ExperimentPreset,
}

#[pymethods]
impl PyPreset {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        let id = PresetId::parse(name).map_err(err)?;
        Ok(PyPreset { inner: ExperimentPreset::from_id(id) })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.id().name()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.inner.domain()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final()
    }

    /// Initial condition at `x`.
    fn u0(&self, x: f64) -> f64 {
        self.inner.u0(x)
    }

    /// Dirichlet boundary value at (`x`, `t`) for `x` on the boundary.
    fn boundary(&self, x: f64, t: f64) -> f64 {
        self.inner.boundary_trace(x, t)
    }

    /// Reference entropy solution at (`x`, `t`): closed form where one
    /// exists, the characteristic solver for the sine wave.
    fn solution(&self, x: f64, t: f64) -> PyResult<f64> {
        if self.inner.has_closed_form() {
            exact_solution(&self.inner, x, t).map_err(err)
        } else {
            sine_solution(x, t, 1e-12).map_err(err)
        }
    }

    fn __repr__(&self) -> String {
        format!("Preset('{}')", self.inner.id().name())
    }
}

/// Training hyperparameters, created at per-preset defaults.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: TrainingConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new(preset: &PyPreset) -> Self {
        PyConfig { inner: TrainingConfig::for_preset(&preset.inner) }
    }

    #[getter]
    fn get_epochs(&self) -> usize {
        self.inner.epochs
    }

    #[setter]
    fn set_epochs(&mut self, value: usize) {
        self.inner.epochs = value;
    }

    #[getter]
    fn get_n_max(&self) -> usize {
        self.inner.n_max
    }

    #[setter]
    fn set_n_max(&mut self, value: usize) {
        self.inner.n_max = value;
    }

    #[getter]
    fn get_n_min(&self) -> usize {
        self.inner.n_min
    }

    #[setter]
    fn set_n_min(&mut self, value: usize) {
        self.inner.n_min = value;
    }

    #[getter]
    fn get_c_count(&self) -> usize {
        self.inner.c_count
    }

    #[setter]
    fn set_c_count(&mut self, value: usize) {
        self.inner.c_count = value;
    }

    #[getter]
    fn get_interior(&self) -> usize {
        self.inner.counts.interior
    }

    #[setter]
    fn set_interior(&mut self, value: usize) {
        self.inner.counts.interior = value;
    }

    #[getter]
    fn get_temporal(&self) -> usize {
        self.inner.counts.temporal
    }

    #[setter]
    fn set_temporal(&mut self, value: usize) {
        self.inner.counts.temporal = value;
    }

    #[getter]
    fn get_spatial(&self) -> usize {
        self.inner.counts.spatial
    }

    #[setter]
    fn set_spatial(&mut self, value: usize) {
        self.inner.counts.spatial = value;
    }

    #[getter]
    fn get_lambda(&self) -> f64 {
        self.inner.lambda
    }

    #[setter]
    fn set_lambda(&mut self, value: f64) {
        self.inner.lambda = value;
    }

    #[getter]
    fn get_lr_theta(&self) -> f64 {
        self.inner.lr_theta
    }

    #[setter]
    fn set_lr_theta(&mut self, value: f64) {
        self.inner.lr_theta = value;
    }

    #[getter]
    fn get_lr_eta(&self) -> f64 {
        self.inner.lr_eta
    }

    #[setter]
    fn set_lr_eta(&mut self, value: f64) {
        self.inner.lr_eta = value;
    }

    #[getter]
    fn get_reset_ratio(&self) -> f64 {
        self.inner.reset_ratio
    }

    #[setter]
    fn set_reset_ratio(&mut self, value: f64) {
        self.inner.reset_ratio = value;
    }

    #[getter]
    fn get_abs_smoothing(&self) -> f64 {
        self.inner.abs_smoothing
    }

    #[setter]
    fn set_abs_smoothing(&mut self, value: f64) {
        self.inner.abs_smoothing = value;
    }

    #[getter]
    fn get_param_seed(&self) -> u64 {
        self.inner.param_seed
    }

    #[setter]
    fn set_param_seed(&mut self, value: u64) {
        self.inner.param_seed = value;
    }

    #[getter]
    fn get_collocation_seed(&self) -> u64 {
        self.inner.collocation_seed
    }

    #[setter]
    fn set_collocation_seed(&mut self, value: u64) {
        self.inner.collocation_seed = value;
    }

    #[getter]
    fn get_widths_theta(&self) -> Vec<usize> {
        self.inner.widths_theta.clone()
    }

    #[setter]
    fn set_widths_theta(&mut self, value: Vec<usize>) {
        self.inner.widths_theta = value;
    }

    #[getter]
    fn get_widths_eta(&self) -> Vec<usize> {
        self.inner.widths_eta.clone()
    }

    #[setter]
    fn set_widths_eta(&mut self, value: Vec<usize>) {
        self.inner.widths_eta = value;
    }

    #[getter]
    fn get_residual_form(&self) -> &'static str {
        self.inner.residual_form.name()
    }

    #[setter]
    fn set_residual_form(&mut self, value: &str) -> PyResult<()> {
        self.inner.residual_form = ResidualForm::parse(value).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn get_sampler(&self) -> &'static str {
        self.inner.sampler.name()
    }

    #[setter]
    fn set_sampler(&mut self, value: &str) -> PyResult<()> {
        self.inner.sampler = SamplerKind::parse(value).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn get_weighting(&self) -> &'static str {
        self.inner.weighting.name()
    }

    #[setter]
    fn set_weighting(&mut self, value: &str) -> PyResult<()> {
        self.inner.weighting = LossWeighting::parse(value).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn get_optimizer(&self) -> &'static str {
        self.inner.optimizer.name()
    }

    #[setter]
    fn set_optimizer(&mut self, value: &str) -> PyResult<()> {
        self.inner.optimizer = OptimizerKind::parse(value).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn get_activation_theta(&self) -> &'static str {
        self.inner.activation_theta.name()
    }

    #[setter]
    fn set_activation_theta(&mut self, value: &str) -> PyResult<()> {
        self.inner.activation_theta = Activation::parse(value).map_err(err)?;
        Ok(())
    }

    #[getter]
    fn get_activation_eta(&self) -> &'static str {
        self.inner.activation_eta.name()
    }

    #[setter]
    fn set_activation_eta(&mut self, value: &str) -> PyResult<()> {
        self.inner.activation_eta = Activation::parse(value).map_err(err)?;
        Ok(())
    }
}

fn reference_for(preset: &ExperimentPreset, fv_cells: usize) -> ReferenceKind {
    if preset.has_closed_form() {
        ReferenceKind::Exact
    } else {
        ReferenceKind::FiniteVolume { n_cells: fv_cells, cfl: 0.5 }
    }
}

/// One trained network with its training history.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: TrainedModel,
    preset: ExperimentPreset,
}

#[pymethods]
impl PyModel {
    /// Network prediction at (`x`, `t`).
    fn predict(&self, x: f64, t: f64) -> f64 {
        self.inner.predict(x, t)
    }

    #[getter]
    fn c_star(&self) -> f64 {
        self.inner.c_star
    }

    #[getter]
    fn final_training_error(&self) -> f64 {
        self.inner.final_training_error
    }

    #[getter]
    fn param_seed(&self) -> u64 {
        self.inner.param_seed
    }

    /// Training history as (epoch, j_pde, j_u, c_star, eta_reset) tuples.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, f64, bool)> {
        self.inner
            .history
            .iter()
            .map(|r| (r.epoch, r.j_pde, r.j_u, r.c_star, r.eta_reset))
            .collect()
    }

    /// Relative space-time and final-time errors `(e_r, e_r_t)` against the
    /// preset's reference solution.
    #[pyo3(signature = (quad_n = 1024, fv_cells = 16384))]
    fn errors(&self, quad_n: usize, fv_cells: usize) -> PyResult<(f64, f64)> {
        let f = |x: f64, t: f64| self.inner.predict(x, t);
        let reference = reference_for(&self.preset, fv_cells);
        let (e_r_t, e_r) = relative_errors(&f, &self.preset, reference, quad_n).map_err(err)?;
        Ok((e_r, e_r_t))
    }
}

/// A set of retrainings of one configuration, reported through the
/// pointwise retraining average.
#[pyclass(name = "Ensemble", frozen)]
struct PyEnsemble {
    runs: Vec<TrainedModel>,
    diverged: usize,
    mean_criterion: f64,
    preset: ExperimentPreset,
}

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn n_runs(&self) -> usize {
        self.runs.len()
    }

    #[getter]
    fn diverged(&self) -> usize {
        self.diverged
    }

    #[getter]
    fn mean_criterion(&self) -> f64 {
        self.mean_criterion
    }

    /// Retraining-average prediction and sample standard deviation at
    /// (`x`, `t`).
    fn predict(&self, x: f64, t: f64) -> PyResult<(f64, f64)> {
        average_predict(&self.runs, x, t).map_err(err)
    }

    /// Relative errors `(e_r, e_r_t)` of the retraining-average predictor.
    #[pyo3(signature = (quad_n = 1024, fv_cells = 16384))]
    fn errors(&self, quad_n: usize, fv_cells: usize) -> PyResult<(f64, f64)> {
        let runs = &self.runs;
        let f = move |x: f64, t: f64| {
            let mut sum = 0.0;
            for r in runs {
                sum += r.predict(x, t);
            }
            sum / runs.len() as f64
        };
        let reference = reference_for(&self.preset, fv_cells);
        let (e_r_t, e_r) = relative_errors(&f, &self.preset, reference, quad_n).map_err(err)?;
        Ok((e_r, e_r_t))
    }

    /// The individual retrainings.
    fn models(&self) -> Vec<PyModel> {
        self.runs
            .iter()
            .map(|r| PyModel { inner: r.clone(), preset: self.preset.clone() })
            .collect()
    }
}

/// Train a single model with the adversarial min-max loop.
#[pyfunction]
fn train(py: Python<'_>, preset: &PyPreset, config: &PyConfig) -> PyResult<PyModel> {
    let inner = py
        .detach(|| train_one(&config.inner, &preset.inner))
        .map_err(err)?;
    Ok(PyModel { inner, preset: preset.inner.clone() })
}

/// Retrain `n_theta` times from seeds `config.param_seed + i`.
#[pyfunction]
#[pyo3(signature = (preset, config, n_theta = 5, threads = 0))]
fn ensemble(
    py: Python<'_>,
    preset: &PyPreset,
    config: &PyConfig,
    n_theta: usize,
    threads: usize,
) -> PyResult<PyEnsemble> {
    let result = py
        .detach(|| run_ensemble(&config.inner, &preset.inner, n_theta, threads))
        .map_err(err)?;
    Ok(PyEnsemble {
        diverged: result.diverged.len(),
        mean_criterion: result.mean_criterion,
        runs: result.runs,
        preset: preset.inner.clone(),
    })
}

/// Godunov reference solve: returns (cell_centers, cell_averages) at `t_end`.
#[pyfunction]
#[pyo3(signature = (preset, cells, t_end, cfl = 0.5))]
fn fv_reference(
    py: Python<'_>,
    preset: &PyPreset,
    cells: usize,
    t_end: f64,
    cfl: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let grid = py.detach(|| fv_solve(&preset.inner, cells, cfl, t_end)).map_err(err)?;
    let centers = (0..grid.n_cells()).map(|i| grid.center(i)).collect();
    Ok((centers, grid.values().to_vec()))
}

#[pymodule]
fn wpinn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPreset>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(fv_reference, m)?)?;
    Ok(())
}

//! Python bindings. Matrices cross the boundary as lists of rows (numpy
//! arrays work too, via the sequence protocol).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bnn_knockoffs::cli::Config;
use bnn_knockoffs::neural::{fit_ard_bnn as core_fit_ard, predict, train_mlp as core_train_mlp, group_l2_importance};
use bnn_knockoffs::pipeline::{knockoff_statistics as core_knockoff_statistics, ImportanceSettings};
use bnn_knockoffs::simulation::run_study;
use bnn_knockoffs::stats_tests;
use bnn_knockoffs::{Error, Mat, MlpParams, RngStream, Statistic, TrainConfig};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => match e {
            Error::InvalidQ(_) | Error::DimensionMismatch { .. } | Error::InsufficientGroups(_) => {
                PyValueError::new_err(e.to_string())
            }
            other => PyRuntimeError::new_err(other.to_string()),
        },
    }
}

fn to_mat(rows: Vec<Vec<f64>>) -> PyResult<Mat> {
    Mat::from_rows(&rows).map_err(to_py)
}

fn from_mat(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn statistic(name: &str) -> PyResult<Statistic> {
    name.parse().map_err(to_py)
}

/// Gaussian knockoff sampler with the equicorrelated construction.
#[pyclass(name = "KnockoffModel", module = "bnn_knockoffs_py")]
struct PyKnockoffModel {
    inner: bnn_knockoffs::KnockoffModel,
}

#[pymethods]
impl PyKnockoffModel {
    #[new]
    fn new(sigma: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = bnn_knockoffs::KnockoffModel::fit_second_order(&to_mat(sigma)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn s(&self) -> Vec<f64> {
        self.inner.s.clone()
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.degenerate
    }

    fn joint_covariance(&self) -> Vec<Vec<f64>> {
        from_mat(&self.inner.joint_covariance())
    }

    #[pyo3(signature = (x, seed=0, stream=0))]
    fn sample(&self, x: Vec<Vec<f64>>, seed: u64, stream: u64) -> PyResult<Vec<Vec<f64>>> {
        let xk = self
            .inner
            .sample_knockoffs(&to_mat(x)?, &mut RngStream::new(seed, stream))
            .map_err(to_py)?;
        Ok(from_mat(&xk))
    }
}

/// Trained network; `importance()` gives the first-layer group sums of squares.
#[pyclass(name = "Network", module = "bnn_knockoffs_py")]
struct PyNetwork {
    params: MlpParams,
    #[pyo3(get)]
    alpha: Vec<f64>,
    #[pyo3(get)]
    beta: Option<f64>,
}

#[pymethods]
impl PyNetwork {
    fn importance(&self) -> Vec<f64> {
        group_l2_importance(&self.params)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        predict(&self.params, &to_mat(x)?).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Network(layers={:?})", self.params.layer_sizes)
    }
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    hidden_sizes: Vec<usize>,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    outer_iterations: usize,
    weight_decay: f64,
    alpha_init: f64,
    seed: u64,
) -> PyResult<TrainConfig> {
    let cfg = TrainConfig {
        hidden_sizes,
        epochs,
        learning_rate,
        batch_size,
        outer_iterations,
        seed,
        weight_decay,
        alpha_init,
    };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Fits an ARD network by alternating MAP training and evidence updates.
#[pyfunction]
#[pyo3(signature = (x, y, hidden_sizes=vec![50], epochs=300, learning_rate=1e-3, batch_size=64,
                    outer_iterations=5, alpha_init=10.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_ard_bnn(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    hidden_sizes: Vec<usize>,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    outer_iterations: usize,
    alpha_init: f64,
    seed: u64,
) -> PyResult<PyNetwork> {
    let cfg = train_config(hidden_sizes, epochs, learning_rate, batch_size, outer_iterations, 0.0, alpha_init, seed)?;
    let x = to_mat(x)?;
    let model = py
        .detach(|| core_fit_ard(&x, &y, &cfg, &mut RngStream::new(seed, 0)))
        .map_err(to_py)?;
    Ok(PyNetwork {
        params: model.params,
        alpha: model.alpha,
        beta: Some(model.beta),
    })
}

/// Plain network with uniform weight decay.
#[pyfunction]
#[pyo3(signature = (x, y, hidden_sizes=vec![50], epochs=300, learning_rate=1e-3, batch_size=64,
                    weight_decay=1e-4, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_mlp(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    hidden_sizes: Vec<usize>,
    epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    weight_decay: f64,
    seed: u64,
) -> PyResult<PyNetwork> {
    let cfg = train_config(hidden_sizes, epochs, learning_rate, batch_size, 0, weight_decay, 10.0, seed)?;
    let x = to_mat(x)?;
    let params = py
        .detach(|| core_train_mlp(&x, &y, &cfg, &mut RngStream::new(seed, 0)))
        .map_err(to_py)?;
    Ok(PyNetwork {
        params,
        alpha: Vec::new(),
        beta: None,
    })
}

#[pyfunction]
fn compute_w(z: Vec<f64>, z_tilde: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(bnn_knockoffs::compute_w(&z, &z_tilde).map_err(to_py)?.w)
}

/// Returns `(threshold, selected)`; the threshold is `inf` when nothing is selected.
#[pyfunction]
fn knockoff_threshold(w: Vec<f64>, q: f64) -> PyResult<(f64, Vec<usize>)> {
    let sel = bnn_knockoffs::knockoff_threshold(&w, q).map_err(to_py)?;
    Ok((sel.threshold, sel.selected))
}

/// `(z, z_tilde, w)` for one statistic fitted on `[x, x_knockoff]`.
#[pyfunction]
#[pyo3(signature = (x, x_knockoff, y, statistic="ARD_L2", seed=0))]
fn knockoff_statistics(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    x_knockoff: Vec<Vec<f64>>,
    y: Vec<f64>,
    statistic: &str,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let st = self::statistic(statistic)?;
    let (x, xk) = (to_mat(x)?, to_mat(x_knockoff)?);
    let w = py
        .detach(|| {
            core_knockoff_statistics(&x, &xk, &y, st, &ImportanceSettings::default(), &RngStream::new(seed, 0))
        })
        .map_err(to_py)?;
    Ok((w.z, w.z_tilde, w.w))
}

/// `(h, df, p_value)`.
#[pyfunction]
fn kruskal_wallis(groups: Vec<Vec<f64>>) -> PyResult<(f64, usize, f64)> {
    let r = stats_tests::kruskal_wallis(&groups).map_err(to_py)?;
    Ok((r.h_statistic, r.degrees_of_freedom, r.p_value))
}

/// `(group_a, group_b, u, raw_p, adjusted_p)`
type Comparison = (usize, usize, f64, f64, f64);

/// One [`Comparison`] per group pair.
#[pyfunction]
fn pairwise_bonferroni(groups: Vec<Vec<f64>>) -> PyResult<Vec<Comparison>> {
    Ok(stats_tests::pairwise_bonferroni(&groups)
        .map_err(to_py)?
        .into_iter()
        .map(|c| (c.group_a, c.group_b, c.u_statistic, c.raw_p, c.adjusted_p))
        .collect())
}

/// Runs the simulation study for a JSON config (same keys as the command
/// line tool) and returns the aggregated curves as dicts.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, config_json: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = Config::from_json_str(config_json).map_err(to_py)?;
    let sim = cfg.sim_config().map_err(to_py)?;
    let settings = cfg.importance_settings().map_err(to_py)?;
    let study = py.detach(|| run_study(&sim, &settings)).map_err(to_py)?;
    study
        .curves
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("statistic", c.statistic.name())?;
            d.set_item("q", c.q)?;
            d.set_item("mean_power", c.mean_power)?;
            d.set_item("se_power", c.se_power)?;
            d.set_item("mean_fdp", c.mean_fdp)?;
            d.set_item("se_fdp", c.se_fdp)?;
            d.set_item("n_ok", c.n_ok)?;
            d.set_item("n_failed", c.n_failed)?;
            d.set_item("frac_empty", c.frac_empty)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn bnn_knockoffs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnockoffModel>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(fit_ard_bnn, m)?)?;
    m.add_function(wrap_pyfunction!(train_mlp, m)?)?;
    m.add_function(wrap_pyfunction!(compute_w, m)?)?;
    m.add_function(wrap_pyfunction!(knockoff_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(knockoff_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_bonferroni, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

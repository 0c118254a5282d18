//! Python bindings: training sets, forests, rejection ABC, conflict
//! calibration, the window scan and the invariant suites.

use lfconflict::abc::{self, Scaling};
use lfconflict::density::GridSpec;
use lfconflict::diagnostics::{self, SummaryCompletion, WindowScanConfig};
use lfconflict::imputation::{ImputationEngine, WindowImputer};
use lfconflict::model::{build_training_set, GenerativeModel, PartitionSpec, SummaryVector, TrainingSet};
use lfconflict::qrf::{self, Forest, ForestHyper};
use lfconflict::simulators::{PoissonModel, RickerConfig, RickerModel, RickerSummary, StereoModel};
use lfconflict::{selftest, setar, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn make_model(kind: &str, n_obs: usize, t_len: usize, threshold: Option<f64>) -> PyResult<Box<dyn GenerativeModel>> {
    let series = RickerConfig {
        t_len,
        ..RickerConfig::default()
    };
    Ok(match kind {
        "poisson" => Box::new(PoissonModel { n_obs }),
        "stereo" => Box::new(StereoModel),
        "ricker-setar" => {
            let threshold = threshold.ok_or_else(|| PyValueError::new_err("ricker-setar needs a threshold"))?;
            Box::new(RickerModel {
                config: series,
                summary: RickerSummary::Setar { threshold },
            })
        }
        "ricker-raw" => Box::new(RickerModel {
            config: series,
            summary: RickerSummary::RawSeries,
        }),
        other => return Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    })
}

fn default_prior(kind: &str) -> lfconflict::model::PriorSpec {
    match kind {
        "poisson" => PoissonModel::default_prior(),
        "stereo" => StereoModel::default_prior(),
        _ => RickerModel::default_prior(),
    }
}

#[pyclass(name = "TrainingSet", module = "lfconflict_py")]
#[derive(Clone)]
struct PyTrainingSet {
    inner: TrainingSet,
}

#[pymethods]
impl PyTrainingSet {
    /// Simulates `n` rows from a model's default prior. `kind` is one of
    /// "poisson", "stereo", "ricker-setar", "ricker-raw".
    #[staticmethod]
    #[pyo3(signature = (kind, n, seed, n_obs=5, t_len=250, threshold=None))]
    fn simulate(py: Python<'_>, kind: &str, n: usize, seed: u64, n_obs: usize, t_len: usize, threshold: Option<f64>) -> PyResult<Self> {
        let model = make_model(kind, n_obs, t_len, threshold)?;
        let prior = default_prior(kind);
        let inner = py
            .allow_threads(|| build_training_set(model.as_ref(), &prior, n, seed))
            .map_err(to_py)?;
        Ok(PyTrainingSet { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names.clone()
    }

    #[getter]
    fn summary_names(&self) -> Vec<String> {
        self.inner.summary_names.clone()
    }

    #[getter]
    fn discarded(&self) -> usize {
        self.inner.discarded
    }

    /// Parameter rows as a list of lists.
    fn params(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.param_row(i).to_vec()).collect()
    }

    fn summaries(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.summary_row(i).to_vec()).collect()
    }

    fn select_summaries(&self, names: Vec<String>) -> PyResult<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.inner
                    .summary_index(n)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown summary {n:?}")))
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyTrainingSet {
            inner: self.inner.select_summaries(&idx).map_err(to_py)?,
        })
    }
}

#[pyclass(name = "Forest", module = "lfconflict_py")]
struct PyForest {
    inner: Forest,
}

#[pymethods]
impl PyForest {
    /// Trains a quantile regression forest for one parameter.
    #[staticmethod]
    #[pyo3(signature = (train, target, seed=0, n_trees=200, mtry=None, min_node_size=5, sample_fraction=0.632))]
    fn train(
        py: Python<'_>,
        train: &PyTrainingSet,
        target: &str,
        seed: u64,
        n_trees: usize,
        mtry: Option<usize>,
        min_node_size: usize,
        sample_fraction: f64,
    ) -> PyResult<Self> {
        let t = &train.inner;
        let j = t
            .param_names
            .iter()
            .position(|p| p == target)
            .ok_or_else(|| PyValueError::new_err(format!("unknown parameter {target:?}")))?;
        let hyper = ForestHyper {
            n_trees,
            mtry: mtry.unwrap_or_else(|| ForestHyper::for_dim(t.q()).mtry),
            min_node_size,
            sample_fraction,
            max_depth: 0,
        };
        let inner = py.allow_threads(|| qrf::train_forest(t, j, &hyper, seed)).map_err(to_py)?;
        Ok(PyForest { inner })
    }

    fn weights(&self, s: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&s)?;
        Ok(qrf::query_weights(&self.inner, &s))
    }

    fn cdf(&self, s: Vec<f64>, y: f64) -> PyResult<f64> {
        self.check(&s)?;
        Ok(qrf::conditional_cdf(&self.inner, &s, y))
    }

    fn quantile(&self, s: Vec<f64>, q: f64) -> PyResult<f64> {
        self.check(&s)?;
        if !(0.0..=1.0).contains(&q) {
            return Err(PyValueError::new_err("quantile level must lie in [0, 1]"));
        }
        Ok(qrf::conditional_quantile(&self.inner, &s, q))
    }

    /// Posterior density on an automatic grid: `(grid, values)`.
    fn density(&self, s: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.check(&s)?;
        let d = qrf::posterior_density(&self.inner, &s, &GridSpec::default()).map_err(to_py)?;
        Ok((d.grid.points().to_vec(), d.values))
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }
}

impl PyForest {
    fn check(&self, s: &[f64]) -> PyResult<()> {
        if s.len() != self.inner.n_features {
            return Err(PyValueError::new_err(format!(
                "query has {} features, forest expects {}",
                s.len(),
                self.inner.n_features
            )));
        }
        Ok(())
    }
}

/// Nearest-`k` rejection ABC; returns the accepted parameter rows.
#[pyfunction]
#[pyo3(signature = (train, s_obs, k, summaries=None, scaling="mad"))]
fn rejection_abc(train: &PyTrainingSet, s_obs: Vec<f64>, k: usize, summaries: Option<Vec<String>>, scaling: &str) -> PyResult<Vec<Vec<f64>>> {
    let t = &train.inner;
    let scaling = match scaling {
        "mad" => Scaling::Mad,
        "none" => Scaling::None,
        other => return Err(PyValueError::new_err(format!("unknown scaling {other:?}"))),
    };
    let cols = summaries
        .map(|names| {
            names
                .iter()
                .map(|n| t.summary_index(n).ok_or_else(|| PyValueError::new_err(format!("unknown summary {n:?}"))))
                .collect::<PyResult<Vec<_>>>()
        })
        .transpose()?;
    let s = SummaryVector::new(t.summary_names.clone(), s_obs);
    let res = abc::rejection_abc(t, &s, cols.as_deref(), k, scaling).map_err(to_py)?;
    Ok(res.accepted.into_iter().map(|d| d.values).collect())
}

/// Calibrated conflict statistic for imputing `imputed` from `observed`.
/// `engine` is "linear-bayes" or "forest".
#[pyfunction]
#[pyo3(signature = (forest, train, s_obs, observed, imputed, m=100, m_star=100, engine="linear-bayes", seed=0))]
#[allow(clippy::too_many_arguments)]
fn diagnose<'py>(
    py: Python<'py>,
    forest: &PyForest,
    train: &PyTrainingSet,
    s_obs: Vec<f64>,
    observed: Vec<String>,
    imputed: Vec<String>,
    m: usize,
    m_star: usize,
    engine: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = &train.inner;
    forest.check(&s_obs)?;
    let engine = match engine {
        "linear-bayes" => ImputationEngine::LinearBayes,
        "forest" => ImputationEngine::Forest(Default::default()),
        other => return Err(PyValueError::new_err(format!("unknown engine {other:?}"))),
    };
    let a: Vec<&str> = observed.iter().map(String::as_str).collect();
    let b: Vec<&str> = imputed.iter().map(String::as_str).collect();
    let part = PartitionSpec::from_names(&t.summary_names, &a, &b).map_err(to_py)?;
    let s = SummaryVector::new(t.summary_names.clone(), s_obs);
    let rep = py
        .allow_threads(|| {
            let src = SummaryCompletion {
                engine,
                train: t,
                s_obs: &s,
                part: &part,
            };
            diagnostics::calibrate_conflict(&forest.inner, &s.values, &src, m, m_star, &GridSpec::default(), seed)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("r_obs", rep.r_obs)?;
    d.set_item("p_tilde", rep.p_tilde)?;
    d.set_item("r_ref", rep.r_ref.clone())?;
    d.set_item("r_obs_floored", rep.r_obs_floored)?;
    d.set_item("failed_imputations", rep.failed_imputations)?;
    if let (Some(full), Some(sub)) = (&rep.full, &rep.subset) {
        d.set_item("grid", full.grid.points().to_vec())?;
        d.set_item("full", full.values.clone())?;
        d.set_item("subset", sub.values.clone())?;
    }
    Ok(d)
}

/// Window scan of `series` with a forest trained on raw-series features.
/// Returns `(t, p_tilde)` pairs and the flagged times.
#[pyfunction]
#[pyo3(signature = (forest, series, k=4, m=100, m_star=100, patch_pad=8, seed=0))]
fn window_scan(
    py: Python<'_>,
    forest: &PyForest,
    series: Vec<f64>,
    k: usize,
    m: usize,
    m_star: usize,
    patch_pad: usize,
    seed: u64,
) -> PyResult<(Vec<(usize, f64)>, Vec<usize>)> {
    forest.check(&series)?;
    let cfg = WindowScanConfig {
        k,
        m,
        m_star,
        ..WindowScanConfig::default()
    };
    let rep = py
        .allow_threads(|| {
            let imputer = WindowImputer::new(&series, patch_pad)?;
            diagnostics::window_scan(&forest.inner, &imputer, &cfg, seed)
        })
        .map_err(to_py)?;
    Ok((rep.points.iter().map(|p| (p.t, p.p_tilde)).collect(), rep.flagged))
}

/// SETAR threshold selected on an observed series.
#[pyfunction]
fn select_threshold(series: Vec<f64>) -> PyResult<f64> {
    setar::select_threshold(&series).map_err(to_py)
}

/// Runs the invariant suites: `(name, passed, worst)` per suite.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn run_selftest(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, f64)>> {
    let res = py.allow_threads(|| selftest::run_all(seed)).map_err(to_py)?;
    Ok(res.into_iter().map(|r| (r.name.to_string(), r.passed, r.worst)).collect())
}

#[pymodule]
fn lfconflict_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrainingSet>()?;
    m.add_class::<PyForest>()?;
    m.add_function(wrap_pyfunction!(rejection_abc, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(window_scan, m)?)?;
    m.add_function(wrap_pyfunction!(select_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}

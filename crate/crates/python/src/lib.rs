//! Python bindings: synthetic data, ensemble training and prediction,
//! metrics, target smoothing and the full ladder.
//!
//! Structured results (reports, ladder output) cross the boundary as plain
//! dicts built from their JSON form.

use std::collections::BTreeMap;
use std::path::PathBuf;

use labelfix::experiments::train_baseline;
use labelfix::selftrain::{evaluate_ensemble, hard_examples};
use labelfix::{self as lf, LabelSet, NoiseSpec, RunConfig, TrainSchedule};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: lf::Error) -> PyErr {
    match e {
        lf::Error::InvalidArgument(_)
        | lf::Error::InvalidSmoothing(_)
        | lf::Error::DimensionMismatch { .. }
        | lf::Error::Parse { .. }
        | lf::Error::UnknownSample(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn label_set(ids: &[usize], t: usize) -> PyResult<LabelSet> {
    LabelSet::from_ids(ids, t).map_err(err)
}

/// A labeled multi-label dataset.
#[pyclass(name = "Dataset", module = "labelfix", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: lf::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: lf::load_manifest(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        lf::save_manifest(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn sample_ids(&self) -> Vec<u64> {
        self.inner.sample_ids().collect()
    }

    #[getter]
    fn group_ids(&self) -> Vec<u64> {
        self.inner.samples().iter().map(|s| s.group_id).collect()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.samples().iter().map(|s| s.features.clone()).collect()
    }

    #[getter]
    fn assigned_labels(&self) -> Vec<Vec<usize>> {
        self.inner.samples().iter().map(|s| s.assigned_labels.to_vec()).collect()
    }

    #[getter]
    fn true_labels(&self) -> Vec<Vec<usize>> {
        self.inner.samples().iter().map(|s| s.true_labels.to_vec()).collect()
    }

    fn noisy_fraction(&self) -> f64 {
        self.inner.noisy_fraction()
    }

    fn subset(&self, ids: Vec<u64>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.subset(&ids).map_err(err)? })
    }

    /// Copy with the given samples relabeled.
    fn with_corrections(&self, corrections: BTreeMap<u64, Vec<usize>>) -> PyResult<Self> {
        let t = self.inner.num_classes();
        let c = corrections.into_iter().map(|(k, v)| Ok((k, label_set(&v, t)?))).collect::<PyResult<_>>()?;
        Ok(Self { inner: self.inner.with_corrections(&c).map_err(err)? })
    }

    fn hash(&self) -> String {
        lf::dataset_hash(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(samples={}, classes={}, dim={})",
            self.inner.len(),
            self.inner.num_classes(),
            self.inner.feature_dim()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (num_classes=14, feature_dim=32, groups=300, frames_min=20, frames_max=20, p_absent=0.25, p_spurious=0.05, seed=0))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    num_classes: usize,
    feature_dim: usize,
    groups: usize,
    frames_min: usize,
    frames_max: usize,
    p_absent: f64,
    p_spurious: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    let spec = NoiseSpec { groups, frames_min, frames_max, p_absent, p_spurious, ..NoiseSpec::default() };
    Ok(PyDataset { inner: lf::generate_synthetic(&spec, feature_dim, num_classes, seed).map_err(err)? })
}

/// Weighted ensemble of MLPs with different hidden widths.
#[pyclass(name = "Ensemble", module = "labelfix")]
pub struct PyEnsemble {
    inner: lf::Ensemble,
}

#[pymethods]
impl PyEnsemble {
    /// Untrained ensemble with the default member widths.
    #[new]
    #[pyo3(signature = (input_dim, num_classes, seed=0))]
    fn new(input_dim: usize, num_classes: usize, seed: u64) -> PyResult<Self> {
        let configs = labelfix::ensemble::default_member_configs(seed);
        Ok(Self { inner: lf::Ensemble::from_configs(&configs, input_dim, num_classes).map_err(err)? })
    }

    /// Trains a fresh ensemble on the dataset's assigned labels.
    #[staticmethod]
    #[pyo3(signature = (dataset, seed=0))]
    fn fit(py: Python<'_>, dataset: &PyDataset, seed: u64) -> PyResult<Self> {
        let cfg = lf::BenchmarkConfig::default();
        let ds = dataset.inner.clone();
        let inner = py.detach(move || train_baseline(&cfg, &ds, seed)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Continues training on the dataset's assigned labels. Returns the
    /// per-member loss traces.
    #[pyo3(signature = (dataset, phase1_epochs=6, phase2_epochs=6, seed=0))]
    fn train(
        &mut self,
        py: Python<'_>,
        dataset: &PyDataset,
        phase1_epochs: usize,
        phase2_epochs: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let schedule = TrainSchedule { phase1_epochs, phase2_epochs, ..TrainSchedule::default() };
        let data = hard_examples(&dataset.inner);
        let inner = &mut self.inner;
        let traces = py.detach(|| inner.train(&data, &schedule, None, seed)).map_err(err)?;
        Ok(traces)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    /// Per-class probabilities, maximum over members.
    fn predict_proba(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        features.iter().map(|x| self.inner.max_prob_output(x).map_err(err)).collect()
    }

    /// Top-three label sets.
    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<usize>>> {
        features.iter().map(|x| self.inner.predict(x).map(LabelSet::to_vec).map_err(err)).collect()
    }

    /// Report against the dataset's ground-truth labels.
    fn evaluate(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<Py<PyAny>> {
        to_py(py, &evaluate_ensemble(&self.inner, &dataset.inner).map_err(err)?)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_checkpoint(&path, &BTreeMap::new()).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: lf::Ensemble::load_checkpoint(&path).map_err(err)?.0 })
    }
}

/// Macro precision, recall, accuracy and F1 over all classes.
#[pyfunction]
fn evaluate(py: Python<'_>, preds: Vec<Vec<usize>>, truths: Vec<Vec<usize>>, num_classes: usize) -> PyResult<Py<PyAny>> {
    let p = preds.iter().map(|v| label_set(v, num_classes)).collect::<PyResult<Vec<_>>>()?;
    let t = truths.iter().map(|v| label_set(v, num_classes)).collect::<PyResult<Vec<_>>>()?;
    to_py(py, &lf::evaluate(&p, &t, num_classes).map_err(err)?)
}

/// Target vector with mass `p` on positives spread over the negatives.
#[pyfunction]
fn smooth_targets(labels: Vec<usize>, p: f64, num_classes: usize) -> PyResult<Vec<f64>> {
    let l = label_set(&labels, num_classes)?;
    Ok(lf::smooth_targets(l, p, num_classes).map_err(err)?.as_slice().to_vec())
}

/// Indices of the three highest probabilities.
#[pyfunction]
fn top3(probs: Vec<f64>) -> PyResult<Vec<usize>> {
    Ok(lf::top3_decision(&probs).map_err(err)?.to_vec())
}

/// Runs every stage for each seed. `config` is `key = value` text as read
/// by the command line tool.
#[pyfunction]
#[pyo3(signature = (seeds, config=None))]
fn run_ladder(py: Python<'_>, seeds: Vec<u64>, config: Option<String>) -> PyResult<Py<PyAny>> {
    let cfg = match config {
        Some(text) => RunConfig::parse(&text).map_err(err)?,
        None => RunConfig::default(),
    };
    cfg.validate().map_err(err)?;
    let report = py.detach(|| lf::run_ladder(&cfg.benchmark, &seeds)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "labelfix")]
pub fn labelfix_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_targets, m)?)?;
    m.add_function(wrap_pyfunction!(top3, m)?)?;
    m.add_function(wrap_pyfunction!(run_ladder, m)?)?;
    m.add("STAGES", lf::experiments::STAGES.to_vec())?;
    Ok(())
}

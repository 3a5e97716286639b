//! Python bindings for the `rafni` crate.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use clap::Parser;
use rafni::engine::{ActionLogEntry, EpochReport};
use rafni::eval::{CvPlan, EffectivenessReport};
use rafni::models::{ClassifierKind, ClassifierSpec, OptimizerSpec};
use rafni::noise::{GroupId, NoiseReport};
use rafni::{EpochSnapshot, LabeledDataset, Matrix};

create_exception!(rafni_py, RafniError, PyException);

fn err(e: rafni::RafniError) -> PyErr {
    RafniError::new_err(format!("[exit {}] {e}", e.exit_code()))
}

fn matrix(rows: Vec<Vec<f64>>, cols: usize) -> PyResult<Matrix> {
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(err(rafni::RafniError::Shape(format!("row {bad} has {} values, expected {cols}", rows[bad].len()))));
    }
    Matrix::new(n, cols, rows.into_iter().flatten().collect()).map_err(err)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn report_dict<'py>(py: Python<'py>, r: &NoiseReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n_corrupted", r.n_corrupted)?;
    d.set_item("realized_rate", r.realized_rate)?;
    d.set_item("per_class_corrupted", r.per_class_corrupted.clone())?;
    d.set_item("corrupted", r.corrupted.clone())?;
    Ok(d)
}

fn epoch_dict<'py>(py: Python<'py>, r: &EpochReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", r.epoch)?;
    d.set_item("n_active", r.n_active)?;
    d.set_item("n_removed_loss", r.n_removed_loss)?;
    d.set_item("n_removed_record", r.n_removed_record)?;
    d.set_item("n_relabelled", r.n_relabelled)?;
    d.set_item("loss_threshold", r.loss_threshold)?;
    d.set_item("prob_threshold", r.prob_threshold)?;
    d.set_item("overlap", r.overlap)?;
    d.set_item("mean_gap", r.mean_gap)?;
    d.set_item("frozen", r.frozen)?;
    d.set_item("started", r.started)?;
    Ok(d)
}

fn action_dict<'py>(py: Python<'py>, a: &ActionLogEntry) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("epoch", a.epoch)?;
    d.set_item("instance_id", a.instance_id)?;
    d.set_item("action", a.action.as_str())?;
    d.set_item("old_label", a.old_label)?;
    d.set_item("new_label", a.new_label)?;
    d.set_item("trigger_value", a.trigger_value)?;
    Ok(d)
}

fn audit_dict<'py>(py: Python<'py>, r: &EffectivenessReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("pct_good_removals", r.pct_good_removals)?;
    d.set_item("total_removals", r.total_removals)?;
    d.set_item("pct_good_changes", r.pct_good_changes)?;
    d.set_item("pct_noisy_changes", r.pct_noisy_changes)?;
    d.set_item("total_changes", r.total_changes)?;
    Ok(d)
}

fn dataset_dict<'py>(py: Python<'py>, ds: &LabeledDataset) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ids", ds.ids.clone())?;
    d.set_item("features", to_rows(&ds.features))?;
    d.set_item("labels", ds.labels.clone())?;
    d.set_item("clean_labels", ds.clean_labels.clone())?;
    d.set_item("n_classes", ds.n_classes)?;
    Ok(d)
}

/// Corrupt exactly floor(rate * n_c) labels of every class, uniformly to other classes.
#[pyfunction]
#[pyo3(signature = (labels, k, rate, seed=0))]
fn inject_symmetric<'py>(py: Python<'py>, labels: Vec<usize>, k: usize, rate: f64, seed: u64) -> PyResult<(Vec<usize>, Bound<'py, PyDict>)> {
    let (noisy, r) = rafni::noise::inject_symmetric(&labels, k, rate, seed).map_err(err)?;
    Ok((noisy, report_dict(py, &r)?))
}

/// Flip floor(rate * n_s) labels of each source class s to its paired target.
#[pyfunction]
#[pyo3(signature = (labels, k, rate, transitions, seed=0))]
fn inject_asymmetric<'py>(
    py: Python<'py>,
    labels: Vec<usize>,
    k: usize,
    rate: f64,
    transitions: Vec<(usize, usize)>,
    seed: u64,
) -> PyResult<(Vec<usize>, Bound<'py, PyDict>)> {
    let (noisy, r) = rafni::noise::inject_asymmetric(&labels, k, rate, &transitions, seed).map_err(err)?;
    Ok((noisy, report_dict(py, &r)?))
}

/// Flip each instance independently with its group's probability to the group's target.
#[pyfunction]
#[pyo3(signature = (labels, groups, probs, targets, seed=0))]
fn inject_nnar<'py>(
    py: Python<'py>,
    labels: Vec<usize>,
    groups: Vec<GroupId>,
    probs: BTreeMap<GroupId, f64>,
    targets: BTreeMap<GroupId, usize>,
    seed: u64,
) -> PyResult<(Vec<usize>, Bound<'py, PyDict>)> {
    let (noisy, r) = rafni::noise::inject_nnar(&labels, &groups, &probs, &targets, seed).map_err(err)?;
    Ok((noisy, report_dict(py, &r)?))
}

#[pyclass(name = "GmmFit", frozen)]
struct PyGmmFit(rafni::GmmFit);

#[pymethods]
impl PyGmmFit {
    #[getter]
    fn clean(&self) -> (f64, f64) {
        (self.0.clean.mean, self.0.clean.std)
    }
    #[getter]
    fn noisy(&self) -> (f64, f64) {
        (self.0.noisy.mean, self.0.noisy.std)
    }
    #[getter]
    fn weights(&self) -> (f64, f64) {
        (self.0.weight_clean, self.0.weight_noisy)
    }
    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.0.log_likelihood
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }
    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }
    fn overlap(&self) -> f64 {
        self.0.overlap()
    }
    fn mean_gap(&self) -> f64 {
        self.0.mean_gap()
    }
    fn noisy_responsibility(&self, x: f64) -> f64 {
        self.0.noisy_responsibility(x)
    }
    fn __repr__(&self) -> String {
        format!(
            "GmmFit(clean=N({:.4}, {:.4}), noisy=N({:.4}, {:.4}), weights=({:.3}, {:.3}))",
            self.0.clean.mean, self.0.clean.std, self.0.noisy.mean, self.0.noisy.std, self.0.weight_clean, self.0.weight_noisy
        )
    }
}

/// Two-component 1-D Gaussian mixture fitted by EM.
#[pyfunction]
#[pyo3(signature = (values, seed=0))]
fn gmm_fit(values: Vec<f64>, seed: u64) -> PyResult<PyGmmFit> {
    rafni::gmm::fit_default(&values, seed).map(PyGmmFit).map_err(err)
}

/// Overlap coefficient of N(mean_a, std_a) and N(mean_b, std_b).
#[pyfunction]
fn overlap(mean_a: f64, std_a: f64, mean_b: f64, std_b: f64) -> PyResult<f64> {
    let a = rafni::Gaussian::new(mean_a, std_a).map_err(err)?;
    let b = rafni::Gaussian::new(mean_b, std_b).map_err(err)?;
    rafni::gmm::overlap(&a, &b).map_err(err)
}

/// Linear-interpolation quantile.
#[pyfunction]
fn quantile(values: Vec<f64>, order: f64) -> PyResult<f64> {
    rafni::engine::quantile(&values, order).map_err(err)
}

#[pyfunction]
fn accuracy(predictions: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    rafni::eval::accuracy(&predictions, &truth).map_err(err)
}

type FoldTuple = (usize, usize, Vec<usize>, Vec<usize>);

/// List of (repeat, fold, train_indices, test_indices).
#[pyfunction]
#[pyo3(signature = (labels, k=5, repeats=5, stratified=true, seed=0))]
fn make_folds(labels: Vec<usize>, k: usize, repeats: usize, stratified: bool, seed: u64) -> PyResult<Vec<FoldTuple>> {
    let folds = rafni::eval::make_folds(&labels, &CvPlan { k, repeats, stratified, seed }).map_err(err)?;
    Ok(folds.into_iter().map(|f| (f.repeat, f.fold, f.train, f.test)).collect())
}

#[pyfunction]
fn load_dataset<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyDict>> {
    dataset_dict(py, &rafni::load_dataset(path).map_err(err)?)
}

/// Balanced isotropic Gaussian blobs with centres at least `cluster_sep` apart.
#[pyfunction]
#[pyo3(signature = (n, k, d, cluster_sep, seed=0))]
fn gen_synthetic<'py>(py: Python<'py>, n: usize, k: usize, d: usize, cluster_sep: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    dataset_dict(py, &rafni::gen_synthetic(n, k, d, cluster_sep, seed).map_err(err)?)
}

/// Run the command-line tool in-process; returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let argv = std::iter::once("rafni".to_string()).chain(args);
    match rafni::cli::Cli::try_parse_from(argv) {
        Ok(cli) => rafni::cli::run(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

#[pyclass(name = "RafniConfig", from_py_object)]
#[derive(Clone)]
struct PyRafniConfig(rafni::RafniConfig);

#[pymethods]
impl PyRafniConfig {
    #[new]
    #[pyo3(signature = (quantile_loss=0.95, quantile_prob=0.95, record_length=5, not_change_epochs=4, overlap_start_threshold=0.15, mean_gap_freeze=0.3))]
    fn new(
        quantile_loss: f64,
        quantile_prob: f64,
        record_length: usize,
        not_change_epochs: usize,
        overlap_start_threshold: f64,
        mean_gap_freeze: f64,
    ) -> PyResult<Self> {
        let cfg = rafni::RafniConfig {
            quantile_loss,
            quantile_prob,
            record_length,
            not_change_epochs,
            overlap_start_threshold,
            mean_gap_freeze,
        };
        cfg.validate(None).map_err(err)?;
        Ok(Self(cfg))
    }
    #[getter]
    fn quantile_loss(&self) -> f64 {
        self.0.quantile_loss
    }
    #[getter]
    fn quantile_prob(&self) -> f64 {
        self.0.quantile_prob
    }
    #[getter]
    fn record_length(&self) -> usize {
        self.0.record_length
    }
    #[getter]
    fn not_change_epochs(&self) -> usize {
        self.0.not_change_epochs
    }
    #[getter]
    fn overlap_start_threshold(&self) -> f64 {
        self.0.overlap_start_threshold
    }
    #[getter]
    fn mean_gap_freeze(&self) -> f64 {
        self.0.mean_gap_freeze
    }
    /// Out-of-range warnings for a run of `epochs` epochs.
    #[pyo3(signature = (epochs=None))]
    fn validate(&self, epochs: Option<usize>) -> PyResult<Vec<String>> {
        self.0.validate(epochs).map_err(err)
    }
    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Per-run controller: feed one snapshot per epoch over the active instances.
#[pyclass(name = "RafniEngine")]
struct PyRafniEngine(rafni::RafniEngine);

#[pymethods]
impl PyRafniEngine {
    #[new]
    #[pyo3(signature = (config, ids, labels))]
    fn new(config: PyRafniConfig, ids: Vec<usize>, labels: Vec<usize>) -> PyResult<Self> {
        rafni::RafniEngine::new(config.0, &ids, &labels, None).map(Self).map_err(err)
    }

    /// `probs` holds one probability row per id; ids must equal `active_ids()`.
    fn observe<'py>(&mut self, py: Python<'py>, epoch: usize, ids: Vec<usize>, losses: Vec<f64>, probs: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let k = probs.first().map_or(0, Vec::len);
        let snap = EpochSnapshot::new(epoch, ids, losses, matrix(probs, k)?).map_err(err)?;
        let report = self.0.observe(snap).map_err(err)?;
        epoch_dict(py, &report)
    }
    fn active_ids(&self) -> Vec<usize> {
        self.0.active_ids()
    }
    fn active_labels(&self) -> Vec<usize> {
        self.0.active_labels()
    }
    fn action_log<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0.action_log().iter().map(|a| action_dict(py, a)).collect()
    }
    fn reports<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.0.reports().iter().map(|r| epoch_dict(py, r)).collect()
    }
    #[getter]
    fn started(&self) -> bool {
        self.0.thresholds().started
    }
    #[getter]
    fn frozen(&self) -> bool {
        self.0.thresholds().frozen
    }
    /// Score the action log; `clean` and `noisy` are indexed by instance id.
    fn audit<'py>(&self, py: Python<'py>, clean: Vec<usize>, noisy: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
        audit_dict(py, &rafni::eval::audit(self.0.action_log(), &clean, &noisy).map_err(err)?)
    }
}

/// Softmax regression (`kind="softmax"`) or one-hidden-layer ReLU MLP (`kind="mlp"`).
#[pyclass(name = "Classifier")]
struct PyClassifier {
    model: rafni::Classifier,
    optimizer: OptimizerSpec,
}

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (input_dim, n_classes, kind="softmax", hidden_units=32, seed=0, learning_rate=1e-3, decay=1e-6, momentum=0.9, batch_size=16))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_dim: usize,
        n_classes: usize,
        kind: &str,
        hidden_units: usize,
        seed: u64,
        learning_rate: f64,
        decay: f64,
        momentum: f64,
        batch_size: usize,
    ) -> PyResult<Self> {
        let spec = match kind {
            "softmax" => ClassifierSpec { kind: ClassifierKind::SoftmaxRegression, hidden_units: 0, input_dim, n_classes },
            "mlp" => ClassifierSpec { kind: ClassifierKind::Mlp, hidden_units, input_dim, n_classes },
            other => return Err(RafniError::new_err(format!("unknown classifier kind `{other}`"))),
        };
        let optimizer = OptimizerSpec { learning_rate, decay, momentum, batch_size };
        optimizer.validate().map_err(err)?;
        Ok(Self { model: rafni::Classifier::init(spec, seed).map_err(err)?, optimizer })
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x, self.model.spec().input_dim)?;
        self.model.predict_proba(&x).map(|m| to_rows(&m)).map_err(err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let x = matrix(x, self.model.spec().input_dim)?;
        self.model.predict(&x).map_err(err)
    }

    /// One epoch of mini-batch SGD; returns (losses, probs) from the pass after it.
    #[pyo3(signature = (x, labels, epoch, shuffle_seed=0, ids=None))]
    fn train_epoch(&mut self, x: Vec<Vec<f64>>, labels: Vec<usize>, epoch: usize, shuffle_seed: u64, ids: Option<Vec<usize>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let x = matrix(x, self.model.spec().input_dim)?;
        let ids = ids.unwrap_or_else(|| (0..x.rows()).collect());
        let snap = self.model.train_epoch(&x, &labels, &ids, &self.optimizer, shuffle_seed, epoch).map_err(err)?;
        Ok((snap.losses, to_rows(&snap.probs)))
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.model.params().to_vec()
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.model.n_params()
    }
}

#[pymodule]
fn rafni_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RafniError", m.py().get_type::<RafniError>())?;
    m.add_class::<PyRafniConfig>()?;
    m.add_class::<PyRafniEngine>()?;
    m.add_class::<PyClassifier>()?;
    m.add_class::<PyGmmFit>()?;
    m.add_function(wrap_pyfunction!(inject_symmetric, m)?)?;
    m.add_function(wrap_pyfunction!(inject_asymmetric, m)?)?;
    m.add_function(wrap_pyfunction!(inject_nnar, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_fit, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(make_folds, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

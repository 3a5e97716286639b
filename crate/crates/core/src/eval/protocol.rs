//! Training runs and repeated-split experiments.
//!
//! Seeds: for run `(repeat, fold)` under master seed `s`, noise uses
//! `derive_seed(s, [repeat, fold, 0])`, model init `[.., 1]` and the shuffle
//! of epoch `e` `[.., 2, e]`. Both arms of a run share the init and shuffle
//! seeds so they differ only in what RAFNI does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::engine::{ActionLogEntry, EpochReport, RafniConfig, RafniEngine};
use crate::error::{RafniError, Result};
use crate::eval::audit::{audit, EffectivenessReport};
use crate::eval::folds::{holdout_split, make_folds, CvPlan, Fold};
use crate::eval::{accuracy, MeanStd};
use crate::models::{Classifier, ClassifierKind, ClassifierSpec, OptimizerSpec};
use crate::noise::{inject, NoiseReport, NoiseSpec};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub kind: ClassifierKind,
    pub hidden_units: usize,
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
}

impl Default for TrainSetup {
    fn default() -> Self {
        Self { kind: ClassifierKind::SoftmaxRegression, hidden_units: 32, optimizer: OptimizerSpec::default(), epochs: 40 }
    }
}

impl TrainSetup {
    pub fn classifier_spec(&self, input_dim: usize, n_classes: usize) -> ClassifierSpec {
        ClassifierSpec { kind: self.kind, hidden_units: self.hidden_units, input_dim, n_classes }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.epochs < 2 {
            return Err(RafniError::Config(format!("train.epochs = {} must be at least 2", self.epochs)));
        }
        if self.kind == ClassifierKind::Mlp && self.hidden_units == 0 {
            return Err(RafniError::Config("model.hidden_units must be at least 1 for the MLP".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub test_accuracy: f64,
    pub epoch_reports: Vec<EpochReport>,
    pub actions: Vec<ActionLogEntry>,
    pub model: Classifier,
}

/// Train one model on `train_rows` of `ds` with the given training labels
/// (aligned with `train_rows`) and score it on `test_rows` against
/// `test_labels`. With `rafni = None` this is the plain backbone.
#[allow(clippy::too_many_arguments)]
pub fn train_run(
    ds: &LabeledDataset,
    train_rows: &[usize],
    train_labels: &[usize],
    test_rows: &[usize],
    test_labels: &[usize],
    rafni: Option<&RafniConfig>,
    setup: &TrainSetup,
    seed: u64,
) -> Result<RunOutcome> {
    setup.validate()?;
    if train_rows.len() != train_labels.len() || test_rows.len() != test_labels.len() {
        return Err(RafniError::Shape("row and label lists must align".into()));
    }
    let spec = setup.classifier_spec(ds.dim(), ds.n_classes);
    let mut model = Classifier::init(spec, derive_seed(seed, &[1]))?;
    let mut engine = match rafni {
        Some(cfg) => {
            cfg.validate(Some(setup.epochs))?;
            Some(RafniEngine::new(cfg.clone(), train_rows, train_labels, None)?)
        }
        None => None,
    };
    // baseline trains on all rows in ascending id order, same as the engine
    let mut baseline: Vec<(usize, usize)> = train_rows.iter().copied().zip(train_labels.iter().copied()).collect();
    baseline.sort_unstable();

    for epoch in 0..setup.epochs {
        let (ids, labels) = match &engine {
            Some(e) => (e.active_ids(), e.active_labels()),
            None => baseline.iter().copied().unzip(),
        };
        let x = ds.features.select_rows(&ids);
        let snap = model.train_epoch(&x, &labels, &ids, &setup.optimizer, derive_seed(seed, &[2, epoch as u64]), epoch)?;
        if let Some(e) = engine.as_mut() {
            e.observe(snap)?;
        }
    }

    let preds = model.predict(&ds.features.select_rows(test_rows))?;
    let test_accuracy = accuracy(&preds, test_labels)?;
    let (epoch_reports, actions) = match engine {
        Some(e) => (e.reports().to_vec(), e.action_log().to_vec()),
        None => (Vec::new(), Vec::new()),
    };
    Ok(RunOutcome { test_accuracy, epoch_reports, actions, model })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    CrossValidation(CvPlan),
    HoldOut { fraction: f64, stratified: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub rafni: RafniConfig,
    pub noise: Option<NoiseSpec>,
    pub setup: TrainSetup,
    pub protocol: Protocol,
    pub master_seed: u64,
    pub baseline: bool,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub repeat: usize,
    pub fold: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub noise: Option<NoiseReport>,
    pub rafni: RunOutcome,
    pub baseline: Option<RunOutcome>,
    pub audit: Option<EffectivenessReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub rafni: MeanStd,
    pub baseline: Option<MeanStd>,
    /// Pooled over runs; present when the dataset carries clean labels or
    /// noise was injected.
    pub audit: Option<EffectivenessReport>,
}

pub fn split_plan(ds: &LabeledDataset, protocol: &Protocol, seed: u64) -> Result<Vec<Fold>> {
    let reference = ds.reference_labels();
    match protocol {
        Protocol::CrossValidation(plan) => make_folds(reference, plan),
        Protocol::HoldOut { fraction, stratified } => {
            Ok(vec![holdout_split(reference, *fraction, *stratified, derive_seed(seed, &[u64::MAX]))?])
        }
    }
}

/// Run the full protocol. Noise is injected only into each run's training
/// rows; test rows are scored against the reference (clean) labels.
pub fn run_experiment(ds: &LabeledDataset, spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.setup.validate()?;
    spec.rafni.validate(Some(spec.setup.epochs))?;
    if let Some(noise) = &spec.noise {
        noise.validate(ds.n_classes)?;
    }
    let folds = split_plan(ds, &spec.protocol, spec.master_seed)?;
    let reference = ds.reference_labels();
    let has_truth = ds.clean_labels.is_some() || spec.noise.is_some();

    let runs: Vec<RunRecord> = folds
        .into_par_iter()
        .map(|fold| -> Result<RunRecord> {
            let run_seed = derive_seed(spec.master_seed, &[fold.repeat as u64, fold.fold as u64]);
            let given: Vec<usize> = fold.train.iter().map(|&i| ds.labels[i]).collect();
            let (train_labels, noise) = match &spec.noise {
                Some(n) => {
                    let (noisy, report) = inject(&given, ds.n_classes, n, None, derive_seed(run_seed, &[0]))?;
                    (noisy, Some(report))
                }
                None => (given, None),
            };
            let test_labels: Vec<usize> = fold.test.iter().map(|&i| reference[i]).collect();
            let rafni = train_run(ds, &fold.train, &train_labels, &fold.test, &test_labels, Some(&spec.rafni), &spec.setup, run_seed)?;
            let baseline = if spec.baseline {
                Some(train_run(ds, &fold.train, &train_labels, &fold.test, &test_labels, None, &spec.setup, run_seed)?)
            } else {
                None
            };
            let audit = if has_truth {
                let mut noisy_full = ds.labels.clone();
                for (&i, &l) in fold.train.iter().zip(&train_labels) {
                    noisy_full[i] = l;
                }
                Some(audit(&rafni.actions, reference, &noisy_full)?)
            } else {
                None
            };
            Ok(RunRecord {
                repeat: fold.repeat,
                fold: fold.fold,
                train_rows: fold.train,
                test_rows: fold.test,
                noise,
                rafni,
                baseline,
                audit,
            })
        })
        .collect::<Result<_>>()?;

    let rafni = MeanStd::from_scores(runs.iter().map(|r| r.rafni.test_accuracy).collect());
    let baseline = spec
        .baseline
        .then(|| MeanStd::from_scores(runs.iter().filter_map(|r| r.baseline.as_ref()).map(|b| b.test_accuracy).collect()));
    let audit = has_truth.then(|| EffectivenessReport::merge(runs.iter().filter_map(|r| r.audit.as_ref())));
    Ok(ExperimentResult { runs, rafni, baseline, audit })
}

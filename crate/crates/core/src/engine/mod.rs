//! Per-epoch filtering and relabelling controller.
//!
//! Each epoch the trainer hands over an [`EpochSnapshot`] for the active
//! instances. Until the start gate fires, the engine only keeps prediction
//! records. Afterwards every active instance goes through, in order:
//!
//! 1. grace window: a recently relabelled instance is left alone;
//! 2. loss filter: loss above `loss_threshold` removes it for good;
//! 3. relabel: a confident prediction (max prob above `prob_threshold`)
//!    that disagrees with the current label replaces the label;
//! 4. record filter: if every adjacent pair among the last `record_length`
//!    predictions differs, the instance is removed.
//!
//! Thresholds applied at epoch `m` come from the snapshot of epoch `m - 1`.

mod config;
mod threshold;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use config::{RafniConfig, RECOMMENDED_QUANTILE_RANGE};
pub use threshold::{evaluate_start, quantile, start_decision, update_thresholds, ThresholdState};

use crate::dataset::Matrix;
use crate::error::{RafniError, Result};
use crate::gmm::{self, GmmFit};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub epoch: usize,
    /// Instance ids, ascending, one per row.
    pub ids: Vec<usize>,
    pub losses: Vec<f64>,
    pub probs: Matrix,
    pub preds: Vec<usize>,
}

impl EpochSnapshot {
    /// Build a snapshot, deriving `preds` as the row-wise argmax (lowest
    /// index wins ties) and checking that every row is a distribution.
    pub fn new(epoch: usize, ids: Vec<usize>, losses: Vec<f64>, probs: Matrix) -> Result<Self> {
        if ids.len() != losses.len() || ids.len() != probs.rows() {
            return Err(RafniError::Shape(format!(
                "snapshot with {} ids, {} losses, {} probability rows",
                ids.len(),
                losses.len(),
                probs.rows()
            )));
        }
        let mut preds = Vec::with_capacity(ids.len());
        for r in 0..probs.rows() {
            let row = probs.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(RafniError::Shape(format!("probability row {r} is not a distribution")));
            }
            preds.push(argmax(row));
        }
        Ok(Self { epoch, ids, losses, probs, preds })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn max_prob(&self, row: usize) -> f64 {
        self.probs.row(row)[self.preds[row]]
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    RemovedByLoss,
    RemovedByRecord,
    Relabelled,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::RemovedByLoss => "removed_by_loss",
            Action::RemovedByRecord => "removed_by_record",
            Action::Relabelled => "relabelled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub epoch: usize,
    pub instance_id: usize,
    pub action: Action,
    pub old_label: usize,
    pub new_label: Option<usize>,
    /// Loss for loss removals, max probability for relabels, number of
    /// prediction changes in the window for record removals.
    pub trigger_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceState {
    pub id: usize,
    pub active: bool,
    pub current_label: usize,
    pub clean_label: Option<usize>,
    pub record: VecDeque<usize>,
    pub grace_remaining: usize,
    pub history: Vec<(usize, Action)>,
}

impl InstanceState {
    pub fn new(id: usize, label: usize, clean_label: Option<usize>) -> Self {
        Self {
            id,
            active: true,
            current_label: label,
            clean_label,
            record: VecDeque::new(),
            grace_remaining: 0,
            history: Vec::new(),
        }
    }

    fn push_prediction(&mut self, pred: usize, capacity: usize) {
        if self.record.len() == capacity {
            self.record.pop_front();
        }
        self.record.push_back(pred);
    }

    /// Full record in which every adjacent pair of predictions differs.
    pub fn record_unstable(&self, record_length: usize) -> bool {
        self.record.len() == record_length
            && self.record.iter().zip(self.record.iter().skip(1)).all(|(a, b)| a != b)
    }
}

/// Apply one epoch to `states` (sorted by id). The snapshot must cover
/// exactly the active instances in ascending id order.
pub fn process_epoch(
    snapshot: &EpochSnapshot,
    states: &mut [InstanceState],
    config: &RafniConfig,
    thresholds: &ThresholdState,
) -> Result<Vec<ActionLogEntry>> {
    let active: Vec<usize> = states.iter().filter(|s| s.active).map(|s| s.id).collect();
    if active != snapshot.ids {
        return Err(RafniError::Desync(format!(
            "epoch {}: snapshot lists {} instances, {} are active",
            snapshot.epoch,
            snapshot.ids.len(),
            active.len()
        )));
    }
    let loss_threshold = match (thresholds.started, thresholds.loss_threshold) {
        (true, None) => {
            return Err(RafniError::Desync(format!("epoch {}: started without a loss threshold", snapshot.epoch)))
        }
        (_, lt) => lt,
    };

    let mut log = Vec::new();
    for (row, state) in states.iter_mut().filter(|s| s.active).enumerate() {
        let pred = snapshot.preds[row];
        let loss = snapshot.losses[row];
        let max_prob = snapshot.max_prob(row);

        if !thresholds.started {
            state.push_prediction(pred, config.record_length);
            continue;
        }
        if state.grace_remaining > 0 {
            state.grace_remaining -= 1;
            state.push_prediction(pred, config.record_length);
            continue;
        }
        let epoch = snapshot.epoch;
        if loss_threshold.is_some_and(|t| loss > t) {
            state.active = false;
            state.history.push((epoch, Action::RemovedByLoss));
            log.push(ActionLogEntry {
                epoch,
                instance_id: state.id,
                action: Action::RemovedByLoss,
                old_label: state.current_label,
                new_label: None,
                trigger_value: loss,
            });
        } else if thresholds.prob_threshold.is_some_and(|t| max_prob > t) && pred != state.current_label {
            let old = state.current_label;
            state.current_label = pred;
            state.record.clear();
            state.grace_remaining = config.not_change_epochs;
            state.history.push((epoch, Action::Relabelled));
            log.push(ActionLogEntry {
                epoch,
                instance_id: state.id,
                action: Action::Relabelled,
                old_label: old,
                new_label: Some(pred),
                trigger_value: max_prob,
            });
        } else {
            state.push_prediction(pred, config.record_length);
            if state.record_unstable(config.record_length) {
                state.active = false;
                state.history.push((epoch, Action::RemovedByRecord));
                log.push(ActionLogEntry {
                    epoch,
                    instance_id: state.id,
                    action: Action::RemovedByRecord,
                    old_label: state.current_label,
                    new_label: None,
                    trigger_value: (config.record_length - 1) as f64,
                });
            }
        }
    }
    Ok(log)
}

/// One row of the per-epoch report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Active instances after this epoch's actions.
    pub n_active: usize,
    pub n_removed_loss: usize,
    pub n_removed_record: usize,
    pub n_relabelled: usize,
    /// Thresholds applied during this epoch.
    pub loss_threshold: Option<f64>,
    pub prob_threshold: Option<f64>,
    pub overlap: Option<f64>,
    pub mean_gap: Option<f64>,
    pub frozen: bool,
    pub started: bool,
}

/// Stateful controller for one training run.
#[derive(Debug, Clone)]
pub struct RafniEngine {
    config: RafniConfig,
    states: Vec<InstanceState>,
    thresholds: ThresholdState,
    prev_snapshot: Option<EpochSnapshot>,
    prev_fit: Option<GmmFit>,
    log: Vec<ActionLogEntry>,
    reports: Vec<EpochReport>,
}

impl RafniEngine {
    /// `ids` must be unique; they are kept sorted internally.
    pub fn new(config: RafniConfig, ids: &[usize], labels: &[usize], clean: Option<&[usize]>) -> Result<Self> {
        config.validate(None)?;
        if ids.len() != labels.len() || clean.is_some_and(|c| c.len() != ids.len()) {
            return Err(RafniError::Shape("ids, labels and clean labels must align".into()));
        }
        let mut states: Vec<InstanceState> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| InstanceState::new(id, labels[i], clean.map(|c| c[i])))
            .collect();
        states.sort_by_key(|s| s.id);
        if states.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(RafniError::Shape("duplicate instance id".into()));
        }
        Ok(Self {
            config,
            states,
            thresholds: ThresholdState::default(),
            prev_snapshot: None,
            prev_fit: None,
            log: Vec::new(),
            reports: Vec::new(),
        })
    }

    pub fn config(&self) -> &RafniConfig {
        &self.config
    }

    pub fn states(&self) -> &[InstanceState] {
        &self.states
    }

    pub fn thresholds(&self) -> &ThresholdState {
        &self.thresholds
    }

    pub fn action_log(&self) -> &[ActionLogEntry] {
        &self.log
    }

    pub fn reports(&self) -> &[EpochReport] {
        &self.reports
    }

    /// Active ids, ascending: the order the next snapshot must use.
    pub fn active_ids(&self) -> Vec<usize> {
        self.states.iter().filter(|s| s.active).map(|s| s.id).collect()
    }

    /// Current labels of the active instances, aligned with [`Self::active_ids`].
    pub fn active_labels(&self) -> Vec<usize> {
        self.states.iter().filter(|s| s.active).map(|s| s.current_label).collect()
    }

    /// Consume one epoch's snapshot: refresh thresholds (if started), apply
    /// the mechanisms, then evaluate the start gate (if not yet started).
    /// One GMM fit per epoch serves both the start and freeze checks.
    pub fn observe(&mut self, snapshot: EpochSnapshot) -> Result<EpochReport> {
        let fit = match gmm::fit_default(&snapshot.losses, 0) {
            Ok(f) => Some(f),
            Err(RafniError::DegenerateData | RafniError::InsufficientData { .. }) => None,
            Err(e) => return Err(e),
        };

        if self.thresholds.started {
            let prev = self
                .prev_snapshot
                .as_ref()
                .ok_or_else(|| RafniError::Desync("started without a previous epoch".into()))?;
            self.thresholds =
                update_thresholds(prev, &self.states, &self.config, &self.thresholds, self.prev_fit.as_ref())?;
        }
        let applied = self.thresholds.clone();
        let actions = process_epoch(&snapshot, &mut self.states, &self.config, &applied)?;

        let overlap = fit.as_ref().map(GmmFit::overlap);
        if !self.thresholds.started {
            if let Some(ov) = overlap {
                if start_decision(ov, self.thresholds.prev_overlap, self.config.overlap_start_threshold) {
                    self.thresholds.started = true;
                }
                self.thresholds.prev_overlap = Some(ov);
            }
        }

        let count = |a: Action| actions.iter().filter(|e| e.action == a).count();
        let report = EpochReport {
            epoch: snapshot.epoch,
            n_active: self.states.iter().filter(|s| s.active).count(),
            n_removed_loss: count(Action::RemovedByLoss),
            n_removed_record: count(Action::RemovedByRecord),
            n_relabelled: count(Action::Relabelled),
            loss_threshold: applied.loss_threshold.filter(|_| applied.started),
            prob_threshold: applied.prob_threshold.filter(|_| applied.started),
            overlap,
            mean_gap: fit.as_ref().map(GmmFit::mean_gap),
            frozen: self.thresholds.frozen,
            started: self.thresholds.started,
        };
        self.log.extend(actions);
        self.reports.push(report.clone());
        self.prev_snapshot = Some(snapshot);
        self.prev_fit = fit;
        Ok(report)
    }
}

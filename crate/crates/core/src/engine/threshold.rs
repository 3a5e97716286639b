//! Dynamic thresholds and the start/freeze gates.

use serde::{Deserialize, Serialize};

use crate::engine::{EpochSnapshot, InstanceState, RafniConfig};
use crate::error::{RafniError, Result};
use crate::gmm::{self, GmmFit};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub loss_threshold: Option<f64>,
    pub prob_threshold: Option<f64>,
    pub frozen: bool,
    pub started: bool,
    pub prev_overlap: Option<f64>,
}

/// Quantile by linear interpolation between closest ranks: with the values
/// sorted ascending, position `order * (n - 1)`.
pub fn quantile(values: &[f64], order: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(RafniError::EmptySequence);
    }
    if !(0.0..=1.0).contains(&order) {
        return Err(RafniError::InvalidOrder(order));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, order))
}

fn quantile_sorted(sorted: &[f64], order: f64) -> f64 {
    let pos = order * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Start rule: overlap below `threshold`, or overlap rising relative to the
/// previous epoch.
pub fn start_decision(overlap: f64, prev_overlap: Option<f64>, threshold: f64) -> bool {
    overlap < threshold || prev_overlap.is_some_and(|p| overlap > p)
}

/// Fit the GMM to `losses` and apply [`start_decision`]. A degenerate or
/// too-small loss set yields `(false, None)`.
pub fn evaluate_start(losses: &[f64], prev_overlap: Option<f64>, config: &RafniConfig) -> Result<(bool, Option<f64>)> {
    if losses.len() < 4 {
        return Err(RafniError::InsufficientData { got: losses.len(), need: 4 });
    }
    match gmm::fit_default(losses, 0) {
        Ok(fit) => {
            let ov = fit.overlap();
            Ok((start_decision(ov, prev_overlap, config.overlap_start_threshold), Some(ov)))
        }
        Err(RafniError::DegenerateData) => Ok((false, None)),
        Err(e) => Err(e),
    }
}

/// Recompute both thresholds from the previous epoch, then freeze them if
/// that epoch's mixture means are closer than `mean_gap_freeze`. A missing
/// fit (degenerate losses) counts as a zero gap.
///
/// `states` must be sorted by instance id.
pub fn update_thresholds(
    prev: &EpochSnapshot,
    states: &[InstanceState],
    config: &RafniConfig,
    current: &ThresholdState,
    prev_fit: Option<&GmmFit>,
) -> Result<ThresholdState> {
    // an empty previous epoch (everything removed) carries thresholds over
    if current.frozen || prev.is_empty() {
        return Ok(current.clone());
    }
    let mut next = current.clone();
    next.loss_threshold = Some(quantile(&prev.losses, config.quantile_loss)?);

    let mut miss_probs = Vec::new();
    for (row, &id) in prev.ids.iter().enumerate() {
        let state = lookup(states, id)?;
        if prev.preds[row] != state.current_label {
            miss_probs.push(prev.max_prob(row));
        }
    }
    if !miss_probs.is_empty() {
        next.prob_threshold = Some(quantile(&miss_probs, config.quantile_prob)?);
    }

    let gap = prev_fit.map_or(0.0, gmm::mean_gap);
    if gap < config.mean_gap_freeze {
        next.frozen = true;
    }
    Ok(next)
}

pub(crate) fn lookup(states: &[InstanceState], id: usize) -> Result<&InstanceState> {
    states
        .binary_search_by_key(&id, |s| s.id)
        .map(|i| &states[i])
        .map_err(|_| RafniError::Desync(format!("instance {id} has no state")))
}

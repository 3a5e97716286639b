//! Experiment protocols, scoring and the action audit.

mod audit;
mod folds;
mod grid;
mod protocol;

use serde::{Deserialize, Serialize};

pub use audit::{audit, EffectivenessReport};
pub use folds::{holdout_split, make_folds, CvPlan, Fold};
pub use grid::{grid_search, GridResult, GridScore, RafniGrid};
pub use protocol::{run_experiment, split_plan, train_run, ExperimentResult, ExperimentSpec, Protocol, RunOutcome, RunRecord, TrainSetup};

use crate::error::{RafniError, Result};

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(RafniError::Shape(format!("{} predictions vs {} labels", predictions.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(RafniError::Shape("accuracy of an empty sequence".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean and sample standard deviation of per-run scores (std is 0 for a
/// single run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub scores: Vec<f64>,
}

impl MeanStd {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0, scores };
        }
        let mean = scores.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std, scores }
    }
}

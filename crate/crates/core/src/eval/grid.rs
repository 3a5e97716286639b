use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::engine::RafniConfig;
use crate::error::{RafniError, Result};
use crate::eval::folds::{make_folds, CvPlan, Fold};
use crate::eval::protocol::{train_run, TrainSetup};
use crate::eval::MeanStd;
use crate::rng::derive_seed;

/// Cartesian grid over the four tunable hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RafniGrid {
    pub quantile_loss: Vec<f64>,
    pub quantile_prob: Vec<f64>,
    pub record_length: Vec<usize>,
    pub not_change_epochs: Vec<usize>,
}

impl RafniGrid {
    /// Expand into configs; non-grid fields come from `base`.
    pub fn points(&self, base: &RafniConfig) -> Vec<RafniConfig> {
        let mut out = Vec::new();
        for &ql in &self.quantile_loss {
            for &qp in &self.quantile_prob {
                for &rl in &self.record_length {
                    for &nc in &self.not_change_epochs {
                        out.push(RafniConfig {
                            quantile_loss: ql,
                            quantile_prob: qp,
                            record_length: rl,
                            not_change_epochs: nc,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.quantile_loss.len() * self.quantile_prob.len() * self.record_length.len() * self.not_change_epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub config: RafniConfig,
    pub accuracy: MeanStd,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: RafniConfig,
    pub table: Vec<GridScore>,
    /// Splits used for selection, as dataset row indices.
    pub folds_used: Vec<Fold>,
}

/// Higher mean first; ties go to lower `quantile_loss`, then lower
/// `quantile_prob`, then lower `record_length`, then lower
/// `not_change_epochs`.
fn rank(a: &GridScore, b: &GridScore) -> Ordering {
    b.accuracy
        .mean
        .total_cmp(&a.accuracy.mean)
        .then(a.config.quantile_loss.total_cmp(&b.config.quantile_loss))
        .then(a.config.quantile_prob.total_cmp(&b.config.quantile_prob))
        .then(a.config.record_length.cmp(&b.config.record_length))
        .then(a.config.not_change_epochs.cmp(&b.config.not_change_epochs))
}

/// Evaluate every grid point on `rows` of `ds` only, with `plan`'s folds as
/// internal validation splits. Training and validation both use `ds.labels`
/// (the possibly noisy labels); clean labels are never consulted.
pub fn grid_search(
    ds: &LabeledDataset,
    rows: &[usize],
    grid: &RafniGrid,
    base: &RafniConfig,
    plan: &CvPlan,
    setup: &TrainSetup,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(RafniError::Config("grid search needs at least one value per hyperparameter".into()));
    }
    let points = grid.points(base);
    for p in &points {
        p.validate(Some(setup.epochs))?;
    }
    let sub_labels: Vec<usize> = rows.iter().map(|&i| ds.labels[i]).collect();
    let folds: Vec<Fold> = make_folds(&sub_labels, plan)?
        .into_iter()
        .map(|f| Fold {
            repeat: f.repeat,
            fold: f.fold,
            train: f.train.iter().map(|&j| rows[j]).collect(),
            test: f.test.iter().map(|&j| rows[j]).collect(),
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..folds.len()).map(move |f| (p, f))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let fold = &folds[f];
            let train_labels: Vec<usize> = fold.train.iter().map(|&i| ds.labels[i]).collect();
            let val_labels: Vec<usize> = fold.test.iter().map(|&i| ds.labels[i]).collect();
            let seed = derive_seed(plan.seed, &[fold.repeat as u64, fold.fold as u64]);
            train_run(ds, &fold.train, &train_labels, &fold.test, &val_labels, Some(&points[p]), setup, seed)
                .map(|r| r.test_accuracy)
        })
        .collect::<Result<_>>()?;

    let table: Vec<GridScore> = points
        .into_iter()
        .enumerate()
        .map(|(p, config)| GridScore {
            config,
            accuracy: MeanStd::from_scores(scores[p * folds.len()..(p + 1) * folds.len()].to_vec()),
        })
        .collect();
    let best = table.iter().min_by(|a, b| rank(a, b)).expect("non-empty grid").config.clone();
    Ok(GridResult { best, table, folds_used: folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion_matches_table_shape() {
        let grid = RafniGrid {
            quantile_loss: vec![0.9, 0.92, 0.94, 0.96, 0.98, 0.99],
            quantile_prob: vec![0.9, 0.93, 0.95, 0.97, 0.99],
            record_length: vec![5, 8],
            not_change_epochs: vec![4, 7],
        };
        let pts = grid.points(&RafniConfig::default());
        assert_eq!(pts.len(), 120);
        assert_eq!(grid.len(), 120);
        assert!(pts.iter().all(|p| p.validate(Some(40)).is_ok()));
    }

    #[test]
    fn ties_prefer_lower_quantiles() {
        let mk = |ql: f64, qp: f64, mean: f64| GridScore {
            config: RafniConfig { quantile_loss: ql, quantile_prob: qp, ..Default::default() },
            accuracy: MeanStd::from_scores(vec![mean]),
        };
        let mut rows = [mk(0.99, 0.9, 0.8), mk(0.9, 0.95, 0.8), mk(0.9, 0.93, 0.8), mk(0.95, 0.9, 0.7)];
        rows.sort_by(rank);
        assert_eq!((rows[0].config.quantile_loss, rows[0].config.quantile_prob), (0.9, 0.93));
        assert_eq!(rows[3].accuracy.mean, 0.7);
    }
}

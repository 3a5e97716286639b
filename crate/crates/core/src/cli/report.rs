//! Output files: `summary.json`, `epochs.csv`, `actions.csv`, `audit.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::dataset::{fmt_f64, LabeledDataset};
use crate::engine::{ActionLogEntry, EpochReport};
use crate::error::{RafniError, Result};
use crate::eval::{EffectivenessReport, GridScore, MeanStd};
use crate::noise::NoiseReport;

/// Per-run accuracies and noise counts.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub repeat: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rafni_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: String,
    pub master_seed: u64,
    pub n_runs: usize,
    pub rafni: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<MeanStd>,
    pub runs: Vec<RunSummary>,
}

/// Epoch rows and actions of one run, tagged with its position.
pub struct RunTrace<'a> {
    pub repeat: usize,
    pub fold: usize,
    pub epochs: &'a [EpochReport],
    pub actions: &'a [ActionLogEntry],
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> RafniError {
    RafniError::Io(std::io::Error::other(e))
}

pub fn write_epochs(path: &Path, runs: &[RunTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "repeat",
        "fold",
        "epoch",
        "n_active",
        "n_removed_loss",
        "n_removed_record",
        "n_relabelled",
        "loss_threshold",
        "prob_threshold",
        "overlap",
        "mean_gap",
        "frozen",
        "started",
    ])
    .map_err(csv_err)?;
    for run in runs {
        for r in run.epochs {
            w.write_record([
                run.repeat.to_string(),
                run.fold.to_string(),
                r.epoch.to_string(),
                r.n_active.to_string(),
                r.n_removed_loss.to_string(),
                r.n_removed_record.to_string(),
                r.n_relabelled.to_string(),
                opt(r.loss_threshold),
                opt(r.prob_threshold),
                opt(r.overlap),
                opt(r.mean_gap),
                r.frozen.to_string(),
                r.started.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Instance ids are written as the dataset's id strings.
pub fn write_actions(path: &Path, ds: &LabeledDataset, runs: &[RunTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["repeat", "fold", "epoch", "instance_id", "action", "old_label", "new_label", "trigger_value"])
        .map_err(csv_err)?;
    for run in runs {
        for a in run.actions {
            w.write_record([
                run.repeat.to_string(),
                run.fold.to_string(),
                a.epoch.to_string(),
                ds.ids[a.instance_id].clone(),
                a.action.as_str().to_string(),
                a.old_label.to_string(),
                a.new_label.map(|l| l.to_string()).unwrap_or_default(),
                fmt_f64(a.trigger_value),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_audit(path: &Path, report: &EffectivenessReport) -> Result<()> {
    write_json(path, report)
}

pub fn write_grid_table(path: &Path, table: &[GridScore]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["quantile_loss", "quantile_prob", "record_length", "not_change_epochs", "mean_accuracy", "std_accuracy"])
        .map_err(csv_err)?;
    for s in table {
        w.write_record([
            fmt_f64(s.config.quantile_loss),
            fmt_f64(s.config.quantile_prob),
            s.config.record_length.to_string(),
            s.config.not_change_epochs.to_string(),
            fmt_f64(s.accuracy.mean),
            fmt_f64(s.accuracy.std),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

//! Command-line front end: `gen`, `inject`, `train`, `cv` and `grid`.
//!
//! Every subcommand reads an optional flat config file (`--config`), then
//! applies `--key value` overrides for any config key, then `--seed` and
//! `--out`. Failures exit with the error's code (2 config, 3 data,
//! 4 runtime) and leave a `FAILED` marker next to the outputs.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{gen_synthetic, load_dataset, save_dataset, LabeledDataset};
use crate::engine::RafniConfig;
use crate::error::{RafniError, Result};
use crate::eval::{grid_search, run_experiment, split_plan, ExperimentResult, ExperimentSpec, Protocol};
use crate::models::save_checkpoint;
use crate::noise::inject;
use crate::rng::derive_seed;

pub use config::{ConfigMap, KNOWN_KEYS};
use report::{RunSummary, RunTrace, Summary};

#[derive(Debug, Parser)]
#[command(name = "rafni", version, about = "Train classifiers on noisy labels with loss- and prediction-driven filtering and relabelling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Gaussian-blob dataset (`--out` is a file).
    Gen(CommonArgs),
    /// Inject label noise into a dataset; writes dataset.csv and noise_report.json.
    Inject(CommonArgs),
    /// One hold-out run, with checkpoints of the trained models.
    Train(CommonArgs),
    /// Repeated k-fold cross-validation.
    Cv(CommonArgs),
    /// Grid search on a hold-out training split, then a final run with the best point.
    Grid(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (output file for `gen`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any config key as `--key value` or `--key=value`, e.g. `--rafni.quantile_loss 0.92`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Inject(_) => "inject",
            Command::Train(_) => "train",
            Command::Cv(_) => "cv",
            Command::Grid(_) => "grid",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Gen(a) | Command::Inject(a) | Command::Train(a) | Command::Cv(a) | Command::Grid(a) => a,
        }
    }
}

/// Merge file, overrides and the explicit flags into one map.
pub fn resolve_config(args: &CommonArgs) -> Result<ConfigMap> {
    let mut overrides = args.overrides.clone();
    let mut config_path = args.config.clone();
    // `--config` given after an override lands in the trailing list
    if let Some(pos) = overrides.iter().position(|a| a == "--config" || a.starts_with("--config=")) {
        let arg = overrides.remove(pos);
        let path = match arg.strip_prefix("--config=") {
            Some(p) => p.to_string(),
            None if pos < overrides.len() => overrides.remove(pos),
            None => return Err(RafniError::Config("flag `--config` needs a value".into())),
        };
        config_path = Some(PathBuf::from(path));
    }
    let mut map = match config_path {
        Some(p) => ConfigMap::load(p)?,
        None => ConfigMap::default(),
    };
    map.apply_overrides(&overrides)?;
    if let Some(seed) = args.seed {
        map.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &args.out {
        map.set("out", &out.to_string_lossy())?;
    }
    Ok(map)
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let name = cli.command.name();
    let map = match resolve_config(cli.command.args()) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("rafni {name}: {e}");
            if let Some(out) = &cli.command.args().out {
                write_marker(&marker_path(&cli.command, out), &e);
            }
            return e.exit_code();
        }
    };
    let out = map.raw("out").map(PathBuf::from);
    let result = match &out {
        None => Err(RafniError::Config("missing required key `out` (use --out)".into())),
        Some(out) => {
            let marker = marker_path(&cli.command, out);
            let _ = std::fs::remove_file(&marker);
            execute(&cli.command, &map, out).inspect_err(|e| write_marker(&marker, e))
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rafni {name}: {e}");
            e.exit_code()
        }
    }
}

fn marker_path(cmd: &Command, out: &Path) -> PathBuf {
    match cmd {
        Command::Gen(_) => {
            let mut s = out.as_os_str().to_owned();
            s.push(".FAILED");
            PathBuf::from(s)
        }
        _ => out.join("FAILED"),
    }
}

fn write_marker(path: &Path, err: &RafniError) {
    if let Some(parent) = path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    if let Err(io) = std::fs::write(path, format!("{err}\n")) {
        log::error!("could not write failure marker {}: {io}", path.display());
    }
}

fn execute(cmd: &Command, map: &ConfigMap, out: &Path) -> Result<()> {
    let seed: u64 = map.get_or("seed", 0)?;
    match cmd {
        Command::Gen(_) => cmd_gen(map, seed, out),
        Command::Inject(_) => cmd_inject(map, seed, out),
        Command::Train(_) => cmd_train(map, seed, out),
        Command::Cv(_) => cmd_cv(map, seed, out),
        Command::Grid(_) => cmd_grid(map, seed, out),
    }
}

fn checked_rafni(map: &ConfigMap, epochs: usize) -> Result<RafniConfig> {
    let cfg = map.rafni()?;
    for w in cfg.validate(Some(epochs))? {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn cmd_gen(map: &ConfigMap, seed: u64, out: &Path) -> Result<()> {
    let ds = gen_synthetic(
        map.get_or("gen.n", 1000)?,
        map.get_or("gen.k", 3)?,
        map.get_or("gen.d", 2)?,
        map.get_or("gen.cluster_sep", 3.0)?,
        seed,
    )?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_dataset(&ds, out)?;
    log::info!("wrote {} instances to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_inject(map: &ConfigMap, seed: u64, out: &Path) -> Result<()> {
    let ds = load_dataset(map.data_path()?)?;
    let spec = map.noise()?.ok_or_else(|| RafniError::Config("inject needs noise.kind".into()))?;
    let reference = ds.reference_labels().to_vec();
    let (noisy, report) = inject(&ds.labels, ds.n_classes, &spec, None, seed)?;
    let noisy_ds = LabeledDataset::new(ds.ids.clone(), ds.features.clone(), noisy, Some(reference), ds.n_classes)?;
    std::fs::create_dir_all(out)?;
    save_dataset(&noisy_ds, out.join("dataset.csv"))?;
    report::write_json(&out.join("noise_report.json"), &report)?;
    log::info!("corrupted {} of {} labels", report.n_corrupted, ds.len());
    Ok(())
}

fn experiment_spec(map: &ConfigMap, seed: u64, protocol: Protocol, rafni: Option<RafniConfig>) -> Result<ExperimentSpec> {
    let setup = map.setup()?;
    let rafni = match rafni {
        Some(r) => r,
        None => checked_rafni(map, setup.epochs)?,
    };
    Ok(ExperimentSpec {
        rafni,
        noise: map.noise()?,
        setup,
        protocol,
        master_seed: seed,
        baseline: map.get_bool("baseline", true)?,
    })
}

fn cmd_train(map: &ConfigMap, seed: u64, out: &Path) -> Result<()> {
    let ds = load_dataset(map.data_path()?)?;
    let spec = experiment_spec(map, seed, map.holdout()?, None)?;
    let res = run_experiment(&ds, &spec)?;
    write_experiment(out, "train", &ds, seed, &res)?;
    if map.get_bool("train.checkpoint", true)? {
        let run = &res.runs[0];
        save_checkpoint(&run.rafni.model, out.join("model.ckpt"))?;
        if let Some(b) = &run.baseline {
            save_checkpoint(&b.model, out.join("baseline.ckpt"))?;
        }
    }
    Ok(())
}

fn cmd_cv(map: &ConfigMap, seed: u64, out: &Path) -> Result<()> {
    let ds = load_dataset(map.data_path()?)?;
    let spec = experiment_spec(map, seed, Protocol::CrossValidation(map.cv_plan(seed)?), None)?;
    let res = run_experiment(&ds, &spec)?;
    write_experiment(out, "cv", &ds, seed, &res)
}

/// Select hyperparameters on the training part of a hold-out split, using
/// only its (noisy) labels, then run both arms once with the winner.
fn cmd_grid(map: &ConfigMap, seed: u64, out: &Path) -> Result<()> {
    let ds = load_dataset(map.data_path()?)?;
    let setup = map.setup()?;
    let base = checked_rafni(map, setup.epochs)?;
    let grid = map.grid(&base)?;
    let protocol = map.holdout()?;
    let noise = map.noise()?;
    if let Some(n) = &noise {
        n.validate(ds.n_classes)?;
    }

    // same split and noise draw the final hold-out run will use
    let fold = split_plan(&ds, &protocol, seed)?.remove(0);
    let mut work = ds.clone();
    if let Some(n) = &noise {
        let given: Vec<usize> = fold.train.iter().map(|&i| ds.labels[i]).collect();
        let run_seed = derive_seed(seed, &[fold.repeat as u64, fold.fold as u64]);
        let (noisy, _) = inject(&given, ds.n_classes, n, None, derive_seed(run_seed, &[0]))?;
        for (&i, l) in fold.train.iter().zip(noisy) {
            work.labels[i] = l;
        }
    }
    let selected = grid_search(&work, &fold.train, &grid, &base, &map.grid_plan(seed)?, &setup)?;
    log::info!("grid search over {} points picked {:?}", grid.len(), selected.best);

    let spec = experiment_spec(map, seed, protocol, Some(selected.best.clone()))?;
    let res = run_experiment(&ds, &spec)?;
    write_experiment(out, "grid", &ds, seed, &res)?;
    report::write_grid_table(&out.join("grid.csv"), &selected.table)?;
    report::write_json(&out.join("best_config.json"), &selected.best)
}

/// Collect everything first, then write in a fixed order.
fn write_experiment(out: &Path, command: &str, ds: &LabeledDataset, seed: u64, res: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let summary = Summary {
        command: command.to_string(),
        master_seed: seed,
        n_runs: res.runs.len(),
        rafni: res.rafni.clone(),
        baseline: res.baseline.clone(),
        runs: res
            .runs
            .iter()
            .map(|r| RunSummary {
                repeat: r.repeat,
                fold: r.fold,
                n_train: r.train_rows.len(),
                n_test: r.test_rows.len(),
                rafni_accuracy: r.rafni.test_accuracy,
                baseline_accuracy: r.baseline.as_ref().map(|b| b.test_accuracy),
                noise: r.noise.clone(),
            })
            .collect(),
    };
    let traces: Vec<RunTrace> = res
        .runs
        .iter()
        .map(|r| RunTrace { repeat: r.repeat, fold: r.fold, epochs: &r.rafni.epoch_reports, actions: &r.rafni.actions })
        .collect();
    report::write_json(&out.join("summary.json"), &summary)?;
    report::write_epochs(&out.join("epochs.csv"), &traces)?;
    report::write_actions(&out.join("actions.csv"), ds, &traces)?;
    match &res.audit {
        Some(a) => report::write_audit(&out.join("audit.json"), a)?,
        None => log::warn!("no clean labels available; audit.json not written"),
    }
    Ok(())
}

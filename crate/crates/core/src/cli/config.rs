//! Flat `key = value` configuration with dotted keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::RafniConfig;
use crate::error::{RafniError, Result};
use crate::eval::{CvPlan, Protocol, RafniGrid, TrainSetup};
use crate::models::{ClassifierKind, OptimizerSpec};
use crate::noise::{GroupId, NoiseSpec};

/// Every key the CLI understands.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "baseline",
    "data.path",
    "noise.kind",
    "noise.rate",
    "noise.transitions",
    "noise.group_probs",
    "noise.group_targets",
    "rafni.quantile_loss",
    "rafni.quantile_prob",
    "rafni.record_length",
    "rafni.not_change_epochs",
    "rafni.overlap_start_threshold",
    "rafni.mean_gap_freeze",
    "model.kind",
    "model.hidden_units",
    "optim.learning_rate",
    "optim.decay",
    "optim.momentum",
    "optim.batch_size",
    "train.epochs",
    "train.checkpoint",
    "protocol.folds",
    "protocol.repeats",
    "protocol.stratified",
    "protocol.holdout_fraction",
    "gen.n",
    "gen.k",
    "gen.d",
    "gen.cluster_sep",
    "grid.quantile_loss",
    "grid.quantile_prob",
    "grid.record_length",
    "grid.not_change_epochs",
    "grid.folds",
    "grid.repeats",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RafniError::Config(format!("config line {}: expected `key = value`, got `{}`", n + 1, raw.trim())))?;
            map.set(key.trim(), value.trim())?;
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RafniError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(RafniError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply `--key value` / `--key=value` pairs on top of the file values.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let body = arg
                .strip_prefix("--")
                .ok_or_else(|| RafniError::Config(format!("unexpected argument `{arg}`; overrides look like `--key value`")))?;
            match body.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let v = it.next().ok_or_else(|| RafniError::Config(format!("flag `--{body}` needs a value")))?;
                    self.set(body, v)?
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| RafniError::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| RafniError::Config(format!("missing required key `{key}`")))
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(RafniError::Config(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| RafniError::Config(format!("`{key}`: cannot parse `{s}`"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn get_pairs<A: FromStr, B: FromStr>(&self, key: &str, sep: char) -> Result<Vec<(A, B)>> {
        let Some(v) = self.raw(key) else { return Ok(Vec::new()) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                let bad = || RafniError::Config(format!("`{key}`: expected `a{sep}b`, got `{item}`"));
                let (a, b) = item.split_once(sep).ok_or_else(bad)?;
                Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
            })
            .collect()
    }

    pub fn rafni(&self) -> Result<RafniConfig> {
        let d = RafniConfig::default();
        Ok(RafniConfig {
            quantile_loss: self.get_or("rafni.quantile_loss", d.quantile_loss)?,
            quantile_prob: self.get_or("rafni.quantile_prob", d.quantile_prob)?,
            record_length: self.get_or("rafni.record_length", d.record_length)?,
            not_change_epochs: self.get_or("rafni.not_change_epochs", d.not_change_epochs)?,
            overlap_start_threshold: self.get_or("rafni.overlap_start_threshold", d.overlap_start_threshold)?,
            mean_gap_freeze: self.get_or("rafni.mean_gap_freeze", d.mean_gap_freeze)?,
        })
    }

    /// `None` when `noise.kind` is absent or `none`.
    pub fn noise(&self) -> Result<Option<NoiseSpec>> {
        let rate = self.get_or("noise.rate", 0.0)?;
        match self.raw("noise.kind").unwrap_or("none") {
            "none" => Ok(None),
            "symmetric" => Ok(Some(NoiseSpec::symmetric(rate))),
            "asymmetric" => Ok(Some(NoiseSpec::asymmetric(rate, self.get_pairs("noise.transitions", '>')?))),
            "nnar" => {
                let probs: BTreeMap<GroupId, f64> = self.get_pairs("noise.group_probs", ':')?.into_iter().collect();
                let targets: BTreeMap<GroupId, usize> = self.get_pairs("noise.group_targets", ':')?.into_iter().collect();
                Ok(Some(NoiseSpec::nnar(probs, targets)))
            }
            other => Err(RafniError::Config(format!(
                "noise.kind = `{other}`: expected none, symmetric, asymmetric or nnar"
            ))),
        }
    }

    pub fn setup(&self) -> Result<TrainSetup> {
        let d = TrainSetup::default();
        let o = OptimizerSpec::default();
        let kind = match self.raw("model.kind").unwrap_or("softmax") {
            "softmax" => ClassifierKind::SoftmaxRegression,
            "mlp" => ClassifierKind::Mlp,
            other => return Err(RafniError::Config(format!("model.kind = `{other}`: expected softmax or mlp"))),
        };
        let setup = TrainSetup {
            kind,
            hidden_units: self.get_or("model.hidden_units", d.hidden_units)?,
            optimizer: OptimizerSpec {
                learning_rate: self.get_or("optim.learning_rate", o.learning_rate)?,
                decay: self.get_or("optim.decay", o.decay)?,
                momentum: self.get_or("optim.momentum", o.momentum)?,
                batch_size: self.get_or("optim.batch_size", o.batch_size)?,
            },
            epochs: self.get_or("train.epochs", d.epochs)?,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn cv_plan(&self, seed: u64) -> Result<CvPlan> {
        let d = CvPlan::default();
        let plan = CvPlan {
            k: self.get_or("protocol.folds", d.k)?,
            repeats: self.get_or("protocol.repeats", d.repeats)?,
            stratified: self.get_bool("protocol.stratified", d.stratified)?,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn holdout(&self) -> Result<Protocol> {
        let fraction: f64 = self.get_or("protocol.holdout_fraction", 0.2)?;
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(RafniError::Config(format!("protocol.holdout_fraction = {fraction} must lie in (0, 1)")));
        }
        Ok(Protocol::HoldOut { fraction, stratified: self.get_bool("protocol.stratified", true)? })
    }

    /// Grid values default to the single value of the base config.
    pub fn grid(&self, base: &RafniConfig) -> Result<RafniGrid> {
        Ok(RafniGrid {
            quantile_loss: self.get_list("grid.quantile_loss")?.unwrap_or(vec![base.quantile_loss]),
            quantile_prob: self.get_list("grid.quantile_prob")?.unwrap_or(vec![base.quantile_prob]),
            record_length: self.get_list("grid.record_length")?.unwrap_or(vec![base.record_length]),
            not_change_epochs: self.get_list("grid.not_change_epochs")?.unwrap_or(vec![base.not_change_epochs]),
        })
    }

    pub fn grid_plan(&self, seed: u64) -> Result<CvPlan> {
        let plan = CvPlan {
            k: self.get_or("grid.folds", 5)?,
            repeats: self.get_or("grid.repeats", 1)?,
            stratified: self.get_bool("protocol.stratified", true)?,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn data_path(&self) -> Result<PathBuf> {
        self.require::<String>("data.path").map(PathBuf::from)
    }
}

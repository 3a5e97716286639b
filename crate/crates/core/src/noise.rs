//! Label-noise injection: symmetric (class-independent), asymmetric
//! (class-to-class transitions) and NNAR (per-group flip probabilities).
//!
//! Symmetric and asymmetric injectors corrupt an exact `floor(rate * n_c)`
//! instances per affected class; NNAR flips each instance independently.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RafniError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    Nnar,
}

pub type GroupId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub transitions: Vec<(usize, usize)>,
    pub group_flip_prob: BTreeMap<GroupId, f64>,
    pub group_target: BTreeMap<GroupId, usize>,
}

impl NoiseSpec {
    pub fn symmetric(rate: f64) -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            rate,
            transitions: Vec::new(),
            group_flip_prob: BTreeMap::new(),
            group_target: BTreeMap::new(),
        }
    }

    pub fn asymmetric(rate: f64, transitions: Vec<(usize, usize)>) -> Self {
        Self { kind: NoiseKind::Asymmetric, transitions, ..Self::symmetric(rate) }
    }

    pub fn nnar(group_flip_prob: BTreeMap<GroupId, f64>, group_target: BTreeMap<GroupId, usize>) -> Self {
        Self { kind: NoiseKind::Nnar, group_flip_prob, group_target, ..Self::symmetric(0.0) }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        check_rate(self.rate)?;
        match self.kind {
            NoiseKind::Symmetric => Ok(()),
            NoiseKind::Asymmetric => validate_transitions(&self.transitions, n_classes),
            NoiseKind::Nnar => {
                for (&g, &p) in &self.group_flip_prob {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(RafniError::Config(format!(
                            "group {g} flip probability {p} outside [0, 1]"
                        )));
                    }
                }
                for &t in self.group_target.values() {
                    if t >= n_classes {
                        return Err(RafniError::UnknownClass { class: t, n_classes });
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub n_corrupted: usize,
    pub realized_rate: f64,
    /// Corruptions keyed by original class.
    pub per_class_corrupted: BTreeMap<usize, usize>,
    /// Indices of corrupted instances, ascending.
    #[serde(skip)]
    pub corrupted: Vec<usize>,
}

impl NoiseReport {
    /// Report describing the differences between two label vectors.
    pub fn from_diff(original: &[usize], noisy: &[usize]) -> Result<Self> {
        if original.len() != noisy.len() {
            return Err(RafniError::Shape(format!(
                "{} original vs {} noisy labels",
                original.len(),
                noisy.len()
            )));
        }
        let corrupted: Vec<usize> = (0..original.len()).filter(|&i| original[i] != noisy[i]).collect();
        let mut per_class = BTreeMap::new();
        for &i in &corrupted {
            *per_class.entry(original[i]).or_insert(0) += 1;
        }
        let n = original.len();
        Ok(Self {
            n_corrupted: corrupted.len(),
            realized_rate: if n == 0 { 0.0 } else { corrupted.len() as f64 / n as f64 },
            per_class_corrupted: per_class,
            corrupted,
        })
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(RafniError::InvalidRate(rate));
    }
    Ok(())
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    if k < 2 {
        return Err(RafniError::InvalidArity(k));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(RafniError::UnknownClass { class: bad, n_classes: k });
    }
    Ok(())
}

fn validate_transitions(transitions: &[(usize, usize)], k: usize) -> Result<()> {
    let mut sources = BTreeSet::new();
    for &(s, t) in transitions {
        for c in [s, t] {
            if c >= k {
                return Err(RafniError::UnknownClass { class: c, n_classes: k });
            }
        }
        if s == t {
            return Err(RafniError::InvalidTransitions(format!("self-transition {s}->{t}")));
        }
        if !sources.insert(s) {
            return Err(RafniError::InvalidTransitions(format!("class {s} appears twice as a source")));
        }
    }
    Ok(())
}

/// `floor(rate * n)`, tolerant of decimal rates like 0.29 landing a hair
/// below the integer in binary.
fn corruption_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64) + 1e-9).floor() as usize
}

fn members_by_class(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Corrupt exactly `floor(rate * n_c)` instances of every class `c`, each to a
/// class drawn uniformly from the other `k - 1`.
pub fn inject_symmetric(labels: &[usize], k: usize, rate: f64, seed: u64) -> Result<(Vec<usize>, NoiseReport)> {
    check_labels(labels, k)?;
    check_rate(rate)?;
    let mut rng = rng_from_seed(seed);
    let mut noisy = labels.to_vec();
    for (class, mut members) in members_by_class(labels, k).into_iter().enumerate() {
        let m = corruption_count(rate, members.len());
        members.shuffle(&mut rng);
        for &i in &members[..m] {
            // draw from [0, k-1) and skip over the original class
            let r = rng.random_range(0..k - 1);
            noisy[i] = if r >= class { r + 1 } else { r };
        }
    }
    let report = NoiseReport::from_diff(labels, &noisy)?;
    Ok((noisy, report))
}

/// For every `(source, target)` pair relabel exactly `floor(rate * n_source)`
/// instances of `source` as `target`. Classes that are not a source are left
/// untouched.
pub fn inject_asymmetric(
    labels: &[usize],
    k: usize,
    rate: f64,
    transitions: &[(usize, usize)],
    seed: u64,
) -> Result<(Vec<usize>, NoiseReport)> {
    check_labels(labels, k)?;
    check_rate(rate)?;
    validate_transitions(transitions, k)?;
    let mut rng = rng_from_seed(seed);
    let by_class = members_by_class(labels, k);
    let mut noisy = labels.to_vec();
    for &(source, target) in transitions {
        let mut members = by_class[source].clone();
        let m = corruption_count(rate, members.len());
        members.shuffle(&mut rng);
        for &i in &members[..m] {
            noisy[i] = target;
        }
    }
    let report = NoiseReport::from_diff(labels, &noisy)?;
    Ok((noisy, report))
}

/// Flip each instance to its group's target class with the group's
/// probability. Instances whose label already equals the target are left
/// as is. One uniform draw is consumed per instance regardless of outcome.
pub fn inject_nnar(
    labels: &[usize],
    group_of: &[GroupId],
    group_flip_prob: &BTreeMap<GroupId, f64>,
    group_target: &BTreeMap<GroupId, usize>,
    seed: u64,
) -> Result<(Vec<usize>, NoiseReport)> {
    if group_of.len() != labels.len() {
        return Err(RafniError::IncompleteGrouping(format!(
            "{} group assignments for {} instances",
            group_of.len(),
            labels.len()
        )));
    }
    for (&g, &p) in group_flip_prob {
        if !(0.0..=1.0).contains(&p) {
            return Err(RafniError::Config(format!("group {g} flip probability {p} outside [0, 1]")));
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut noisy = labels.to_vec();
    for (i, &g) in group_of.iter().enumerate() {
        let p = *group_flip_prob
            .get(&g)
            .ok_or_else(|| RafniError::IncompleteGrouping(format!("group {g} has no flip probability")))?;
        let target = *group_target
            .get(&g)
            .ok_or_else(|| RafniError::IncompleteGrouping(format!("group {g} has no target class")))?;
        let u: f64 = rng.random();
        if u < p {
            noisy[i] = target;
        }
    }
    let report = NoiseReport::from_diff(labels, &noisy)?;
    Ok((noisy, report))
}

/// Dispatch on `spec.kind`. NNAR needs `group_of`; it defaults to the
/// instance's own class when `None`.
pub fn inject(
    labels: &[usize],
    k: usize,
    spec: &NoiseSpec,
    group_of: Option<&[GroupId]>,
    seed: u64,
) -> Result<(Vec<usize>, NoiseReport)> {
    spec.validate(k)?;
    match spec.kind {
        NoiseKind::Symmetric => inject_symmetric(labels, k, spec.rate, seed),
        NoiseKind::Asymmetric => inject_asymmetric(labels, k, spec.rate, &spec.transitions, seed),
        NoiseKind::Nnar => {
            check_labels(labels, k)?;
            let by_class: Vec<GroupId>;
            let groups = match group_of {
                Some(g) => g,
                None => {
                    by_class = labels.iter().map(|&l| l as GroupId).collect();
                    &by_class
                }
            };
            inject_nnar(labels, groups, &spec.group_flip_prob, &spec.group_target, seed)
        }
    }
}

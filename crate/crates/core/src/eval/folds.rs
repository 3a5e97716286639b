use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{RafniError, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub repeats: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self { k: 5, repeats: 5, stratified: true, seed: 0 }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(RafniError::Config(format!("protocol.folds = {} must be at least 2", self.k)));
        }
        if self.repeats == 0 {
            return Err(RafniError::Config("protocol.repeats must be at least 1".into()));
        }
        Ok(())
    }
}

/// One train/test split. Indices are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `repeats x k` folds over `0..labels.len()`. Within a repeat the test
/// sets partition the indices. With stratification every class is dealt
/// round-robin across folds, continuing where the previous class stopped,
/// so per-fold class counts differ by at most one.
pub fn make_folds(labels: &[usize], plan: &CvPlan) -> Result<Vec<Fold>> {
    plan.validate()?;
    let n = labels.len();
    if n < plan.k {
        return Err(RafniError::Config(format!("{} instances cannot fill {} folds", n, plan.k)));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(plan.k * plan.repeats);
    for repeat in 0..plan.repeats {
        let mut rng = rng_from_seed(derive_seed(plan.seed, &[repeat as u64]));
        let mut assign = vec![0usize; n];
        if plan.stratified {
            let mut by_class = vec![Vec::new(); n_classes];
            for (i, &l) in labels.iter().enumerate() {
                by_class[l].push(i);
            }
            let mut next = 0;
            for (class, members) in by_class.iter_mut().enumerate() {
                if members.is_empty() {
                    continue;
                }
                if members.len() < plan.k {
                    return Err(RafniError::StratificationInfeasible {
                        class,
                        count: members.len(),
                        folds: plan.k,
                    });
                }
                members.shuffle(&mut rng);
                for &i in members.iter() {
                    assign[i] = next;
                    next = (next + 1) % plan.k;
                }
            }
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (pos, &i) in order.iter().enumerate() {
                assign[i] = pos % plan.k;
            }
        }
        for fold in 0..plan.k {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assign[i] == fold);
            out.push(Fold { repeat, fold, train, test });
        }
    }
    Ok(out)
}

/// Single stratified (or plain) split holding out `fraction` of the data.
pub fn holdout_split(labels: &[usize], fraction: f64, stratified: bool, seed: u64) -> Result<Fold> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(RafniError::Config(format!("protocol.holdout_fraction = {fraction} is outside the allowed range (0, 1)")));
    }
    let n = labels.len();
    let mut rng = rng_from_seed(seed);
    let mut is_test = vec![false; n];
    let groups: Vec<Vec<usize>> = if stratified {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    } else {
        vec![(0..n).collect()]
    };
    for mut members in groups {
        members.shuffle(&mut rng);
        let m = (fraction * members.len() as f64).round() as usize;
        for &i in &members[..m] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    if train.is_empty() || test.is_empty() {
        return Err(RafniError::Config(format!("hold-out fraction {fraction} leaves an empty split")));
    }
    Ok(Fold { repeat: 0, fold: 0, train, test })
}

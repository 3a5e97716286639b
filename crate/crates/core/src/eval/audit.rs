use serde::{Deserialize, Serialize};

use crate::engine::{Action, ActionLogEntry};
use crate::error::{RafniError, Result};

/// How many removals hit noisy instances and how many relabels restored
/// the clean class. Percentages are fractions in `[0, 1]`, 0 when the
/// corresponding total is 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessReport {
    pub pct_good_removals: f64,
    pub total_removals: usize,
    pub pct_good_changes: f64,
    pub pct_noisy_changes: f64,
    pub total_changes: usize,
    pub good_removals: usize,
    pub good_changes: usize,
    pub noisy_changes: usize,
}

impl EffectivenessReport {
    fn from_counts(good_removals: usize, total_removals: usize, good_changes: usize, noisy_changes: usize, total_changes: usize) -> Self {
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            pct_good_removals: frac(good_removals, total_removals),
            total_removals,
            pct_good_changes: frac(good_changes, total_changes),
            pct_noisy_changes: frac(noisy_changes, total_changes),
            total_changes,
            good_removals,
            good_changes,
            noisy_changes,
        }
    }

    /// Pool the raw counts of several runs.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a EffectivenessReport>) -> Self {
        let mut c = [0usize; 5];
        for r in reports {
            c[0] += r.good_removals;
            c[1] += r.total_removals;
            c[2] += r.good_changes;
            c[3] += r.noisy_changes;
            c[4] += r.total_changes;
        }
        Self::from_counts(c[0], c[1], c[2], c[3], c[4])
    }
}

/// Score an action log against hidden clean labels. `clean` and `noisy`
/// (the labels the trainer started from) are indexed by instance id.
///
/// A removal is good when the instance was noisy. A relabel of a noisy
/// instance is a good change when it lands on the clean class and a noisy
/// change when it lands on some third class.
pub fn audit(log: &[ActionLogEntry], clean: &[usize], noisy: &[usize]) -> Result<EffectivenessReport> {
    let (mut good_rm, mut total_rm, mut good_ch, mut noisy_ch, mut total_ch) = (0, 0, 0, 0, 0);
    for e in log {
        let id = e.instance_id;
        let (&c, &n) = clean
            .get(id)
            .zip(noisy.get(id))
            .ok_or(RafniError::AuditUnavailable(id))?;
        let was_noisy = n != c;
        match e.action {
            Action::RemovedByLoss | Action::RemovedByRecord => {
                total_rm += 1;
                good_rm += usize::from(was_noisy);
            }
            Action::Relabelled => {
                total_ch += 1;
                let new = e.new_label.unwrap_or(e.old_label);
                if was_noisy {
                    if new == c {
                        good_ch += 1;
                    } else if new != e.old_label {
                        noisy_ch += 1;
                    }
                }
            }
        }
    }
    Ok(EffectivenessReport::from_counts(good_rm, total_rm, good_ch, noisy_ch, total_ch))
}

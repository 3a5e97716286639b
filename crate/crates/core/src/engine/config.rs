use serde::{Deserialize, Serialize};

use crate::error::{RafniError, Result};

/// Range in which the two quantile orders are normally tuned.
pub const RECOMMENDED_QUANTILE_RANGE: (f64, f64) = (0.6, 0.99);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RafniConfig {
    /// Quantile order of previous-epoch losses used as the removal cutoff.
    pub quantile_loss: f64,
    /// Quantile order of previous-epoch max-probabilities of misclassified
    /// instances used as the relabel cutoff.
    pub quantile_prob: f64,
    pub record_length: usize,
    pub not_change_epochs: usize,
    /// The mechanisms switch on once the GMM overlap drops below this.
    pub overlap_start_threshold: f64,
    /// Thresholds stop updating once `μ_noisy - μ_clean` drops below this.
    pub mean_gap_freeze: f64,
}

impl Default for RafniConfig {
    fn default() -> Self {
        Self {
            quantile_loss: 0.95,
            quantile_prob: 0.95,
            record_length: 5,
            not_change_epochs: 4,
            overlap_start_threshold: 0.15,
            mean_gap_freeze: 0.3,
        }
    }
}

impl RafniConfig {
    /// Check every field. `total_epochs`, when known, bounds `record_length`
    /// and `not_change_epochs`. Returns advisory warnings for values that are
    /// legal but outside the usual tuning range.
    pub fn validate(&self, total_epochs: Option<usize>) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        for (name, q) in [("quantile_loss", self.quantile_loss), ("quantile_prob", self.quantile_prob)] {
            if !(0.0..=1.0).contains(&q) {
                return Err(RafniError::Config(format!("rafni.{name} = {q} is outside the allowed range [0, 1]")));
            }
            let (lo, hi) = RECOMMENDED_QUANTILE_RANGE;
            if !(lo..=hi).contains(&q) {
                warnings.push(format!("rafni.{name} = {q} is outside the recommended range [{lo}, {hi}]"));
            }
        }
        let max = total_epochs.unwrap_or(usize::MAX);
        if self.record_length < 2 || self.record_length > max {
            return Err(RafniError::Config(format!(
                "rafni.record_length = {} is outside the allowed range [2, {}]",
                self.record_length,
                fmt_bound(total_epochs)
            )));
        }
        if self.not_change_epochs < 1 || self.not_change_epochs > max {
            return Err(RafniError::Config(format!(
                "rafni.not_change_epochs = {} is outside the allowed range [1, {}]",
                self.not_change_epochs,
                fmt_bound(total_epochs)
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap_start_threshold) {
            return Err(RafniError::Config(format!(
                "rafni.overlap_start_threshold = {} is outside the allowed range [0, 1]",
                self.overlap_start_threshold
            )));
        }
        if !(self.mean_gap_freeze.is_finite() && self.mean_gap_freeze >= 0.0) {
            return Err(RafniError::Config(format!(
                "rafni.mean_gap_freeze = {} is outside the allowed range [0, inf)",
                self.mean_gap_freeze
            )));
        }
        Ok(warnings)
    }
}

fn fmt_bound(total_epochs: Option<usize>) -> String {
    total_epochs.map_or_else(|| "epochs".to_string(), |m| m.to_string())
}

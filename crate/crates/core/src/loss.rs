//! Multi-label targets and the per-class binary cross-entropy loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::util::sigmoid;

/// Per-class target probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVector(pub Vec<f64>);

impl TargetVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn hard_targets(labels: LabelSet, num_classes: usize) -> TargetVector {
    TargetVector((0..num_classes).map(|c| if labels.contains(c) { 1.0 } else { 0.0 }).collect())
}

/// Label smoothing for multi-label targets.
///
/// Positives get `p`; each of the `T - m` negatives gets `(1 - p) * m / (T - m)`
/// so that the total mass stays `m`. `p = 1` gives the hard targets.
pub fn smooth_targets(labels: LabelSet, p: f64, num_classes: usize) -> Result<TargetVector> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::InvalidSmoothing(format!("p must be in (0.5, 1], got {p}")));
    }
    if !labels.fits(num_classes) {
        return Err(Error::invalid(format!("labels {labels} exceed class count {num_classes}")));
    }
    let m = labels.len();
    if m == 0 || m == num_classes {
        return Err(Error::InvalidSmoothing(format!(
            "label count must be in (0, {num_classes}), got {m}"
        )));
    }
    if p == 1.0 {
        return Ok(hard_targets(labels, num_classes));
    }
    let negative = (1.0 - p) * m as f64 / (num_classes - m) as f64;
    Ok(TargetVector((0..num_classes).map(|c| if labels.contains(c) { p } else { negative }).collect()))
}

/// Mean per-class binary cross-entropy on sigmoid outputs, in the stable
/// form `max(z, 0) - z t + ln(1 + e^-|z|)`.
pub fn bce_loss(logits: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(logits.len(), target.len());
    if logits.is_empty() {
        return 0.0;
    }
    let sum: f64 = logits
        .iter()
        .zip(target)
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    sum / logits.len() as f64
}

/// Gradient of [`bce_loss`] with respect to the logits: `(sigmoid(z) - t) / T`.
pub fn bce_grad(logits: &[f64], target: &[f64]) -> Vec<f64> {
    let n = logits.len() as f64;
    logits.iter().zip(target).map(|(&z, &t)| (sigmoid(z) - t) / n).collect()
}

pub fn bce_loss_and_grad(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    (bce_loss(logits, target), bce_grad(logits, target))
}

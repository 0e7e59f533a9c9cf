//! Mini-batch training with a two-phase learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::loss::{bce_grad, bce_loss, TargetVector};
use crate::sampling::WeightedLoader;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: TargetVector,
}

impl Example {
    pub fn new(features: Vec<f64>, target: TargetVector) -> Self {
        Self { features, target }
    }
}

/// Phase 1 runs at a constant rate; phase 2 decays linearly from
/// `lr_phase2_max` to `lr_phase2_min` across its epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub lr_phase1: f64,
    pub lr_phase2_max: f64,
    pub lr_phase2_min: f64,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            phase1_epochs: 6,
            phase2_epochs: 6,
            lr_phase1: 1e-2,
            lr_phase2_max: 1e-2 / 4.0,
            lr_phase2_min: 1e-2 / 400.0,
            batch_size: 64,
        }
    }
}

impl TrainSchedule {
    /// The longer 12 + 12 epoch schedule.
    pub fn paper_scale() -> Self {
        Self { phase1_epochs: 12, phase2_epochs: 12, ..Self::default() }
    }

    /// A short constant-rate run, used for fine-tuning.
    pub fn constant(epochs: usize, lr: f64, batch_size: usize) -> Self {
        Self { phase1_epochs: epochs, phase2_epochs: 0, lr_phase1: lr, lr_phase2_max: lr, lr_phase2_min: lr, batch_size }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [
            ("lr_phase1", self.lr_phase1),
            ("lr_phase2_max", self.lr_phase2_max),
            ("lr_phase2_min", self.lr_phase2_min),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.lr_phase2_min > self.lr_phase2_max {
            return Err(Error::invalid("lr_phase2_min must not exceed lr_phase2_max"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.phase1_epochs + self.phase2_epochs
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.phase1_epochs {
            return self.lr_phase1;
        }
        let k = epoch - self.phase1_epochs;
        if self.phase2_epochs <= 1 {
            return self.lr_phase2_max;
        }
        let frac = k as f64 / (self.phase2_epochs - 1) as f64;
        self.lr_phase2_max + (self.lr_phase2_min - self.lr_phase2_max) * frac
    }
}

/// Mean training loss per epoch.
pub type LossTrace = Vec<f64>;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

/// Trains `learner` in place on `data`.
///
/// Without a loader every epoch visits a fresh permutation of the data; with
/// one, each epoch draws `ceil(len / batch_size)` weighted batches from it.
pub fn train<L: Learner>(
    learner: &mut L,
    data: &[Example],
    schedule: &TrainSchedule,
    loader: Option<&WeightedLoader>,
    seed: u64,
) -> Result<LossTrace> {
    train_scaled(learner, data, schedule, loader, seed, 1.0)
}

/// As [`train`], with the loss multiplied by `loss_scale`; a zero scale
/// leaves the learner untouched.
pub fn train_scaled<L: Learner>(
    learner: &mut L,
    data: &[Example],
    schedule: &TrainSchedule,
    loader: Option<&WeightedLoader>,
    seed: u64,
    loss_scale: f64,
) -> Result<LossTrace> {
    schedule.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let t = learner.num_classes();
    for ex in data {
        if ex.features.len() != learner.input_dim() {
            return Err(Error::DimensionMismatch { expected: learner.input_dim(), actual: ex.features.len() });
        }
        if ex.target.len() != t {
            return Err(Error::DimensionMismatch { expected: t, actual: ex.target.len() });
        }
    }
    if let Some(l) = loader {
        if l.len() != data.len() {
            return Err(Error::DimensionMismatch { expected: data.len(), actual: l.len() });
        }
    }
    let mut loader = loader.cloned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batches_per_epoch = data.len().div_ceil(schedule.batch_size);

    let mut adam = Adam::new(learner.params().len());
    let mut grad = vec![0.0; learner.params().len()];
    let mut logits = vec![0.0; t];
    let mut trace = Vec::with_capacity(schedule.total_epochs());

    for epoch in 0..schedule.total_epochs() {
        let lr = schedule.lr_at(epoch);
        if loader.is_none() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0usize;
        for b in 0..batches_per_epoch {
            let batch: Vec<usize> = match loader.as_mut() {
                Some(l) => l.draw_indices(),
                None => order[b * schedule.batch_size..((b + 1) * schedule.batch_size).min(data.len())].to_vec(),
            };
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv = loss_scale / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in &batch {
                let ex = &data[i];
                learner.forward(&ex.features, &mut logits);
                batch_loss += bce_loss(&logits, ex.target.as_slice());
                let mut dl = bce_grad(&logits, ex.target.as_slice());
                dl.iter_mut().for_each(|g| *g *= inv);
                learner.backward(&ex.features, &dl, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, batch {b} (lr {lr}, batch size {})",
                    batch.len()
                )));
            }
            epoch_loss += batch_loss;
            epoch_count += batch.len();
            if loss_scale != 0.0 {
                adam.update(learner.params_mut(), &grad, lr);
            }
            if !learner.params_finite() {
                return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}, batch {b}")));
            }
        }
        trace.push(epoch_loss / epoch_count as f64);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{LearnerConfig, Mlp};
    use crate::loss::hard_targets;
    use crate::labels::LabelSet;

    fn toy() -> Vec<Example> {
        (0..40)
            .map(|i| {
                let on = i % 2 == 0;
                let x = if on { vec![1.0, 0.2 * (i % 5) as f64] } else { vec![-1.0, 0.1 * (i % 3) as f64] };
                let labels = if on { LabelSet::from_ids(&[0], 2).unwrap() } else { LabelSet::from_ids(&[1], 2).unwrap() };
                Example::new(x, hard_targets(labels, 2))
            })
            .collect()
    }

    #[test]
    fn schedule_rates() {
        let s = TrainSchedule::default();
        assert_eq!(s.lr_at(0), 1e-2);
        assert_eq!(s.lr_at(5), 1e-2);
        assert_eq!(s.lr_at(6), 2.5e-3);
        assert!((s.lr_at(11) - 2.5e-5).abs() < 1e-18);
        assert!(s.lr_at(8) < s.lr_at(7));
        let bad = TrainSchedule { lr_phase2_min: 1.0, ..s };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epochs_leave_learner_unchanged() {
        let mut m = Mlp::new(LearnerConfig::new(3, 1), 2, 2).unwrap();
        let before = m.clone();
        let s = TrainSchedule { phase1_epochs: 0, phase2_epochs: 0, ..Default::default() };
        let trace = train(&mut m, &toy(), &s, None, 0).unwrap();
        assert!(trace.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let s = TrainSchedule { batch_size: 8, ..Default::default() };
        let mut a = Mlp::new(LearnerConfig::new(4, 2), 2, 2).unwrap();
        let mut b = a.clone();
        let ta = train(&mut a, &toy(), &s, None, 5).unwrap();
        let tb = train(&mut b, &toy(), &s, None, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(ta.last().unwrap() < &ta[0]);
    }

    #[test]
    fn rejects_empty_and_mismatched_data() {
        let mut m = Mlp::new(LearnerConfig::new(0, 1), 2, 2).unwrap();
        let s = TrainSchedule::default();
        assert!(train(&mut m, &[], &s, None, 0).is_err());
        let bad = vec![Example::new(vec![1.0], hard_targets(LabelSet::empty(), 2))];
        assert!(train(&mut m, &bad, &s, None, 0).is_err());
        let loader = WeightedLoader::uniform(3, 4, 0).unwrap();
        assert!(train(&mut m, &toy(), &s, Some(&loader), 0).is_err());
    }

    #[test]
    fn nan_input_aborts() {
        let mut m = Mlp::new(LearnerConfig::new(0, 1), 2, 2).unwrap();
        let mut data = toy();
        data[3].features[0] = f64::NAN;
        let err = train(&mut m, &data, &TrainSchedule::default(), None, 0).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }
}

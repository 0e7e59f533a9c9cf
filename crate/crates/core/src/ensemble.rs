//! Weighted ensembles and their aggregation rules.
//!
//! * [`Ensemble::ensemble_loss`]: weighted sum of member losses, the training
//!   and scoring objective.
//! * [`Ensemble::max_prob_output`]: per-class maximum member probability,
//!   shown to annotators as the suggestion signal.
//! * [`Ensemble::mean_logit_sigmoid`]: sigmoid of the mean member logits,
//!   used for pseudo labels and final decisions.
//! * [`top3_decision`]: the three most probable classes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::learner::{decode_checkpoint, encode_checkpoint, Learner, LearnerConfig, Mlp};
use crate::loss::bce_loss;
use crate::sampling::WeightedLoader;
use crate::train::{train_scaled, Example, LossTrace, TrainSchedule};
use crate::util::{derive_seed, sigmoid};

/// Hidden widths of the default four members.
pub const DEFAULT_MEMBER_WIDTHS: [usize; 4] = [0, 16, 32, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble<L = Mlp> {
    members: Vec<L>,
    weights: Vec<f64>,
}

/// Learner configs for the default heterogeneous ensemble.
pub fn default_member_configs(seed: u64) -> Vec<LearnerConfig> {
    DEFAULT_MEMBER_WIDTHS
        .iter()
        .enumerate()
        .map(|(i, &h)| LearnerConfig::new(h, derive_seed(seed, i as u64)))
        .collect()
}

impl Ensemble<Mlp> {
    /// Fresh members with equal weights `1 / M`.
    pub fn from_configs(configs: &[LearnerConfig], input_dim: usize, num_classes: usize) -> Result<Self> {
        let members = configs
            .iter()
            .map(|c| Mlp::new(c.clone(), input_dim, num_classes))
            .collect::<Result<Vec<_>>>()?;
        let w = 1.0 / members.len().max(1) as f64;
        let weights = vec![w; members.len()];
        Ensemble::new(members, weights)
    }

    pub fn checkpoint_string(&self, metadata: &BTreeMap<String, String>) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            metadata: &'a BTreeMap<String, String>,
            weights: &'a [f64],
            members: Vec<String>,
        }
        let payload = Payload {
            metadata,
            weights: &self.weights,
            members: self.members.iter().map(|m| m.checkpoint_string()).collect(),
        };
        encode_checkpoint(ENSEMBLE_MAGIC, &serde_json::to_string(&payload).expect("ensemble serializes"))
    }

    pub fn from_checkpoint_str(text: &str) -> Result<(Self, BTreeMap<String, String>)> {
        #[derive(Deserialize)]
        struct Payload {
            metadata: BTreeMap<String, String>,
            weights: Vec<f64>,
            members: Vec<String>,
        }
        let payload: Payload = serde_json::from_str(decode_checkpoint(ENSEMBLE_MAGIC, text)?)?;
        let members = payload
            .members
            .iter()
            .map(|m| Mlp::from_checkpoint_str(m))
            .collect::<Result<Vec<_>>>()?;
        Ok((Ensemble::new(members, payload.weights)?, payload.metadata))
    }

    pub fn save_checkpoint(&self, path: &Path, metadata: &BTreeMap<String, String>) -> Result<()> {
        fs::write(path, self.checkpoint_string(metadata))?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        Self::from_checkpoint_str(&fs::read_to_string(path)?)
    }
}

const ENSEMBLE_MAGIC: &str = "labelfix-ensemble v1";

impl<L: Learner> Ensemble<L> {
    pub fn new(members: Vec<L>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        if members.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("ensemble weights must be finite and nonnegative"));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::invalid("at least one ensemble weight must be positive"));
        }
        let (d, t) = (members[0].input_dim(), members[0].num_classes());
        if members.iter().any(|m| m.input_dim() != d || m.num_classes() != t) {
            return Err(Error::invalid("ensemble members disagree on input or class dimension"));
        }
        Ok(Self { members, weights })
    }

    pub fn members(&self) -> &[L] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [L] {
        &mut self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        let replaced = Ensemble::new(self.members.clone(), weights)?;
        self.weights = replaced.weights;
        Ok(())
    }

    pub fn member_logits(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.members.iter().map(|m| m.predict_logits(x)).collect()
    }

    /// `sum_i w_i * bce(M_i(x), target)`.
    pub fn ensemble_loss(&self, x: &[f64], target: &[f64]) -> Result<f64> {
        if target.len() != self.num_classes() {
            return Err(Error::DimensionMismatch { expected: self.num_classes(), actual: target.len() });
        }
        let logits = self.member_logits(x)?;
        Ok(logits.iter().zip(&self.weights).map(|(z, w)| w * bce_loss(z, target)).sum())
    }

    /// Per-class maximum of the members' sigmoid outputs.
    pub fn max_prob_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(max_prob_from_logits(&self.member_logits(x)?))
    }

    /// Sigmoid of the unweighted mean of member logits.
    pub fn mean_logit_sigmoid(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(mean_logit_sigmoid_from_logits(&self.member_logits(x)?))
    }

    /// Top-3 classes of [`Self::mean_logit_sigmoid`].
    pub fn predict(&self, x: &[f64]) -> Result<LabelSet> {
        top3_decision(&self.mean_logit_sigmoid(x)?)
    }

    /// Trains every member on the weighted ensemble loss. Members are
    /// independent given the loss, so each runs with its own derived seed
    /// and loader stream.
    pub fn train(
        &mut self,
        data: &[Example],
        schedule: &TrainSchedule,
        loader: Option<&WeightedLoader>,
        seed: u64,
    ) -> Result<Vec<LossTrace>> {
        let weights = self.weights.clone();
        self.members
            .iter_mut()
            .zip(weights)
            .enumerate()
            .map(|(i, (member, w))| {
                let stream = loader.map(|l| l.fork(i as u64));
                train_scaled(member, data, schedule, stream.as_ref(), derive_seed(seed, i as u64), w)
            })
            .collect()
    }

    /// Mean per-member loss over `data`, for confidence weighting.
    pub fn member_losses(&self, data: &[Example]) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::invalid("cannot evaluate member losses on empty data"));
        }
        self.members
            .iter()
            .map(|m| {
                let mut total = 0.0;
                for ex in data {
                    total += bce_loss(&m.predict_logits(&ex.features)?, ex.target.as_slice());
                }
                Ok(total / data.len() as f64)
            })
            .collect()
    }
}

pub fn max_prob_from_logits(member_logits: &[Vec<f64>]) -> Vec<f64> {
    let t = member_logits.first().map_or(0, |z| z.len());
    (0..t)
        .map(|c| member_logits.iter().map(|z| sigmoid(z[c])).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn mean_logit_sigmoid_from_logits(member_logits: &[Vec<f64>]) -> Vec<f64> {
    let t = member_logits.first().map_or(0, |z| z.len());
    let m = member_logits.len() as f64;
    (0..t)
        .map(|c| sigmoid(member_logits.iter().map(|z| z[c]).sum::<f64>() / m))
        .collect()
}

/// Weights proportional to `1 / loss`, normalized to sum to one.
pub fn confidence_weights(member_losses: &[f64]) -> Result<Vec<f64>> {
    if member_losses.is_empty() {
        return Err(Error::invalid("no member losses"));
    }
    if member_losses.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid("member losses must be finite and positive"));
    }
    let inv: Vec<f64> = member_losses.iter().map(|l| 1.0 / l).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|v| v / total).collect())
}

/// Indices of the three largest probabilities; ties go to the smaller index.
pub fn top3_decision(probs: &[f64]) -> Result<LabelSet> {
    if probs.len() < 3 {
        return Err(Error::invalid(format!("top-3 decision needs at least 3 classes, got {}", probs.len())));
    }
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    Ok(idx[..3].iter().copied().collect())
}

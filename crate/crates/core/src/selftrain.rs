//! Teacher/student self-training.
//!
//! A teacher ensemble is trained on the clean set, relabels everything else
//! with `sigmoid(mean logits)`, and a student is trained on the union. The
//! student stage optionally smooths the clean targets and appends a
//! fine-tuning phase driven by a class-weighted loader.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance, Sample};
use crate::ensemble::{default_member_configs, top3_decision, Ensemble};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::loss::{hard_targets, smooth_targets, TargetVector};
use crate::metrics::{evaluate, EvaluationReport};
use crate::sampling::{class_weights_from_counts, sample_weight, WeightReduction, WeightedLoader};
use crate::train::{Example, TrainSchedule};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoTargetMode {
    #[default]
    Soft,
    HardTop3,
}

impl PseudoTargetMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "soft" => Some(Self::Soft),
            "hard-top3" => Some(Self::HardTop3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Soft => "soft",
            Self::HardTop3 => "hard-top3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub member_configs: Vec<LearnerConfig>,
    pub schedule: TrainSchedule,
    /// Probability kept on positives; `None` disables smoothing.
    pub label_smoothing: Option<f64>,
    pub use_weighted_loader: bool,
    /// Epochs, rate and batch size of the appended fine-tuning phase.
    pub finetune: TrainSchedule,
    pub weight_reduction: WeightReduction,
    /// Overrides the inverse-frequency class weights when set.
    pub class_weights: Option<Vec<f64>>,
    pub pseudo_mode: PseudoTargetMode,
    /// Start the student from the teacher's parameters.
    pub warm_start: bool,
    pub seed: u64,
}

impl StageConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            member_configs: default_member_configs(seed),
            schedule: TrainSchedule::default(),
            label_smoothing: None,
            use_weighted_loader: false,
            finetune: TrainSchedule::constant(3, 1e-2 / 4.0, 64),
            weight_reduction: WeightReduction::Mean,
            class_weights: None,
            pseudo_mode: PseudoTargetMode::Soft,
            warm_start: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.label_smoothing {
            if !(p > 0.5 && p <= 1.0) {
                return Err(Error::InvalidSmoothing(format!("p must be in (0.5, 1], got {p}")));
            }
        }
        if self.member_configs.is_empty() {
            return Err(Error::invalid("at least one member is required"));
        }
        self.schedule.validate()?;
        self.finetune.validate()
    }
}

/// Hard targets for every sample's assigned labels.
pub fn hard_examples(ds: &Dataset) -> Vec<Example> {
    ds.samples()
        .iter()
        .map(|s| Example::new(s.features.clone(), hard_targets(s.assigned_labels, ds.num_classes())))
        .collect()
}

/// Trains a teacher on the clean training set, starting from `init` when
/// given and from fresh members otherwise, and evaluates it on the clean
/// validation set when one is supplied.
pub fn train_teacher(
    cfg: &StageConfig,
    clean_train: &Dataset,
    clean_val: Option<&Dataset>,
    init: Option<&Ensemble>,
) -> Result<(Ensemble, Option<EvaluationReport>)> {
    cfg.validate()?;
    if clean_train.is_empty() {
        return Err(Error::invalid("the clean training set is empty"));
    }
    let mut teacher = match init {
        Some(e) => e.clone(),
        None => Ensemble::from_configs(&cfg.member_configs, clean_train.feature_dim(), clean_train.num_classes())?,
    };
    teacher.train(&hard_examples(clean_train), &cfg.schedule, None, derive_seed(cfg.seed, 11))?;
    let report = match clean_val {
        Some(v) if !v.is_empty() => Some(evaluate_ensemble(&teacher, v)?.with_stage("teacher-validation")),
        _ => None,
    };
    Ok((teacher, report))
}

/// Relabels `unclean` with the teacher's `sigmoid(mean logits)`. Assigned
/// labels become the top-3 of those probabilities.
pub fn pseudo_label(teacher: &Ensemble, unclean: &Dataset) -> Result<Dataset> {
    let samples = unclean
        .samples()
        .iter()
        .map(|s| {
            let soft = teacher.mean_logit_sigmoid(&s.features)?;
            Ok(Sample {
                assigned_labels: top3_decision(&soft)?,
                provenance: Provenance::Pseudo,
                soft_targets: Some(soft),
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(unclean.num_classes(), unclean.feature_dim(), samples)
}

/// Pseudo samples followed by clean samples.
pub fn augmented_dataset(pseudo: &Dataset, clean_train: &Dataset) -> Result<Dataset> {
    let mut samples = pseudo.samples().to_vec();
    samples.extend_from_slice(clean_train.samples());
    Dataset::new(clean_train.num_classes(), clean_train.feature_dim(), samples)
}

fn student_target(cfg: &StageConfig, s: &Sample, t: usize) -> Result<TargetVector> {
    match (&s.soft_targets, cfg.pseudo_mode) {
        (Some(soft), PseudoTargetMode::Soft) => Ok(TargetVector(soft.clone())),
        (Some(_), PseudoTargetMode::HardTop3) => Ok(hard_targets(s.assigned_labels, t)),
        (None, _) => match cfg.label_smoothing {
            // Smoothing is undefined for empty or full label sets.
            Some(p) if !s.assigned_labels.is_empty() && s.assigned_labels.len() < t => {
                smooth_targets(s.assigned_labels, p, t)
            }
            _ => Ok(hard_targets(s.assigned_labels, t)),
        },
    }
}

pub fn student_examples(cfg: &StageConfig, augmented: &Dataset) -> Result<Vec<Example>> {
    let t = augmented.num_classes();
    augmented
        .samples()
        .iter()
        .map(|s| Ok(Example::new(s.features.clone(), student_target(cfg, s, t)?)))
        .collect()
}

/// Loader for the fine-tuning phase: class-weighted when WDL is on,
/// uniform otherwise.
pub fn finetune_loader(cfg: &StageConfig, augmented: &Dataset) -> Result<WeightedLoader> {
    let seed = derive_seed(cfg.seed, 13);
    let batch = cfg.finetune.batch_size;
    if !cfg.use_weighted_loader {
        return WeightedLoader::uniform(augmented.len(), batch, seed);
    }
    let cw = match &cfg.class_weights {
        Some(w) if w.len() == augmented.num_classes() => w.clone(),
        Some(w) => return Err(Error::DimensionMismatch { expected: augmented.num_classes(), actual: w.len() }),
        None => class_weights_from_counts(&crate::data::class_distribution(augmented)),
    };
    let weights = augmented.samples().iter().map(|s| sample_weight(s.assigned_labels, &cw, cfg.weight_reduction)).collect();
    WeightedLoader::new(weights, batch, seed)
}

/// Trains the student on pseudo plus clean data, then runs the fine-tuning
/// phase. `teacher` is required when `warm_start` is set.
pub fn train_student(
    cfg: &StageConfig,
    pseudo: &Dataset,
    clean_train: &Dataset,
    teacher: Option<&Ensemble>,
) -> Result<Ensemble> {
    cfg.validate()?;
    let augmented = augmented_dataset(pseudo, clean_train)?;
    if augmented.is_empty() {
        return Err(Error::invalid("the student has no training data"));
    }
    let mut student = match (cfg.warm_start, teacher) {
        (true, Some(t)) => t.clone(),
        (true, None) => return Err(Error::invalid("warm start requires a teacher")),
        (false, _) => Ensemble::from_configs(&cfg.member_configs, augmented.feature_dim(), augmented.num_classes())?,
    };
    let examples = student_examples(cfg, &augmented)?;
    student.train(&examples, &cfg.schedule, None, derive_seed(cfg.seed, 12))?;
    if cfg.finetune.total_epochs() > 0 {
        let loader = finetune_loader(cfg, &augmented)?;
        student.train(&examples, &cfg.finetune, Some(&loader), derive_seed(cfg.seed, 14))?;
    }
    Ok(student)
}

/// Top-3 of `sigmoid(mean logits)`.
pub fn predict(e: &Ensemble, features: &[f64]) -> Result<crate::labels::LabelSet> {
    e.predict(features)
}

/// Predictions for every sample against its true labels.
pub fn evaluate_ensemble(e: &Ensemble, ds: &Dataset) -> Result<EvaluationReport> {
    evaluate_against(e, ds, |s| s.true_labels)
}

/// Predictions for every sample against its assigned (possibly noisy) labels.
pub fn evaluate_ensemble_noisy(e: &Ensemble, ds: &Dataset) -> Result<EvaluationReport> {
    evaluate_against(e, ds, |s| s.assigned_labels)
}

fn evaluate_against(
    e: &Ensemble,
    ds: &Dataset,
    truth: impl Fn(&Sample) -> crate::labels::LabelSet,
) -> Result<EvaluationReport> {
    let preds = ds.samples().iter().map(|s| e.predict(&s.features)).collect::<Result<Vec<_>>>()?;
    let truths: Vec<_> = ds.samples().iter().map(truth).collect();
    let mut loss = 0.0;
    for (s, t) in ds.samples().iter().zip(&truths) {
        loss += e.ensemble_loss(&s.features, hard_targets(*t, ds.num_classes()).as_slice())?;
    }
    let report = evaluate(&preds, &truths, ds.num_classes())?;
    Ok(if ds.is_empty() { report } else { report.with_loss(loss / ds.len() as f64) })
}

/// Ids in `ds` that are not in `clean`, in dataset order.
pub fn unclean_ids(ds: &Dataset, clean: &[u64]) -> Vec<u64> {
    let clean: BTreeSet<u64> = clean.iter().copied().collect();
    ds.sample_ids().filter(|id| !clean.contains(id)).collect()
}

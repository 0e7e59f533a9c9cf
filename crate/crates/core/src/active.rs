//! Loss-based label cleaning.
//!
//! Each iteration fine-tunes the ensemble on the current labels, scores every
//! sample outside the clean set by its ensemble loss, sends the highest
//! scoring ones to an oracle and moves them into the clean set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::ensemble::{top3_decision, Ensemble};
use crate::error::{Error, Result};
use crate::labels::{LabelSet, GROUP_LABEL_COUNT};
use crate::learner::LearnerConfig;
use crate::loss::hard_targets;
use crate::train::{Example, TrainSchedule};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpistemicScore {
    pub sample_id: u64,
    pub score: f64,
}

/// A sample awaiting review, with the ensemble's suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub sample_id: u64,
    pub group_id: u64,
    pub current_labels: LabelSet,
    /// Per-class maximum member probability.
    pub suggestion_probs: Vec<f64>,
    pub suggested_labels: LabelSet,
    pub score: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: u64,
    pub previous_labels: LabelSet,
    pub corrected_labels: LabelSet,
    pub changed: bool,
    pub annotator_id: String,
    pub iteration_index: usize,
    /// UTC seconds.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALConfig {
    /// Target clean-set size.
    pub k_target: usize,
    /// Corrections requested per iteration.
    pub per_iteration: usize,
    pub finetune_batch: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub max_iterations: usize,
    /// Retrain from fresh members each iteration instead of fine-tuning.
    pub from_scratch: bool,
    /// Fraction of the clean set kept for training the teacher.
    pub clean_train_fraction: f64,
}

impl Default for ALConfig {
    fn default() -> Self {
        Self {
            k_target: 600,
            per_iteration: 100,
            finetune_batch: 50,
            finetune_epochs: 1,
            finetune_lr: 1e-2 / 4.0,
            max_iterations: 100,
            from_scratch: false,
            clean_train_fraction: 0.8,
        }
    }
}

impl ALConfig {
    /// Clean-set size and batch size used on the full-size problem.
    pub fn paper_scale() -> Self {
        Self { k_target: 24_997, per_iteration: 500, max_iterations: 1000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_iteration == 0 {
            return Err(Error::invalid("per_iteration must be positive"));
        }
        if self.per_iteration > self.k_target {
            return Err(Error::invalid("per_iteration must not exceed k_target"));
        }
        if self.finetune_batch == 0 {
            return Err(Error::invalid("finetune_batch must be positive"));
        }
        if !(self.finetune_lr.is_finite() && self.finetune_lr > 0.0) {
            return Err(Error::invalid("finetune_lr must be positive"));
        }
        if !(self.clean_train_fraction > 0.0 && self.clean_train_fraction < 1.0) {
            return Err(Error::invalid("clean_train_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Samples whose labels an oracle has verified, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<u64>", into = "Vec<u64>")]
pub struct CleanSet {
    ids: Vec<u64>,
    members: BTreeSet<u64>,
}

impl From<Vec<u64>> for CleanSet {
    fn from(ids: Vec<u64>) -> Self {
        Self::from_ids(ids)
    }
}

impl From<CleanSet> for Vec<u64> {
    fn from(set: CleanSet) -> Self {
        set.ids
    }
}

impl CleanSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut set = Self::new();
        for id in ids {
            set.insert(id);
        }
        set
    }

    /// Returns false if the id was already present.
    pub fn insert(&mut self, id: u64) -> bool {
        if self.members.insert(id) {
            self.ids.push(id);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, id: u64) -> bool {
        self.members.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Splits into disjoint (train, validation) id lists, stratified by the
    /// clean label set of each sample.
    pub fn split(&self, labels: &BTreeMap<u64, LabelSet>, train_fraction: f64, seed: u64) -> (Vec<u64>, Vec<u64>) {
        let mut strata: BTreeMap<LabelSet, Vec<u64>> = BTreeMap::new();
        for &id in &self.ids {
            strata.entry(labels.get(&id).copied().unwrap_or_default()).or_default().push(id);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        let mut leftovers = Vec::new();
        for (_, mut ids) in strata {
            ids.sort_unstable();
            ids.shuffle(&mut rng);
            let exact = (1.0 - train_fraction) * ids.len() as f64;
            let n_val = exact.floor() as usize;
            val.extend_from_slice(&ids[..n_val]);
            train.extend_from_slice(&ids[n_val..]);
            if exact > n_val as f64 && n_val < ids.len() {
                leftovers.push(ids[n_val]);
            }
        }
        // Strata too small to split on their own top up validation.
        let wanted = ((1.0 - train_fraction) * self.ids.len() as f64).round() as usize;
        leftovers.shuffle(&mut rng);
        for id in leftovers {
            if val.len() >= wanted || train.len() <= 1 {
                break;
            }
            train.retain(|&t| t != id);
            val.push(id);
        }
        train.sort_unstable();
        val.sort_unstable();
        (train, val)
    }
}

pub fn current_examples(ds: &Dataset) -> Vec<Example> {
    ds.samples()
        .iter()
        .map(|s| Example::new(s.features.clone(), hard_targets(s.assigned_labels, ds.num_classes())))
        .collect()
}

/// Ensemble loss of every sample outside `exclude` against its assigned labels.
pub fn score_samples(e: &Ensemble, ds: &Dataset, exclude: &CleanSet) -> Result<Vec<EpistemicScore>> {
    ds.samples()
        .iter()
        .filter(|s| !exclude.contains(s.sample_id))
        .map(|s| {
            let target = hard_targets(s.assigned_labels, ds.num_classes());
            Ok(EpistemicScore { sample_id: s.sample_id, score: e.ensemble_loss(&s.features, target.as_slice())? })
        })
        .collect()
}

/// Ids of the `k` highest scores, highest first; ties go to the smaller id.
pub fn select_topk(scores: &[EpistemicScore], k: usize) -> Result<Vec<u64>> {
    if k > scores.len() {
        return Err(Error::invalid(format!("cannot select {k} of {} scores", scores.len())));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.sample_id.cmp(&b.sample_id)));
    Ok(sorted[..k].iter().map(|s| s.sample_id).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResponse {
    Labels(LabelSet),
    Timeout,
}

/// Source of verified labels.
pub trait Oracle {
    fn annotator_id(&self) -> &str;
    fn review(&mut self, item: &AnnotationItem, sample: &Sample) -> OracleResponse;
}

/// Answers with the synthetic ground truth.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    id: String,
}

impl ScriptedOracle {
    pub fn new() -> Self {
        Self { id: "scripted".into() }
    }
}

impl Default for ScriptedOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Oracle for ScriptedOracle {
    fn annotator_id(&self) -> &str {
        &self.id
    }

    fn review(&mut self, _item: &AnnotationItem, sample: &Sample) -> OracleResponse {
        OracleResponse::Labels(sample.true_labels)
    }
}

/// Answers with the ground truth, except that with probability `flip_rate`
/// one class membership is wrong. Answers keep at most three labels.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    id: String,
    flip_rate: f64,
    num_classes: usize,
    rng: ChaCha8Rng,
}

impl NoisyOracle {
    pub fn new(flip_rate: f64, num_classes: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_rate) {
            return Err(Error::invalid("flip_rate must be in [0, 1]"));
        }
        if num_classes < 2 {
            return Err(Error::invalid("noisy oracle needs at least 2 classes"));
        }
        Ok(Self { id: "noisy".into(), flip_rate, num_classes, rng: ChaCha8Rng::seed_from_u64(seed) })
    }
}

impl Oracle for NoisyOracle {
    fn annotator_id(&self) -> &str {
        &self.id
    }

    fn review(&mut self, _item: &AnnotationItem, sample: &Sample) -> OracleResponse {
        let mut labels = sample.true_labels;
        if self.rng.random::<f64>() < self.flip_rate {
            let c = self.rng.random_range(0..self.num_classes);
            if labels.contains(c) {
                labels.remove(c);
            } else {
                if labels.len() >= GROUP_LABEL_COUNT {
                    let present = labels.to_vec();
                    labels.remove(present[self.rng.random_range(0..present.len())]);
                }
                labels.insert(c);
            }
        }
        OracleResponse::Labels(labels)
    }
}

/// Append-only JSON-lines audit log.
#[derive(Debug, Clone)]
pub struct AuditLog {
    path: PathBuf,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &AnnotationRecord) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Vec<AnnotationRecord>> {
        if !path.exists() {
            return Ok(Vec::new());
        }
        let reader = BufReader::new(fs::File::open(path)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
        }
        Ok(out)
    }
}

pub fn now_utc_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub selected: usize,
    pub changed: usize,
    pub clean_size: usize,
    /// Final-epoch training loss of each member during this iteration's retraining.
    pub retrain_losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Annotating,
}

/// Mutable state of the cleaning loop. The original dataset is never
/// modified; corrections are kept alongside it.
#[derive(Debug, Clone)]
pub struct ALState {
    base: Dataset,
    current: Dataset,
    corrections: BTreeMap<u64, LabelSet>,
    clean: CleanSet,
    ensemble: Ensemble,
    member_configs: Vec<LearnerConfig>,
    schedule: TrainSchedule,
    config: ALConfig,
    seed: u64,
    iteration: usize,
    phase: Phase,
    pending: Vec<AnnotationItem>,
    records: Vec<AnnotationRecord>,
    replay: HashMap<(u64, usize), usize>,
    summaries: Vec<IterationSummary>,
    audit: Option<AuditLog>,
}

impl ALState {
    /// `ensemble` is the already trained baseline; `member_configs` and
    /// `schedule` are used when retraining from scratch.
    pub fn new(
        dataset: Dataset,
        ensemble: Ensemble,
        member_configs: Vec<LearnerConfig>,
        schedule: TrainSchedule,
        config: ALConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if ensemble.input_dim() != dataset.feature_dim() || ensemble.num_classes() != dataset.num_classes() {
            return Err(Error::invalid("ensemble dimensions do not match the dataset"));
        }
        Ok(Self {
            current: dataset.clone(),
            base: dataset,
            corrections: BTreeMap::new(),
            clean: CleanSet::new(),
            ensemble,
            member_configs,
            schedule,
            config,
            seed,
            iteration: 0,
            phase: Phase::Idle,
            pending: Vec::new(),
            records: Vec::new(),
            replay: HashMap::new(),
            summaries: Vec::new(),
            audit: None,
        })
    }

    pub fn with_audit_log(mut self, log: AuditLog) -> Self {
        self.audit = Some(log);
        self
    }

    pub fn config(&self) -> &ALConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn clean(&self) -> &CleanSet {
        &self.clean
    }

    pub fn corrections(&self) -> &BTreeMap<u64, LabelSet> {
        &self.corrections
    }

    /// Dataset with corrected labels applied.
    pub fn current_dataset(&self) -> &Dataset {
        &self.current
    }

    pub fn base_dataset(&self) -> &Dataset {
        &self.base
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn summaries(&self) -> &[IterationSummary] {
        &self.summaries
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn pending(&self) -> &[AnnotationItem] {
        &self.pending
    }

    pub fn eligible(&self) -> usize {
        self.base.len() - self.clean.len()
    }

    pub fn is_done(&self) -> bool {
        self.clean.len() >= self.config.k_target
            || self.eligible() == 0
            || self.summaries.len() >= self.config.max_iterations
    }

    /// Corrections submitted in the current iteration.
    pub fn submitted_this_iteration(&self) -> usize {
        match self.phase {
            Phase::Annotating => self.records.iter().filter(|r| r.iteration_index == self.iteration).count(),
            Phase::Idle => 0,
        }
    }

    fn retrain(&mut self) -> Result<Vec<f64>> {
        let examples = current_examples(&self.current);
        let seed = derive_seed(self.seed, 1000 + self.iteration as u64);
        let traces = if self.config.from_scratch && !self.member_configs.is_empty() {
            let weights = self.ensemble.weights().to_vec();
            let mut fresh = Ensemble::from_configs(&self.member_configs, self.base.feature_dim(), self.base.num_classes())?;
            fresh.set_weights(weights)?;
            let traces = fresh.train(&examples, &self.schedule, None, seed)?;
            self.ensemble = fresh;
            traces
        } else {
            let schedule = TrainSchedule::constant(
                self.config.finetune_epochs,
                self.config.finetune_lr,
                self.config.finetune_batch,
            );
            self.ensemble.train(&examples, &schedule, None, seed)?
        };
        Ok(traces.iter().map(|t| t.last().copied().unwrap_or(f64::NAN)).collect())
    }

    fn item_for(&self, sample: &Sample, score: f64) -> Result<AnnotationItem> {
        let probs = self.ensemble.max_prob_output(&sample.features)?;
        let suggested = top3_decision(&probs)?;
        Ok(AnnotationItem {
            sample_id: sample.sample_id,
            group_id: sample.group_id,
            current_labels: sample.assigned_labels,
            suggestion_probs: probs,
            suggested_labels: suggested,
            score,
            features: sample.features.clone(),
        })
    }

    /// Retrains, rescores and returns the review queue of the next iteration,
    /// ordered by descending score.
    pub fn begin_iteration(&mut self) -> Result<Vec<AnnotationItem>> {
        if self.phase == Phase::Annotating {
            return Err(Error::invalid("an iteration is already in progress"));
        }
        self.iteration += 1;
        let losses = self.retrain()?;
        let scores = score_samples(&self.ensemble, &self.current, &self.clean)?;
        let budget = self.config.k_target.saturating_sub(self.clean.len());
        let k = self.config.per_iteration.min(budget).min(scores.len());
        let by_id: HashMap<u64, f64> = scores.iter().map(|s| (s.sample_id, s.score)).collect();
        let selected = select_topk(&scores, k)?;
        self.pending = selected
            .iter()
            .map(|id| {
                let s = self.current.get(*id).ok_or(Error::UnknownSample(*id))?;
                self.item_for(s, by_id[id])
            })
            .collect::<Result<Vec<_>>>()?;
        self.phase = Phase::Annotating;
        self.summaries.push(IterationSummary {
            iteration: self.iteration,
            selected: k,
            changed: 0,
            clean_size: self.clean.len(),
            retrain_losses: losses,
        });
        Ok(self.pending.clone())
    }

    /// Applies one verified label set. Replaying the same
    /// `(sample_id, iteration)` returns the original record unchanged.
    pub fn apply_correction(&mut self, sample_id: u64, labels: LabelSet, annotator_id: &str) -> Result<AnnotationRecord> {
        if let Some(&i) = self.replay.get(&(sample_id, self.iteration)) {
            return Ok(self.records[i].clone());
        }
        if self.phase != Phase::Annotating {
            return Err(Error::invalid("no iteration is in progress"));
        }
        if !self.pending.iter().any(|it| it.sample_id == sample_id) {
            return Err(Error::invalid(format!("sample {sample_id} is not queued in this iteration")));
        }
        if !labels.fits(self.base.num_classes()) || labels.len() > GROUP_LABEL_COUNT {
            return Err(Error::invalid(format!(
                "corrected labels must be at most {GROUP_LABEL_COUNT} ids below {}",
                self.base.num_classes()
            )));
        }
        let previous = self.current.get(sample_id).ok_or(Error::UnknownSample(sample_id))?.assigned_labels;
        let record = AnnotationRecord {
            sample_id,
            previous_labels: previous,
            corrected_labels: labels,
            changed: labels != previous,
            annotator_id: annotator_id.to_string(),
            iteration_index: self.iteration,
            timestamp: now_utc_seconds(),
        };
        if let Some(log) = &self.audit {
            log.append(&record)?;
        }
        self.corrections.insert(sample_id, labels);
        self.clean.insert(sample_id);
        self.current = self.base.with_corrections(&self.corrections)?;
        self.replay.insert((sample_id, self.iteration), self.records.len());
        self.records.push(record.clone());
        self.pending.retain(|it| it.sample_id != sample_id);
        if let Some(s) = self.summaries.last_mut() {
            s.changed += record.changed as usize;
            s.clean_size = self.clean.len();
        }
        Ok(record)
    }

    /// Closes the current iteration.
    pub fn end_iteration(&mut self) -> Result<IterationSummary> {
        if self.phase != Phase::Annotating {
            return Err(Error::invalid("no iteration is in progress"));
        }
        self.phase = Phase::Idle;
        self.pending.clear();
        Ok(self.summaries.last().cloned().expect("an iteration was started"))
    }

    /// Clean train/validation ids.
    pub fn clean_split(&self) -> (Vec<u64>, Vec<u64>) {
        self.clean.split(&self.corrections, self.config.clean_train_fraction, derive_seed(self.seed, 77))
    }

    pub fn into_parts(self) -> (Dataset, CleanSet, Ensemble, Vec<AnnotationRecord>, Vec<IterationSummary>) {
        (self.current, self.clean, self.ensemble, self.records, self.summaries)
    }
}

pub fn oracle_correct(state: &mut ALState, oracle: &mut dyn Oracle, item: &AnnotationItem) -> Result<Option<AnnotationRecord>> {
    let sample = state.current.get(item.sample_id).ok_or(Error::UnknownSample(item.sample_id))?.clone();
    match oracle.review(item, &sample) {
        OracleResponse::Labels(labels) => {
            let annotator = oracle.annotator_id().to_string();
            state.apply_correction(item.sample_id, labels, &annotator).map(Some)
        }
        OracleResponse::Timeout => Ok(None),
    }
}

const MAX_ORACLE_ATTEMPTS: usize = 3;

/// One full iteration: retrain, score, correct the top samples, grow the clean set.
pub fn run_al_iteration(state: &mut ALState, oracle: &mut dyn Oracle) -> Result<IterationSummary> {
    let mut queue: Vec<(AnnotationItem, usize)> = state.begin_iteration()?.into_iter().map(|i| (i, 0)).collect();
    let mut cursor = 0;
    while cursor < queue.len() {
        let (item, attempts) = queue[cursor].clone();
        cursor += 1;
        if oracle_correct(state, oracle, &item)?.is_none() {
            if attempts + 1 >= MAX_ORACLE_ATTEMPTS {
                return Err(Error::Oracle(format!(
                    "sample {} timed out {MAX_ORACLE_ATTEMPTS} times",
                    item.sample_id
                )));
            }
            queue.push((item, attempts + 1));
        }
    }
    state.end_iteration()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALOutcome {
    pub clean_ids: Vec<u64>,
    /// Changed-label count per iteration.
    pub effort: Vec<usize>,
    pub summaries: Vec<IterationSummary>,
    pub exhausted: bool,
}

/// Iterates until the clean set reaches `k_target`, the data runs out or
/// `max_iterations` is hit.
pub fn run_al_loop(state: &mut ALState, oracle: &mut dyn Oracle) -> Result<ALOutcome> {
    while !state.is_done() {
        run_al_iteration(state, oracle)?;
    }
    let exhausted = state.clean.len() < state.config.k_target && state.eligible() == 0;
    if exhausted {
        log::warn!(
            "dataset exhausted after {} iterations with {} clean samples (target {})",
            state.summaries.len(),
            state.clean.len(),
            state.config.k_target
        );
    }
    Ok(ALOutcome {
        clean_ids: state.clean.ids().to_vec(),
        effort: state.summaries.iter().map(|s| s.changed).collect(),
        summaries: state.summaries.clone(),
        exhausted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCount {
    pub iteration: usize,
    pub reviewed: usize,
    pub changed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrection {
    pub class: usize,
    /// Records whose label change involved this class.
    pub corrected: usize,
    /// Records where this class appeared before or after review.
    pub reviewed: usize,
    /// `corrected / reviewed`.
    pub rate: f64,
    /// Share of all per-class corrections.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    pub per_iteration: Vec<IterationCount>,
    pub per_class: Vec<ClassCorrection>,
}

pub fn correction_stats(records: &[AnnotationRecord], num_classes: usize) -> CorrectionStats {
    let mut by_iter: BTreeMap<usize, IterationCount> = BTreeMap::new();
    let mut corrected = vec![0usize; num_classes];
    let mut reviewed = vec![0usize; num_classes];
    for r in records {
        let e = by_iter
            .entry(r.iteration_index)
            .or_insert(IterationCount { iteration: r.iteration_index, reviewed: 0, changed: 0 });
        e.reviewed += 1;
        e.changed += r.changed as usize;
        let before = r.previous_labels;
        let after = r.corrected_labels;
        for c in 0..num_classes {
            if before.contains(c) || after.contains(c) {
                reviewed[c] += 1;
            }
            if before.contains(c) != after.contains(c) {
                corrected[c] += 1;
            }
        }
    }
    let total: usize = corrected.iter().sum();
    let per_class = (0..num_classes)
        .map(|c| ClassCorrection {
            class: c,
            corrected: corrected[c],
            reviewed: reviewed[c],
            rate: if reviewed[c] == 0 { 0.0 } else { corrected[c] as f64 / reviewed[c] as f64 },
            share: if total == 0 { 0.0 } else { corrected[c] as f64 / total as f64 },
        })
        .collect();
    CorrectionStats { per_iteration: by_iter.into_values().collect(), per_class }
}

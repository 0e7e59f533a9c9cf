//! Samples, datasets and the synthetic generator with clip-to-frame label
//! extrapolation noise.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSet, GROUP_LABEL_COUNT, MAX_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Clip-level labels copied onto the frame.
    NoisyExtrapolated,
    HumanCorrected,
    Pseudo,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::NoisyExtrapolated => "noisy",
            Provenance::HumanCorrected => "corrected",
            Provenance::Pseudo => "pseudo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "noisy" => Some(Provenance::NoisyExtrapolated),
            "corrected" => Some(Provenance::HumanCorrected),
            "pseudo" => Some(Provenance::Pseudo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: u64,
    pub group_id: u64,
    pub features: Vec<f64>,
    pub assigned_labels: LabelSet,
    /// Synthetic ground truth. Never used for training.
    pub true_labels: LabelSet,
    pub provenance: Provenance,
    /// Present exactly when `provenance` is [`Provenance::Pseudo`].
    pub soft_targets: Option<Vec<f64>>,
}

/// Immutable collection of samples with group and combination indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_classes: usize,
    feature_dim: usize,
    samples: Vec<Sample>,
    index: HashMap<u64, usize>,
    groups: BTreeMap<u64, Vec<u64>>,
    combo_index: BTreeMap<LabelSet, Vec<u64>>,
}

impl Dataset {
    pub fn new(num_classes: usize, feature_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if num_classes == 0 || num_classes > MAX_CLASSES {
            return Err(Error::invalid(format!(
                "class count must be in [1, {MAX_CLASSES}], got {num_classes}"
            )));
        }
        let mut index = HashMap::with_capacity(samples.len());
        let mut groups: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for (pos, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::DimensionMismatch { expected: feature_dim, actual: s.features.len() });
            }
            if index.insert(s.sample_id, pos).is_some() {
                return Err(Error::invalid(format!("duplicate sample id {}", s.sample_id)));
            }
            if !s.assigned_labels.fits(num_classes) || !s.true_labels.fits(num_classes) {
                return Err(Error::invalid(format!("sample {} has a label id >= {num_classes}", s.sample_id)));
            }
            match (&s.soft_targets, s.provenance) {
                (Some(t), Provenance::Pseudo) => {
                    if t.len() != num_classes {
                        return Err(Error::DimensionMismatch { expected: num_classes, actual: t.len() });
                    }
                }
                (None, Provenance::Pseudo) => {
                    return Err(Error::invalid(format!("pseudo sample {} lacks soft targets", s.sample_id)))
                }
                (Some(_), _) => {
                    return Err(Error::invalid(format!(
                        "sample {} has soft targets but is not pseudo-labeled",
                        s.sample_id
                    )))
                }
                (None, _) => {}
            }
            groups.entry(s.group_id).or_default().push(s.sample_id);
        }

        // A group's combination is the clip-level label set carried by its
        // extrapolated frames; groups without such frames fall back to their
        // first frame.
        let mut combo_index: BTreeMap<LabelSet, Vec<u64>> = BTreeMap::new();
        for (&gid, ids) in &groups {
            let members = ids.iter().map(|id| &samples[index[id]]);
            let combo = members
                .clone()
                .find(|s| s.provenance == Provenance::NoisyExtrapolated)
                .or_else(|| members.clone().next())
                .map(|s| s.assigned_labels)
                .unwrap_or_default();
            combo_index.entry(combo).or_default().push(gid);
        }

        Ok(Self { num_classes, feature_dim, samples, index, groups, combo_index })
    }

    pub fn empty(num_classes: usize, feature_dim: usize) -> Result<Self> {
        Self::new(num_classes, feature_dim, Vec::new())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: u64) -> Option<&Sample> {
        self.index.get(&sample_id).map(|&i| &self.samples[i])
    }

    pub fn position(&self, sample_id: u64) -> Option<usize> {
        self.index.get(&sample_id).copied()
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().map(|s| s.sample_id)
    }

    pub fn groups(&self) -> &BTreeMap<u64, Vec<u64>> {
        &self.groups
    }

    pub fn combo_index(&self) -> &BTreeMap<LabelSet, Vec<u64>> {
        &self.combo_index
    }

    /// New dataset holding the given ids, in the order given.
    pub fn subset(&self, ids: &[u64]) -> Result<Dataset> {
        let samples = ids
            .iter()
            .map(|&id| self.get(id).cloned().ok_or(Error::UnknownSample(id)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.num_classes, self.feature_dim, samples)
    }

    /// New dataset where the listed samples carry corrected labels with
    /// human-corrected provenance.
    pub fn with_corrections(&self, corrections: &BTreeMap<u64, LabelSet>) -> Result<Dataset> {
        let mut samples = self.samples.clone();
        for (&id, &labels) in corrections {
            let pos = self.position(id).ok_or(Error::UnknownSample(id))?;
            let s = &mut samples[pos];
            s.assigned_labels = labels;
            s.provenance = Provenance::HumanCorrected;
            s.soft_targets = None;
        }
        Dataset::new(self.num_classes, self.feature_dim, samples)
    }

    /// Fraction of samples whose assigned labels differ from the truth.
    pub fn noisy_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let noisy = self.samples.iter().filter(|s| s.assigned_labels != s.true_labels).count();
        noisy as f64 / self.samples.len() as f64
    }
}

/// Histogram of assigned-label counts per class.
pub fn class_distribution(ds: &Dataset) -> Vec<usize> {
    let mut counts = vec![0usize; ds.num_classes()];
    for s in ds.samples() {
        for c in s.assigned_labels.ids() {
            counts[c] += 1;
        }
    }
    counts
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Probability that a clip-labeled tool is out of view in a frame.
    pub p_absent: f64,
    /// Probability that a frame showing fewer than three tools also shows
    /// one tool outside the clip labels.
    pub p_spurious: f64,
    pub imbalance_exponent: f64,
    pub groups: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub signal_scale: f64,
    pub noise_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p_absent: 0.25,
            p_spurious: 0.05,
            imbalance_exponent: 1.3,
            groups: 300,
            frames_min: 20,
            frames_max: 20,
            signal_scale: 1.0,
            noise_sigma: 0.5,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_absent", self.p_absent), ("p_spurious", self.p_spurious)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.groups < 2 {
            return Err(Error::invalid("at least 2 groups are required"));
        }
        if self.frames_min < 1 {
            return Err(Error::invalid("frames_per_group must be at least 1"));
        }
        if self.frames_max < self.frames_min {
            return Err(Error::invalid("frames_max must be >= frames_min"));
        }
        if !self.imbalance_exponent.is_finite() || self.imbalance_exponent < 0.0 {
            return Err(Error::invalid("imbalance_exponent must be finite and nonnegative"));
        }
        if !(self.noise_sigma >= 0.0 && self.signal_scale.is_finite() && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma and signal_scale must be finite, sigma >= 0"));
        }
        Ok(())
    }
}

/// Draws `count` distinct indexes with probability proportional to `weights`
/// at each step.
fn weighted_distinct<R: Rng>(rng: &mut R, weights: &[f64], count: usize) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (i, (_, w)) in remaining.iter().enumerate() {
            if r < *w {
                pick = i;
                break;
            }
            r -= w;
        }
        out.push(remaining.remove(pick).0);
    }
    out
}

/// Generates a grouped dataset whose frames inherit their clip's noisy
/// three-tool label set.
///
/// Classes are ranked by id: class `c` has prior weight `(c + 1)^-exponent`.
/// Features are `signal_scale * sum(direction_c for c in true labels)` plus
/// isotropic Gaussian noise, with one fixed random unit direction per class.
pub fn generate_synthetic(spec: &NoiseSpec, feature_dim: usize, num_classes: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if !(4..=MAX_CLASSES).contains(&num_classes) {
        return Err(Error::invalid(format!(
            "class count must be in [4, {MAX_CLASSES}], got {num_classes}"
        )));
    }
    if feature_dim == 0 {
        return Err(Error::invalid("feature dimension must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let directions: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let prior: Vec<f64> = (0..num_classes)
        .map(|c| ((c + 1) as f64).powf(-spec.imbalance_exponent))
        .collect();

    let mut samples = Vec::new();
    let mut next_id = 0u64;
    for group_id in 0..spec.groups as u64 {
        let triple: LabelSet = weighted_distinct(&mut rng, &prior, GROUP_LABEL_COUNT).into_iter().collect();
        let frames = rng.random_range(spec.frames_min..=spec.frames_max);
        for _ in 0..frames {
            let mut truth = triple;
            for c in triple.ids() {
                if rng.random::<f64>() < spec.p_absent {
                    truth.remove(c);
                }
            }
            if truth.len() < GROUP_LABEL_COUNT && rng.random::<f64>() < spec.p_spurious {
                let outside: Vec<usize> = (0..num_classes).filter(|&c| !triple.contains(c)).collect();
                truth.insert(outside[rng.random_range(0..outside.len())]);
            }
            let mut features: Vec<f64> = (0..feature_dim)
                .map(|_| spec.noise_sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            for c in truth.ids() {
                for (f, d) in features.iter_mut().zip(&directions[c]) {
                    *f += spec.signal_scale * d;
                }
            }
            samples.push(Sample {
                sample_id: next_id,
                group_id,
                features,
                assigned_labels: triple,
                true_labels: truth,
                provenance: Provenance::NoisyExtrapolated,
                soft_targets: None,
            });
            next_id += 1;
        }
    }
    Dataset::new(num_classes, feature_dim, samples)
}

//! Inverse-frequency class weights and the weighted batch sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{class_distribution, Dataset, Sample};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::util::derive_seed;

/// Fixed-point resolution used to turn relative weights into integer
/// sampling masses. Weights are normalized by their maximum first, so
/// rescaling every weight by the same factor yields the same masses.
const MASS_SCALE: f64 = 4_294_967_296.0;

/// `w_c = N / (T * max(count_c, 1))` where `N` is the total label count.
pub fn class_weights_from_counts(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let t = counts.len() as f64;
    counts.iter().map(|&c| total as f64 / (t * c.max(1) as f64)).collect()
}

pub fn compute_class_weights(ds: &Dataset) -> Vec<f64> {
    class_weights_from_counts(&class_distribution(ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightReduction {
    #[default]
    Mean,
    Max,
}

/// Reduces a sample's label weights to one sampling weight; 1.0 when the
/// sample has no labels.
pub fn sample_weight(labels: LabelSet, class_weights: &[f64], reduction: WeightReduction) -> f64 {
    let ws: Vec<f64> = labels.ids().filter_map(|c| class_weights.get(c).copied()).collect();
    if ws.is_empty() {
        return 1.0;
    }
    match reduction {
        WeightReduction::Mean => ws.iter().sum::<f64>() / ws.len() as f64,
        WeightReduction::Max => ws.iter().copied().fold(f64::MIN, f64::max),
    }
}

/// Draws batches with replacement, each position chosen with probability
/// proportional to its weight. Owns its random stream.
#[derive(Debug, Clone)]
pub struct WeightedLoader {
    sample_weights: Vec<f64>,
    cumulative: Vec<u64>,
    batch_size: usize,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl WeightedLoader {
    pub fn new(sample_weights: Vec<f64>, batch_size: usize, rng_seed: u64) -> Result<Self> {
        if sample_weights.is_empty() {
            return Err(Error::invalid("weighted loader needs at least one sample"));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if sample_weights.len() as u64 >= u32::MAX as u64 {
            return Err(Error::invalid("too many samples for the weighted loader"));
        }
        if let Some(bad) = sample_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("sample weights must be finite and positive, got {bad}")));
        }
        let max = sample_weights.iter().copied().fold(0.0, f64::max);
        let mut acc = 0u64;
        let cumulative = sample_weights
            .iter()
            .map(|w| {
                acc += ((w / max) * MASS_SCALE).round().max(1.0) as u64;
                acc
            })
            .collect();
        Ok(Self { sample_weights, cumulative, batch_size, rng_seed, rng: ChaCha8Rng::seed_from_u64(rng_seed) })
    }

    pub fn uniform(len: usize, batch_size: usize, rng_seed: u64) -> Result<Self> {
        Self::new(vec![1.0; len], batch_size, rng_seed)
    }

    /// Loader weighting each sample by the class weights of its assigned labels.
    pub fn for_dataset(ds: &Dataset, batch_size: usize, rng_seed: u64, reduction: WeightReduction) -> Result<Self> {
        let cw = compute_class_weights(ds);
        let weights = ds.samples().iter().map(|s| sample_weight(s.assigned_labels, &cw, reduction)).collect();
        Self::new(weights, batch_size, rng_seed)
    }

    pub fn len(&self) -> usize {
        self.sample_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_weights.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn sample_weights(&self) -> &[f64] {
        &self.sample_weights
    }

    /// Same weights, fresh stream derived from this loader's seed.
    pub fn fork(&self, stream: u64) -> Self {
        let seed = derive_seed(self.rng_seed, stream);
        Self { rng_seed: seed, rng: ChaCha8Rng::seed_from_u64(seed), ..self.clone() }
    }

    pub fn draw_index(&mut self) -> usize {
        let total = *self.cumulative.last().expect("loader is nonempty");
        let r = self.rng.random_range(0..total);
        self.cumulative.partition_point(|&c| c <= r)
    }

    /// Positions of one batch.
    pub fn draw_indices(&mut self) -> Vec<usize> {
        (0..self.batch_size).map(|_| self.draw_index()).collect()
    }

    pub fn draw_batch<'a>(&mut self, ds: &'a Dataset) -> Result<Vec<&'a Sample>> {
        if ds.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), actual: ds.len() });
        }
        Ok(self.draw_indices().into_iter().map(|i| &ds.samples()[i]).collect())
    }
}

//! Group-aware train/test splitting.
//!
//! Whole groups go to one side. A combination carried by at least two groups
//! gets at least one group on each side; a combination carried by a single
//! group has that group's frames divided between the sides.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::labels::LabelSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    /// Combinations whose single group was split at frame level.
    pub singleton_combos: Vec<LabelSet>,
}

impl DataSplit {
    pub fn test_fraction(&self) -> f64 {
        let total = self.train_ids.len() + self.test_ids.len();
        if total == 0 {
            0.0
        } else {
            self.test_ids.len() as f64 / total as f64
        }
    }
}

pub fn group_aware_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test_fraction must be in (0, 1), got {test_fraction}")));
    }
    if ds.groups().len() < 2 {
        return Err(Error::invalid("group-aware split needs at least 2 groups"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = ds.groups();
    let target = test_fraction * ds.len() as f64;

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut singleton_combos = Vec::new();
    let mut free_groups = Vec::new();

    for (&combo, gids) in ds.combo_index() {
        if gids.len() == 1 {
            let mut ids = groups[&gids[0]].clone();
            ids.shuffle(&mut rng);
            let n = ids.len();
            let n_test = if n < 2 { 0 } else { ((test_fraction * n as f64).round() as usize).clamp(1, n - 1) };
            test.extend_from_slice(&ids[..n_test]);
            train.extend_from_slice(&ids[n_test..]);
            singleton_combos.push(combo);
            continue;
        }
        let mut gids = gids.clone();
        gids.shuffle(&mut rng);
        // The smallest group of the combination seeds the test side.
        let smallest = (0..gids.len()).min_by_key(|&i| (groups[&gids[i]].len(), i)).unwrap_or(0);
        let test_gid = gids.remove(smallest);
        let train_gid = gids.remove(0);
        test.extend_from_slice(&groups[&test_gid]);
        train.extend_from_slice(&groups[&train_gid]);
        free_groups.extend(gids);
    }

    free_groups.sort_unstable();
    free_groups.shuffle(&mut rng);
    for gid in free_groups {
        let ids = &groups[&gid];
        let with = (test.len() + ids.len()) as f64;
        if (with - target).abs() < (test.len() as f64 - target).abs() {
            test.extend_from_slice(ids);
        } else {
            train.extend_from_slice(ids);
        }
    }

    train.sort_unstable();
    test.sort_unstable();
    Ok(DataSplit { train_ids: train, test_ids: test, singleton_combos })
}

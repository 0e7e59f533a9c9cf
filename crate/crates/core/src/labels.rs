//! Tool labels, label sets and label-string standardization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest class count a [`LabelSet`] can hold.
pub const MAX_CLASSES: usize = 64;

/// Cardinality of every clip-level label set.
pub const GROUP_LABEL_COUNT: usize = 3;

/// Characters removed outright during standardization.
const FORBIDDEN: [char; 5] = ['[', ']', '\'', '-', '\\'];

/// Canonical tool names for the default 14-class problem.
pub const DEFAULT_TOOL_NAMES: [&str; 14] = [
    "needle driver",
    "cadiere forceps",
    "monopolar curved scissors",
    "force bipolar",
    "prograsp forceps",
    "vessel sealer",
    "bipolar forceps",
    "clip applier",
    "tipup fenestrated grasper",
    "permanent cautery hook",
    "suction irrigator",
    "grasping retractor",
    "stapler",
    "bipolar dissector",
];

/// Normalizes a raw label string.
///
/// Brackets, quotes, hyphens and backslashes are dropped, underscores become
/// spaces, and the result is lowercased with whitespace trimmed and collapsed.
pub fn standardize_label(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .filter(|c| !FORBIDDEN.contains(c))
        .map(|c| if c == '_' { ' ' } else { c })
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolLabel {
    pub id: usize,
    pub name: String,
}

/// Dense, validated list of tool labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCatalog {
    labels: Vec<ToolLabel>,
}

impl ToolCatalog {
    /// Builds a catalog from raw names, standardizing each one.
    pub fn from_raw<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.len() > MAX_CLASSES {
            return Err(Error::invalid(format!(
                "at most {MAX_CLASSES} tools are supported, got {}",
                names.len()
            )));
        }
        let mut labels: Vec<ToolLabel> = Vec::with_capacity(names.len());
        for (id, raw) in names.iter().enumerate() {
            let name = standardize_label(raw.as_ref());
            if name.is_empty() {
                return Err(Error::invalid(format!("tool {id} has an empty name")));
            }
            if labels.iter().any(|l| l.name == name) {
                return Err(Error::invalid(format!("duplicate tool name {name:?}")));
            }
            labels.push(ToolLabel { id, name });
        }
        Ok(Self { labels })
    }

    pub fn default_tools() -> Self {
        Self::from_raw(&DEFAULT_TOOL_NAMES).expect("default tool names are valid")
    }

    /// Catalog with generic names `tool 0`, `tool 1`, ...
    pub fn generic(num_classes: usize) -> Result<Self> {
        let names: Vec<String> = (0..num_classes).map(|i| format!("tool {i}")).collect();
        Self::from_raw(&names)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ToolLabel] {
        &self.labels
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(|l| l.name.as_str())
    }

    pub fn lookup(&self, raw: &str) -> Option<usize> {
        let name = standardize_label(raw);
        self.labels.iter().find(|l| l.name == name).map(|l| l.id)
    }
}

/// Set of class ids below [`MAX_CLASSES`], stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u64);

impl LabelSet {
    pub const fn empty() -> Self {
        LabelSet(0)
    }

    /// Builds a set, rejecting ids `>= num_classes` and duplicates.
    pub fn from_ids(ids: &[usize], num_classes: usize) -> Result<Self> {
        if num_classes > MAX_CLASSES {
            return Err(Error::invalid(format!("class count {num_classes} exceeds {MAX_CLASSES}")));
        }
        let mut set = LabelSet::empty();
        for &id in ids {
            if id >= num_classes {
                return Err(Error::invalid(format!("label id {id} out of range [0, {num_classes})")));
            }
            if set.contains(id) {
                return Err(Error::invalid(format!("duplicate label id {id}")));
            }
            set.insert(id);
        }
        Ok(set)
    }

    pub fn full(num_classes: usize) -> Self {
        if num_classes >= 64 {
            LabelSet(u64::MAX)
        } else {
            LabelSet((1u64 << num_classes) - 1)
        }
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, id: usize) -> bool {
        id < MAX_CLASSES && self.0 & (1u64 << id) != 0
    }

    /// Panics if `id >= MAX_CLASSES`.
    pub fn insert(&mut self, id: usize) {
        assert!(id < MAX_CLASSES, "label id {id} out of range");
        self.0 |= 1u64 << id;
    }

    pub fn remove(&mut self, id: usize) {
        if id < MAX_CLASSES {
            self.0 &= !(1u64 << id);
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Ids in increasing order.
    pub fn ids(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_CLASSES).filter(move |&i| bits & (1u64 << i) != 0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.ids().collect()
    }

    pub fn max_id(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros() as usize)
        }
    }

    pub fn fits(self, num_classes: usize) -> bool {
        self.max_id().is_none_or(|m| m < num_classes)
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.ids()).finish()
    }
}

/// Comma-joined ids, empty string for the empty set.
impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in self.ids() {
            if !first {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(LabelSet::empty());
        }
        let ids = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::invalid(format!("bad label id {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LabelSet::from_ids(&ids, MAX_CLASSES)
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = LabelSet::empty();
        for id in iter {
            set.insert(id);
        }
        set
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.ids())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(deserializer)?;
        LabelSet::from_ids(&ids, MAX_CLASSES).map_err(serde::de::Error::custom)
    }
}

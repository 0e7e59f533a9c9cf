//! Run-directory layout, stage records and exit-code mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;

use labelfix::util::sha256_hex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Missing(String),
    Numerical(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Missing(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Missing(m) => write!(f, "missing prerequisite: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<labelfix::Error> for Failure {
    fn from(e: labelfix::Error) -> Self {
        match e {
            labelfix::Error::Numerical(m) => Failure::Numerical(m),
            labelfix::Error::InvalidArgument(_) | labelfix::Error::InvalidSmoothing(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub const DATASET: &str = "dataset.manifest";
pub const SUMMARY: &str = "dataset-summary.json";
pub const SPLIT: &str = "split.json";
pub const BASELINE: &str = "baseline.ckpt";
pub const AL_ENSEMBLE: &str = "al/ensemble.ckpt";
pub const AL_STATE: &str = "al/state.json";
pub const AUDIT: &str = "al/audit.jsonl";
pub const EFFORT: &str = "al/effort.csv";
pub const TEACHER: &str = "teacher.ckpt";
pub const TEACHER_VAL: &str = "teacher-validation.json";
pub const PSEUDO: &str = "pseudo.manifest";
pub const REPORTS: &str = "reports";

/// Stage that produces each prerequisite, for error messages.
fn producer(rel: &str) -> &'static str {
    match rel {
        DATASET | SUMMARY => "datagen",
        SPLIT => "split",
        BASELINE => "baseline",
        AL_ENSEMBLE | AL_STATE | AUDIT | EFFORT => "al",
        TEACHER | TEACHER_VAL => "teacher",
        PSEUDO => "pseudo",
        r if r.starts_with("student") => "student",
        _ => "eval",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("stages"))?;
        fs::create_dir_all(root.join("al"))?;
        fs::create_dir_all(root.join(REPORTS))?;
        Ok(Self { root })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn require(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Failure::Missing(format!("{} not found; run `labelfix {}` first", p.display(), producer(rel))))
        }
    }

    pub fn hash_file(&self, rel: &str) -> CliResult<String> {
        Ok(sha256_hex(&fs::read(self.require(rel)?)?))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(rel), text)?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> CliResult<T> {
        let text = fs::read_to_string(self.require(rel)?)?;
        serde_json::from_str(&text).map_err(|e| Failure::Other(anyhow::anyhow!("{rel}: {e}")))
    }

    fn record_path(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.json"))
    }

    fn hashes(&self, files: &[String]) -> CliResult<BTreeMap<String, String>> {
        files.iter().map(|f| Ok((f.clone(), self.hash_file(f)?))).collect()
    }

    /// Runs `body` unless a record shows the same config and inputs produced
    /// outputs that are still on disk unchanged. Returns whether it ran.
    pub fn run_stage(
        &self,
        stage: &str,
        config_hash: &str,
        inputs: &[String],
        outputs: &[String],
        force: bool,
        body: impl FnOnce() -> CliResult<()>,
    ) -> CliResult<bool> {
        let input_hashes = self.hashes(inputs)?;
        if !force {
            if let Ok(text) = fs::read_to_string(self.record_path(stage)) {
                if let Ok(rec) = serde_json::from_str::<StageRecord>(&text) {
                    let outputs_intact = outputs.iter().all(|o| {
                        rec.outputs.get(o).is_some_and(|h| self.hash_file(o).is_ok_and(|now| &now == h))
                    });
                    if rec.config_hash == config_hash && rec.inputs == input_hashes && outputs_intact {
                        println!("{stage}: up to date");
                        return Ok(false);
                    }
                }
            }
        }
        body()?;
        let rec = StageRecord {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            inputs: input_hashes,
            outputs: self.hashes(outputs)?,
        };
        self.write_json(&format!("stages/{stage}.json"), &rec)?;
        Ok(true)
    }
}

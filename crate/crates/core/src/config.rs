//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments. Unknown keys are errors. Every key
//! has a desk-scale default; the longer schedule and the full clean-set size
//! are available through `scale = paper`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::NoiseSpec;
use crate::error::{Error, Result};
use crate::experiments::BenchmarkConfig;
use crate::sampling::WeightReduction;
use crate::selftrain::PseudoTargetMode;
use crate::util::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Scripted,
    Noisy,
    Serve,
}

impl OracleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scripted" => Some(Self::Scripted),
            "noisy" => Some(Self::Noisy),
            "serve" => Some(Self::Serve),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Scripted => "scripted",
            Self::Noisy => "noisy",
            Self::Serve => "serve",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Load this manifest instead of generating data.
    pub manifest: Option<PathBuf>,
    pub benchmark: BenchmarkConfig,
    pub oracle: OracleKind,
    pub oracle_flip_rate: f64,
    pub label_smoothing: Option<f64>,
    pub wdl: bool,
    pub serve_addr: String,
    pub lease_ttl_secs: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("run"),
            manifest: None,
            benchmark: BenchmarkConfig::default(),
            oracle: OracleKind::Scripted,
            oracle_flip_rate: 0.1,
            label_smoothing: None,
            wdl: false,
            serve_addr: "127.0.0.1:8080".into(),
            lease_ttl_secs: 120,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn fmt_opt(p: Option<f64>) -> String {
    p.map_or_else(|| "off".to_string(), |p| p.to_string())
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let b = &mut self.benchmark;
        let v = value.trim();
        match key.trim() {
            "scale" => match v {
                "desk" => {
                    b.schedule = crate::train::TrainSchedule::default();
                    b.al = crate::active::ALConfig::default();
                }
                "paper" => {
                    b.schedule = crate::train::TrainSchedule::paper_scale();
                    b.al = crate::active::ALConfig::paper_scale();
                }
                _ => return Err(Error::invalid(format!("scale: expected desk or paper, got {v:?}"))),
            },
            "seed" => self.seed = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "manifest" => self.manifest = if v.is_empty() || v == "none" { None } else { Some(PathBuf::from(v)) },
            "classes" => b.num_classes = parse_num(key, v)?,
            "dim" => b.feature_dim = parse_num(key, v)?,
            "groups" => b.noise.groups = parse_num(key, v)?,
            "frames_min" => b.noise.frames_min = parse_num(key, v)?,
            "frames_max" => b.noise.frames_max = parse_num(key, v)?,
            "p_absent" => b.noise.p_absent = parse_num(key, v)?,
            "p_spurious" => b.noise.p_spurious = parse_num(key, v)?,
            "imbalance_exponent" => b.noise.imbalance_exponent = parse_num(key, v)?,
            "signal_scale" => b.noise.signal_scale = parse_num(key, v)?,
            "noise_sigma" => b.noise.noise_sigma = parse_num(key, v)?,
            "test_fraction" => b.test_fraction = parse_num(key, v)?,
            "phase1_epochs" => b.schedule.phase1_epochs = parse_num(key, v)?,
            "phase2_epochs" => b.schedule.phase2_epochs = parse_num(key, v)?,
            "lr_phase1" => b.schedule.lr_phase1 = parse_num(key, v)?,
            "lr_phase2_max" => b.schedule.lr_phase2_max = parse_num(key, v)?,
            "lr_phase2_min" => b.schedule.lr_phase2_min = parse_num(key, v)?,
            "batch_size" => b.schedule.batch_size = parse_num(key, v)?,
            "k_target" => b.al.k_target = parse_num(key, v)?,
            "per_iteration" => b.al.per_iteration = parse_num(key, v)?,
            "finetune_batch" => b.al.finetune_batch = parse_num(key, v)?,
            "finetune_epochs" => b.al.finetune_epochs = parse_num(key, v)?,
            "finetune_lr" => b.al.finetune_lr = parse_num(key, v)?,
            "max_iterations" => b.al.max_iterations = parse_num(key, v)?,
            "al_from_scratch" => b.al.from_scratch = parse_bool(key, v)?,
            "clean_train_fraction" => b.al.clean_train_fraction = parse_num(key, v)?,
            "smoothing_p" => b.smoothing_p = parse_num(key, v)?,
            "wdl_epochs" => b.finetune.phase1_epochs = parse_num(key, v)?,
            "wdl_lr" => {
                let lr = parse_num(key, v)?;
                b.finetune.lr_phase1 = lr;
                b.finetune.lr_phase2_max = lr;
                b.finetune.lr_phase2_min = lr;
            }
            "wdl_batch" => b.finetune.batch_size = parse_num(key, v)?,
            "weight_reduction" => {
                b.weight_reduction = match v {
                    "mean" => WeightReduction::Mean,
                    "max" => WeightReduction::Max,
                    _ => return Err(Error::invalid(format!("weight_reduction: expected mean or max, got {v:?}"))),
                }
            }
            "pseudo_mode" => {
                b.pseudo_mode = PseudoTargetMode::parse(v)
                    .ok_or_else(|| Error::invalid(format!("pseudo_mode: expected soft or hard-top3, got {v:?}")))?
            }
            "student_warm_start" => b.warm_start = parse_bool(key, v)?,
            "teacher_warm_start" => b.teacher_warm_start = parse_bool(key, v)?,
            "oracle" => {
                self.oracle = OracleKind::parse(v)
                    .ok_or_else(|| Error::invalid(format!("oracle: expected scripted, noisy or serve, got {v:?}")))?
            }
            "oracle_flip_rate" => self.oracle_flip_rate = parse_num(key, v)?,
            "label_smoothing" => {
                self.label_smoothing = if v == "off" || v == "none" { None } else { Some(parse_num(key, v)?) }
            }
            "wdl" => self.wdl = parse_bool(key, v)?,
            "serve_addr" => self.serve_addr = v.to_string(),
            "lease_ttl_secs" => self.lease_ttl_secs = parse_num(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key = value, got {line:?}") })?;
            cfg.set(k, v).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        if !(0.0..=1.0).contains(&self.oracle_flip_rate) {
            return Err(Error::invalid("oracle_flip_rate must be in [0, 1]"));
        }
        if let Some(p) = self.label_smoothing {
            if !(p > 0.5 && p <= 1.0) {
                return Err(Error::InvalidSmoothing(format!("p must be in (0.5, 1], got {p}")));
            }
        }
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return Err(Error::invalid(format!("manifest {} does not exist", m.display())));
            }
        }
        if self.lease_ttl_secs == 0 {
            return Err(Error::invalid("lease_ttl_secs must be positive"));
        }
        Ok(())
    }

    /// Settings that determine artifact contents, in a fixed order. The
    /// output directory, the oracle and the per-invocation student flags are
    /// excluded so all stages of one run share a hash; the stages they affect
    /// record them separately.
    pub fn hashed_entries(&self) -> BTreeMap<&'static str, String> {
        let b = &self.benchmark;
        let n: &NoiseSpec = &b.noise;
        let mut m = BTreeMap::new();
        m.insert("seed", self.seed.to_string());
        m.insert("manifest", self.manifest.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string()));
        m.insert("classes", b.num_classes.to_string());
        m.insert("dim", b.feature_dim.to_string());
        m.insert("groups", n.groups.to_string());
        m.insert("frames_min", n.frames_min.to_string());
        m.insert("frames_max", n.frames_max.to_string());
        m.insert("p_absent", n.p_absent.to_string());
        m.insert("p_spurious", n.p_spurious.to_string());
        m.insert("imbalance_exponent", n.imbalance_exponent.to_string());
        m.insert("signal_scale", n.signal_scale.to_string());
        m.insert("noise_sigma", n.noise_sigma.to_string());
        m.insert("test_fraction", b.test_fraction.to_string());
        m.insert("phase1_epochs", b.schedule.phase1_epochs.to_string());
        m.insert("phase2_epochs", b.schedule.phase2_epochs.to_string());
        m.insert("lr_phase1", b.schedule.lr_phase1.to_string());
        m.insert("lr_phase2_max", b.schedule.lr_phase2_max.to_string());
        m.insert("lr_phase2_min", b.schedule.lr_phase2_min.to_string());
        m.insert("batch_size", b.schedule.batch_size.to_string());
        m.insert("k_target", b.al.k_target.to_string());
        m.insert("per_iteration", b.al.per_iteration.to_string());
        m.insert("finetune_batch", b.al.finetune_batch.to_string());
        m.insert("finetune_epochs", b.al.finetune_epochs.to_string());
        m.insert("finetune_lr", b.al.finetune_lr.to_string());
        m.insert("max_iterations", b.al.max_iterations.to_string());
        m.insert("al_from_scratch", b.al.from_scratch.to_string());
        m.insert("clean_train_fraction", b.al.clean_train_fraction.to_string());
        m.insert("smoothing_p", b.smoothing_p.to_string());
        m.insert("wdl_epochs", b.finetune.phase1_epochs.to_string());
        m.insert("wdl_lr", b.finetune.lr_phase1.to_string());
        m.insert("wdl_batch", b.finetune.batch_size.to_string());
        m.insert(
            "weight_reduction",
            match b.weight_reduction {
                WeightReduction::Mean => "mean",
                WeightReduction::Max => "max",
            }
            .into(),
        );
        m.insert("pseudo_mode", b.pseudo_mode.as_str().into());
        m.insert("student_warm_start", b.warm_start.to_string());
        m.insert("teacher_warm_start", b.teacher_warm_start.to_string());
        m
    }

    /// Canonical text of every setting, parseable by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.hashed_entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "oracle = {}", self.oracle.as_str());
        let _ = writeln!(out, "oracle_flip_rate = {}", self.oracle_flip_rate);
        let _ = writeln!(out, "out = {}", self.out.display());
        let _ = writeln!(out, "label_smoothing = {}", fmt_opt(self.label_smoothing));
        let _ = writeln!(out, "wdl = {}", self.wdl);
        let _ = writeln!(out, "serve_addr = {}", self.serve_addr);
        let _ = writeln!(out, "lease_ttl_secs = {}", self.lease_ttl_secs);
        out
    }

    pub fn config_hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.hashed_entries() {
            let _ = writeln!(text, "{k}={v}");
        }
        sha256_hex(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_roundtrip() {
        let cfg = RunConfig::parse("# comment\nseed = 7\np_absent=0.35\nlabel_smoothing = 0.9\nwdl = true\npseudo_mode = hard-top3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.benchmark.noise.p_absent, 0.35);
        assert_eq!(cfg.label_smoothing, Some(0.9));
        assert!(cfg.wdl);
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let err = RunConfig::parse("seed = 1\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(RunConfig::parse("seed\n").is_err());
        assert!(RunConfig::parse("seed = x\n").is_err());
    }

    #[test]
    fn hash_ignores_output_and_student_flags() {
        let a = RunConfig::default();
        let b = RunConfig::parse("out = elsewhere\nwdl = true\nlabel_smoothing = 0.8\n").unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig::parse("seed = 2\n").unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn paper_scale_switch() {
        let c = RunConfig::parse("scale = paper\n").unwrap();
        assert_eq!(c.benchmark.schedule.phase1_epochs, 12);
        assert_eq!(c.benchmark.al.k_target, 24_997);
    }
}
